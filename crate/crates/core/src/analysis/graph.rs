//! Graphviz export of aggregated influence relations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{pair_weights, Weighting};
use crate::error::{Error, Result};
use crate::types::InfluenceTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Keep only pairs whose weight exceeds the mean over connected pairs.
    #[default]
    AboveMean,
    Raw,
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "above_mean" | "above-mean" => Ok(Threshold::AboveMean),
            "raw" => Ok(Threshold::Raw),
            _ => Err(Error::InvalidArgument(format!("unknown threshold `{s}`"))),
        }
    }
}

fn quote(id: &str) -> String {
    format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
}

/// DOT digraph with one arc per connected ordered pair, weighted by the
/// lag sum across contexts. Nodes and arcs follow the tensor's entity order.
pub fn export_graph(tensor: &InfluenceTensor, threshold: Threshold) -> String {
    let w = pair_weights(tensor, Weighting::Lag);
    let ids = tensor.entities();
    let mut arcs: Vec<(usize, usize, f64)> = Vec::new();
    for (s, row) in w.iter().enumerate() {
        for (d, &x) in row.iter().enumerate() {
            if x > 0.0 {
                arcs.push((s, d, x));
            }
        }
    }
    if threshold == Threshold::AboveMean && !arcs.is_empty() {
        let mean = arcs.iter().map(|a| a.2).sum::<f64>() / arcs.len() as f64;
        arcs.retain(|a| a.2 > mean);
    }
    let mut used = vec![false; ids.len()];
    for &(s, d, _) in &arcs {
        used[s] = true;
        used[d] = true;
    }
    let mut out = String::from("digraph influence {\n");
    for (id, _) in ids.iter().zip(&used).filter(|(_, u)| **u) {
        let _ = writeln!(out, "  {};", quote(id));
    }
    for (s, d, x) in arcs {
        let _ = writeln!(out, "  {} -> {} [weight={x}, label=\"{x}\"];", quote(&ids[s]), quote(&ids[d]));
    }
    out.push_str("}\n");
    out
}

fn unquote(token: &str) -> Result<String> {
    let t = token.trim();
    let inner = t
        .strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .ok_or_else(|| Error::Parse(format!("expected a quoted id, got `{t}`")))?;
    let mut out = String::new();
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            out.push(chars.next().ok_or_else(|| Error::Parse("dangling escape".into()))?);
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

/// Reads back the arcs written by [`export_graph`] as `(src, dst, weight)`.
pub fn parse_dot(text: &str) -> Result<Vec<(String, String, f64)>> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    match lines.next() {
        Some(l) if l.starts_with("digraph") && l.ends_with('{') => {}
        _ => return Err(Error::Parse("missing digraph header".into())),
    }
    let mut arcs = Vec::new();
    let mut closed = false;
    for line in lines {
        if line == "}" {
            closed = true;
            continue;
        }
        let body = line
            .strip_suffix(';')
            .ok_or_else(|| Error::Parse(format!("statement without `;`: {line}")))?;
        let Some((lhs, rest)) = body.split_once(" -> ") else {
            unquote(body)?;
            continue;
        };
        let (rhs, attrs) = rest
            .split_once(" [")
            .ok_or_else(|| Error::Parse(format!("arc without attributes: {line}")))?;
        let weight = attrs
            .split(',')
            .find_map(|a| a.trim().strip_prefix("weight="))
            .ok_or_else(|| Error::Parse(format!("arc without weight: {line}")))?
            .trim_end_matches(']')
            .parse::<f64>()
            .map_err(|e| Error::Parse(e.to_string()))?;
        arcs.push((unquote(lhs)?, unquote(rhs)?, weight));
    }
    if !closed {
        return Err(Error::Parse("unterminated digraph".into()));
    }
    Ok(arcs)
}

#[cfg(test)]
mod tests {
    use super::super::tests::tensor;
    use super::*;

    #[test]
    fn single_edge() {
        let t = tensor(&["A", "B", "C"], &["S1"], &[("A", "B", "S1", 2)]);
        let dot = export_graph(&t, Threshold::Raw);
        assert_eq!(
            dot,
            "digraph influence {\n  \"A\";\n  \"B\";\n  \"A\" -> \"B\" [weight=2, label=\"2\"];\n}\n"
        );
    }

    #[test]
    fn above_mean_threshold() {
        let t = tensor(
            &["A", "B", "C", "D"],
            &["S1"],
            &[("A", "B", "S1", 1), ("B", "C", "S1", 1), ("C", "D", "S1", 4)],
        );
        let arcs = parse_dot(&export_graph(&t, Threshold::AboveMean)).unwrap();
        assert_eq!(arcs, vec![("C".to_string(), "D".to_string(), 4.0)]);
    }

    #[test]
    fn empty_graph_is_valid() {
        let t = tensor(&["A", "B"], &["S1"], &[]);
        let dot = export_graph(&t, Threshold::AboveMean);
        assert_eq!(dot, "digraph influence {\n}\n");
        assert!(parse_dot(&dot).unwrap().is_empty());
    }

    #[test]
    fn round_trip_aggregates_contexts() {
        let t = tensor(
            &["x\"y", "B", "C"],
            &["S1", "S2"],
            &[("x\"y", "B", "S1", 2), ("x\"y", "B", "S2", 3), ("C", "x\"y", "S2", 1)],
        );
        let arcs = parse_dot(&export_graph(&t, Threshold::Raw)).unwrap();
        assert_eq!(
            arcs,
            vec![("x\"y".to_string(), "B".to_string(), 5.0), ("C".to_string(), "x\"y".to_string(), 1.0)]
        );
        assert!(parse_dot("digraph g {\n  \"A\" -> \"B\";\n").is_err());
    }
}
