//! Rank correlation and metadata studies.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{pair_weights, InfluenceRanking, Weighting};
use crate::error::{Error, Result};
use crate::types::InfluenceTensor;

/// Spearman's rho between two orderings of the same ids, by the closed
/// formula `1 - 6 sum d^2 / (n (n^2 - 1))`.
pub fn spearman(a: &[String], b: &[String]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::IdMismatch(format!("{} vs {} ids", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Degenerate("rank correlation needs at least two ids".into()));
    }
    let pos_b: BTreeMap<&str, usize> = b.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    if pos_b.len() != n || a.iter().collect::<HashSet<_>>().len() != n {
        return Err(Error::IdMismatch("duplicate ids".into()));
    }
    let mut d2 = 0.0;
    for (i, id) in a.iter().enumerate() {
        let j = *pos_b
            .get(id.as_str())
            .ok_or_else(|| Error::IdMismatch(format!("`{id}` missing from the second ranking")))?;
        d2 += (i as f64 - j as f64).powi(2);
    }
    let n = n as f64;
    Ok(1.0 - 6.0 * d2 / (n * (n * n - 1.0)))
}

/// Ranks starting at 1, ties sharing their average rank.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut k = 0;
    while k < order.len() {
        let mut m = k;
        while m + 1 < order.len() && x[order[m + 1]] == x[order[k]] {
            m += 1;
        }
        let avg = (k + m) as f64 / 2.0 + 1.0;
        for &i in &order[k..=m] {
            ranks[i] = avg;
        }
        k = m + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho of paired scores with average-rank tie handling.
pub fn spearman_scores(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::Degenerate("rank correlation needs at least two values".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rank correlation input"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::Degenerate("one side has no rank variance".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// Spearman's rho between exerted influence and the metadata value.
    WorldRank,
    /// Per entity, the correlation between metadata differences to every
    /// other entity and the influence it exerts on them; averaged over
    /// entities where it is defined.
    Direction,
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "world_rank" | "world-rank" => Ok(CorrelationMode::WorldRank),
            "direction" => Ok(CorrelationMode::Direction),
            _ => Err(Error::InvalidArgument(format!("unknown correlation mode `{s}`"))),
        }
    }
}

pub fn correlate_metadata(
    ranking: &InfluenceRanking,
    metadata: &BTreeMap<String, f64>,
    mode: CorrelationMode,
    tensor: &InfluenceTensor,
) -> Result<f64> {
    let lookup = |id: &str| metadata.get(id).copied().ok_or_else(|| Error::MissingMetadata(id.to_string()));
    match mode {
        CorrelationMode::WorldRank => {
            let scores: Vec<f64> = ranking.rows.iter().map(|r| r.exerted).collect();
            let meta = ranking.rows.iter().map(|r| lookup(&r.id)).collect::<Result<Vec<_>>>()?;
            spearman_scores(&scores, &meta)
        }
        CorrelationMode::Direction => {
            let ids = tensor.entities();
            let meta = ids.iter().map(|id| lookup(id)).collect::<Result<Vec<_>>>()?;
            let w = pair_weights(tensor, Weighting::Lag);
            let mut per_entity = Vec::new();
            for i in 0..ids.len() {
                let others: Vec<usize> = (0..ids.len()).filter(|&j| j != i).collect();
                let diff: Vec<f64> = others.iter().map(|&j| meta[i] - meta[j]).collect();
                let exerted: Vec<f64> = others.iter().map(|&j| w[i][j]).collect();
                if let Some(r) = pearson(&diff, &exerted) {
                    per_entity.push(r);
                }
            }
            if per_entity.is_empty() {
                return Err(Error::Degenerate(
                    "no entity has both varying metadata differences and varying exerted influence".into(),
                ));
            }
            Ok(per_entity.iter().sum::<f64>() / per_entity.len() as f64)
        }
    }
}
