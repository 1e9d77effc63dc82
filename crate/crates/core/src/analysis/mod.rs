//! Rankings, graphs, dynamics and correlation studies on influence tensors.

mod correlate;
mod dynamics;
mod graph;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use correlate::{correlate_metadata, spearman, spearman_scores, CorrelationMode};
pub use dynamics::{influence_dynamics, Dynamics, DEFAULT_STRIDE, DEFAULT_WINDOW};
pub use graph::{export_graph, parse_dot, Threshold};

use crate::types::{Axis, InfluenceTensor};

/// What an edge contributes to its endpoints' scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// The discovered lag: long-term influence counts more.
    #[default]
    Lag,
    /// The reduction in mean squared error from adding the influencer.
    DeltaMse,
}

impl Weighting {
    fn of(self, e: &crate::types::InfluenceEdge) -> f64 {
        match self {
            Weighting::Lag => e.lag as f64,
            Weighting::DeltaMse => e.delta_mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub id: String,
    pub exerted: f64,
    pub received: f64,
    pub net: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRanking {
    pub axis: Axis,
    /// By net influence descending, ties by id.
    pub rows: Vec<RankRow>,
}

impl InfluenceRanking {
    pub fn get(&self, id: &str) -> Option<&RankRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.id.clone()).collect()
    }

    /// `id,exerted,received,net`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,exerted,received,net\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.id, r.exerted, r.received, r.net);
        }
        s
    }
}

pub fn rank_entities(tensor: &InfluenceTensor) -> InfluenceRanking {
    rank_entities_weighted(tensor, Weighting::Lag)
}

pub fn rank_entities_weighted(tensor: &InfluenceTensor, weighting: Weighting) -> InfluenceRanking {
    let n = tensor.entities().len();
    let mut exerted = vec![0.0; n];
    let mut received = vec![0.0; n];
    for e in tensor.edges() {
        let w = weighting.of(e);
        // Edges always reference known entities; the tensor validated them.
        let s = tensor.entity_index(&e.src).expect("edge source is an entity");
        let d = tensor.entity_index(&e.dst).expect("edge destination is an entity");
        exerted[s] += w;
        received[d] += w;
    }
    let mut rows: Vec<RankRow> = tensor
        .entities()
        .iter()
        .enumerate()
        .map(|(i, id)| RankRow {
            id: id.clone(),
            exerted: exerted[i],
            received: received[i],
            net: exerted[i] - received[i],
        })
        .collect();
    rows.sort_by(|a, b| b.net.total_cmp(&a.net).then_with(|| a.id.cmp(&b.id)));
    InfluenceRanking { axis: tensor.axis(), rows }
}

/// Aggregate weight per ordered entity pair, summed over contexts.
pub fn pair_weights(tensor: &InfluenceTensor, weighting: Weighting) -> Vec<Vec<f64>> {
    let n = tensor.entities().len();
    let mut w = vec![vec![0.0; n]; n];
    for e in tensor.edges() {
        let s = tensor.entity_index(&e.src).expect("edge source is an entity");
        let d = tensor.entity_index(&e.dst).expect("edge destination is an entity");
        w[s][d] += weighting.of(e);
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::InfluenceEdge;
    use proptest::prelude::*;

    pub(crate) fn tensor(entities: &[&str], contexts: &[&str], edges: &[(&str, &str, &str, u8)]) -> InfluenceTensor {
        InfluenceTensor::from_edges(
            Axis::Unit,
            entities.iter().map(|s| s.to_string()).collect(),
            contexts.iter().map(|s| s.to_string()).collect(),
            edges.iter().map(|&(s, d, c, lag)| InfluenceEdge {
                src: s.into(),
                dst: d.into(),
                context: c.into(),
                lag,
                p_value: 0.01,
                delta_mse: 0.1 * lag as f64,
            }),
        )
        .unwrap()
    }

    fn row(r: &InfluenceRanking, id: &str) -> (f64, f64, f64) {
        let x = r.get(id).unwrap();
        (x.exerted, x.received, x.net)
    }

    #[test]
    fn ranking_examples() {
        let r = rank_entities(&tensor(&["A", "B"], &["S1"], &[("A", "B", "S1", 2)]));
        assert_eq!(row(&r, "A"), (2.0, 0.0, 2.0));
        assert_eq!(row(&r, "B"), (0.0, 2.0, -2.0));
        assert_eq!(r.rows[0].id, "A");

        let r = rank_entities(&tensor(&["A", "B"], &["S1"], &[]));
        assert!(r.rows.iter().all(|x| (x.exerted, x.received, x.net) == (0.0, 0.0, 0.0)));

        let r = rank_entities(&tensor(&["B", "A"], &["S1"], &[("A", "B", "S1", 1), ("B", "A", "S1", 1)]));
        assert_eq!(row(&r, "A"), (1.0, 1.0, 0.0));
        assert_eq!(row(&r, "B"), (1.0, 1.0, 0.0));
        assert_eq!(r.ids(), ["A", "B"]);
        assert_eq!(r.to_csv(), "id,exerted,received,net\nA,1,1,0\nB,1,1,0\n");
    }

    #[test]
    fn delta_mse_weighting() {
        let t = tensor(&["A", "B"], &["S1"], &[("A", "B", "S1", 3)]);
        let r = rank_entities_weighted(&t, Weighting::DeltaMse);
        assert!((r.get("A").unwrap().exerted - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn exerted_equals_received(raw in proptest::collection::vec((0usize..5, 0usize..5, 0usize..3, 1u8..=8), 0..30)) {
            let ids = ["a", "b", "c", "d", "e"];
            let ctx = ["x", "y", "z"];
            let mut seen = std::collections::HashSet::new();
            let edges: Vec<(&str, &str, &str, u8)> = raw
                .into_iter()
                .filter(|(s, d, c, _)| s != d && seen.insert((*s, *d, *c)))
                .map(|(s, d, c, l)| (ids[s], ids[d], ctx[c], l))
                .collect();
            let r = rank_entities(&tensor(&ids, &ctx, &edges));
            let ex: f64 = r.rows.iter().map(|x| x.exerted).sum();
            let re: f64 = r.rows.iter().map(|x| x.received).sum();
            prop_assert_eq!(ex, re);
            prop_assert!(r.rows.windows(2).all(|w| w[0].net >= w[1].net));
        }
    }
}
