//! Seeded synthetic trajectories with planted lagged influences.
//!
//! Each trajectory follows a latent AR(1) process; a planted edge adds
//! `coefficient * source(t - lag)` to its destination. An optional shared
//! per-style shock couples all units of a style, and an optional sinusoid
//! with a random phase is added to the output. Every trajectory is then
//! mapped affinely onto `[0.1, 0.9]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::coherent::network_seed;
use crate::ingest::style_names;
use crate::types::{Axis, InfluenceEdge, InfluenceTensor, TrajectorySet};

const LOW: f64 = 0.1;
const HIGH: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEdge {
    #[serde(default = "unit_axis")]
    pub axis: Axis,
    pub src: String,
    pub dst: String,
    pub context: String,
    pub lag: u8,
    pub coefficient: f64,
}

fn unit_axis() -> Axis {
    Axis::Unit
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seasonality {
    pub amplitude: f64,
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub units: usize,
    pub styles: usize,
    #[serde(rename = "T", alias = "length")]
    pub length: usize,
    pub planted_edges: Vec<PlantedEdge>,
    pub noise_std: f64,
    pub ar_coefficient: f64,
    /// Standard deviation of a shock shared by every unit of a style.
    pub common_std: f64,
    pub seasonal: Option<Seasonality>,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            units: 20,
            styles: 5,
            length: 200,
            planted_edges: Vec::new(),
            noise_std: 0.05,
            ar_coefficient: 0.3,
            common_std: 0.0,
            seasonal: None,
            burn_in: 100,
            seed: 0,
        }
    }
}

pub fn unit_names(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("U{i}")).collect()
}

impl SynthConfig {
    /// One random unit-axis edge per style with a random lag in `1..=8`.
    pub fn with_random_edges(mut self, coefficient: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(network_seed(self.seed, usize::MAX, 0, 0));
        let units = unit_names(self.units);
        self.planted_edges = style_names(self.styles)
            .into_iter()
            .map(|context| {
                let a = rng.random_range(0..self.units);
                let b = (a + rng.random_range(1..self.units)) % self.units;
                PlantedEdge {
                    axis: Axis::Unit,
                    src: units[a].clone(),
                    dst: units[b].clone(),
                    context,
                    lag: rng.random_range(1..=8),
                    coefficient,
                }
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.units == 0 || self.styles == 0 {
            return bad("need at least one unit and one style".into());
        }
        if self.length < 2 {
            return bad("T must be at least 2".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and non-negative".into());
        }
        if !(self.common_std >= 0.0 && self.common_std.is_finite()) {
            return bad("common_std must be finite and non-negative".into());
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return bad("|ar_coefficient| must be below 1 for stationarity".into());
        }
        if let Some(s) = self.seasonal {
            if s.period < 2 || !s.amplitude.is_finite() {
                return bad("seasonal period must be at least 2 with finite amplitude".into());
            }
            if self.length <= s.period {
                return bad(format!("T must exceed the seasonal period {}", s.period));
            }
        }
        let units = unit_names(self.units);
        let styles = style_names(self.styles);
        for e in &self.planted_edges {
            if !(1..=InfluenceTensor::MAX_LAG).contains(&e.lag) {
                return bad(format!("lag {} outside 1..=8", e.lag));
            }
            if !e.coefficient.is_finite() {
                return bad("edge coefficient must be finite".into());
            }
            if e.src == e.dst {
                return bad(format!("self-loop on `{}`", e.src));
            }
            let (entities, contexts) = match e.axis {
                Axis::Unit => (&units, &styles),
                Axis::Style => (&styles, &units),
            };
            for id in [&e.src, &e.dst] {
                if !entities.contains(id) {
                    return bad(format!("unknown {:?} id `{id}` in planted edge", e.axis));
                }
            }
            if !contexts.contains(&e.context) {
                return bad(format!("unknown context `{}` in planted edge", e.context));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub set: TrajectorySet,
    pub unit_truth: InfluenceTensor,
    pub style_truth: InfluenceTensor,
    /// Series before the affine rescaling, in set order.
    pub latent: Vec<Vec<f64>>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let units = unit_names(cfg.units);
    let styles = style_names(cfg.styles);
    let (ns, nu) = (cfg.styles, cfg.units);
    let idx = |s: usize, u: usize| s * nu + u;
    let total = cfg.burn_in + cfg.length;

    // Incoming terms per destination trajectory: (source, lag, coefficient).
    let mut incoming: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); ns * nu];
    let mut unit_truth = InfluenceTensor::empty(Axis::Unit, units.clone(), styles.clone());
    let mut style_truth = InfluenceTensor::empty(Axis::Style, styles.clone(), units.clone());
    let pos = |v: &[String], id: &str| v.iter().position(|x| x == id).expect("validated id");
    for e in &cfg.planted_edges {
        let (src, dst) = match e.axis {
            Axis::Unit => {
                let s = pos(&styles, &e.context);
                (idx(s, pos(&units, &e.src)), idx(s, pos(&units, &e.dst)))
            }
            Axis::Style => {
                let u = pos(&units, &e.context);
                (idx(pos(&styles, &e.src), u), idx(pos(&styles, &e.dst), u))
            }
        };
        incoming[dst].push((src, e.lag as usize, e.coefficient));
        let edge = InfluenceEdge {
            src: e.src.clone(),
            dst: e.dst.clone(),
            context: e.context.clone(),
            lag: e.lag,
            p_value: 0.0,
            delta_mse: 0.0,
        };
        match e.axis {
            Axis::Unit => unit_truth.insert(edge)?,
            Axis::Style => style_truth.insert(edge)?,
        }
    }

    // Independent noise stream per trajectory and per style.
    let draw = |s: usize, u: usize, scale: f64| -> Vec<f64> {
        if scale == 0.0 {
            return vec![0.0; total];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(network_seed(cfg.seed, s, u, 1));
        (0..total)
            .map(|_| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect::<Vec<f64>>()
    };
    let noise: Vec<Vec<f64>> = (0..ns * nu).map(|i| draw(i / nu, i % nu, cfg.noise_std)).collect();
    let common: Vec<Vec<f64>> = (0..ns).map(|s| draw(s, usize::MAX, cfg.common_std)).collect();

    let mut x = vec![vec![0.0; total]; ns * nu];
    for t in 1..total {
        for i in 0..ns * nu {
            let mut v = cfg.ar_coefficient * x[i][t - 1] + noise[i][t] + common[i / nu][t];
            for &(src, lag, c) in &incoming[i] {
                if t >= lag {
                    v += c * x[src][t - lag];
                }
            }
            x[i][t] = v;
        }
    }
    if x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("planted system is unstable".into()));
    }

    let mut phase_rng = ChaCha8Rng::seed_from_u64(network_seed(cfg.seed, usize::MAX, usize::MAX, 2));
    let latent: Vec<Vec<f64>> = x
        .into_iter()
        .map(|series| {
            let mut out = series[cfg.burn_in..].to_vec();
            if let Some(season) = cfg.seasonal {
                let phase = phase_rng.random_range(0.0..std::f64::consts::TAU);
                for (t, v) in out.iter_mut().enumerate() {
                    let angle = std::f64::consts::TAU * t as f64 / season.period as f64 + phase;
                    *v += season.amplitude * angle.sin();
                }
            }
            out
        })
        .collect();
    let values = latent.iter().map(|s| rescale(s)).collect();
    let set = TrajectorySet::new(styles, units, 0, values)?;
    Ok(SynthOutput { set, unit_truth, style_truth, latent })
}

fn rescale(series: &[f64]) -> Vec<f64> {
    let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return vec![0.5 * (LOW + HIGH); series.len()];
    }
    series.iter().map(|v| LOW + (HIGH - LOW) * (v - lo) / (hi - lo)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    pub precision: f64,
    pub recall: f64,
    /// Share of true positives whose lag matches exactly (1 when there are
    /// no true positives).
    pub lag_accuracy: f64,
    pub true_positives: usize,
    pub lag_matches: usize,
    pub found: usize,
    pub truth: usize,
}

/// Compares nonzero entries of two tensors over the same axes. Precision is
/// 1 when nothing was found.
pub fn score_recovery(found: &InfluenceTensor, truth: &InfluenceTensor) -> Result<Recovery> {
    if !found.same_axes(truth) {
        return Err(Error::AxisMismatch);
    }
    let (mut tp, mut lag_ok) = (0, 0);
    for e in truth.edges() {
        let (s, d, c) = (
            truth.entity_index(&e.src)?,
            truth.entity_index(&e.dst)?,
            truth.contexts().iter().position(|x| *x == e.context).expect("edge context"),
        );
        let got = found.lag(s, d, c);
        if got != 0 {
            tp += 1;
            if got == e.lag {
                lag_ok += 1;
            }
        }
    }
    let (nf, nt) = (found.nonzero(), truth.nonzero());
    Ok(Recovery {
        precision: if nf == 0 { 1.0 } else { tp as f64 / nf as f64 },
        recall: if nt == 0 { 1.0 } else { tp as f64 / nt as f64 },
        lag_accuracy: if tp == 0 { 1.0 } else { lag_ok as f64 / tp as f64 },
        true_positives: tp,
        lag_matches: lag_ok,
        found: nf,
        truth: nt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(src: &str, dst: &str, ctx: &str, lag: u8) -> PlantedEdge {
        PlantedEdge {
            axis: Axis::Unit,
            src: src.into(),
            dst: dst.into(),
            context: ctx.into(),
            lag,
            coefficient: 0.9,
        }
    }

    #[test]
    fn noiseless_without_edges_is_constant() {
        let cfg = SynthConfig { noise_std: 0.0, ar_coefficient: 0.0, units: 3, styles: 2, ..Default::default() };
        let out = generate(&cfg).unwrap();
        for s in out.set.all_series() {
            assert!(s.iter().all(|v| *v == 0.5));
        }
    }

    #[test]
    fn planted_edge_is_affine_in_the_shifted_source() {
        // Only the source is driven: with no own dynamics the destination's
        // latent series is exactly 0.9 times the source three steps back.
        let cfg = SynthConfig {
            units: 2,
            styles: 1,
            ar_coefficient: 0.0,
            planted_edges: vec![edge("U1", "U2", "S1", 3)],
            ..Default::default()
        };
        let out = generate(&cfg).unwrap();
        let (a, b) = (&out.latent[0], &out.latent[1]);
        let noise_b: Vec<f64> = (3..a.len()).map(|t| b[t] - 0.9 * a[t - 3]).collect();
        // What remains is B's own noise, uncorrelated with A's shifted values.
        assert!(noise_b.iter().all(|v| v.abs() < 0.5));

        let quiet = SynthConfig { noise_std: 0.0, ..cfg };
        let out = generate(&quiet).unwrap();
        assert_eq!(out.set.series_at(0), out.set.series_at(1));
    }

    #[test]
    fn reproducible() {
        let cfg = SynthConfig { seed: 11, ..Default::default() }.with_random_edges(0.9);
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.set, b.set);
        assert_eq!(a.unit_truth, b.unit_truth);
        assert_eq!(a.unit_truth.nonzero(), 5);
        let c = generate(&SynthConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.set, c.set);
    }

    #[test]
    fn values_span_the_target_range() {
        let out = generate(&SynthConfig { units: 2, styles: 2, ..Default::default() }).unwrap();
        for s in out.set.all_series() {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!((lo - 0.1).abs() < 1e-12 && (hi - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig { units: 2, styles: 1, ..Default::default() };
        for bad in [
            SynthConfig { ar_coefficient: 1.0, ..base.clone() },
            SynthConfig { planted_edges: vec![edge("U1", "U2", "S1", 9)], ..base.clone() },
            SynthConfig { planted_edges: vec![edge("U1", "U1", "S1", 2)], ..base.clone() },
            SynthConfig { planted_edges: vec![edge("U1", "U7", "S1", 2)], ..base.clone() },
            SynthConfig { seasonal: Some(Seasonality { amplitude: 1.0, period: 52 }), length: 50, ..base.clone() },
        ] {
            assert!(generate(&bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn config_json() {
        let text = r#"{"units": 3, "styles": 2, "T": 80, "noise_std": 0.1, "seed": 4,
            "planted_edges": [{"src": "U1", "dst": "U3", "context": "S2", "lag": 2, "coefficient": 0.5}]}"#;
        let cfg: SynthConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.length, 80);
        assert_eq!(cfg.planted_edges[0].axis, Axis::Unit);
        let out = generate(&cfg).unwrap();
        assert_eq!(out.unit_truth.lag(0, 2, 1), 2);
    }

    #[test]
    fn recovery_scores() {
        let cfg = SynthConfig { units: 3, styles: 1, planted_edges: vec![edge("U1", "U2", "S1", 3)], ..Default::default() };
        let truth = generate(&cfg).unwrap().unit_truth;
        let r = score_recovery(&truth, &truth).unwrap();
        assert_eq!((r.precision, r.recall, r.lag_accuracy), (1.0, 1.0, 1.0));

        let empty = InfluenceTensor::empty(Axis::Unit, truth.entities().to_vec(), truth.contexts().to_vec());
        let r = score_recovery(&empty, &truth).unwrap();
        assert_eq!((r.precision, r.recall), (1.0, 0.0));

        let off = generate(&SynthConfig { planted_edges: vec![edge("U1", "U2", "S1", 2)], ..cfg }).unwrap().unit_truth;
        let r = score_recovery(&off, &truth).unwrap();
        assert_eq!((r.precision, r.recall, r.lag_accuracy), (1.0, 1.0, 0.0));

        let other = InfluenceTensor::empty(Axis::Style, vec!["S1".into()], vec!["U1".into()]);
        assert!(score_recovery(&other, &truth).is_err());
    }
}
