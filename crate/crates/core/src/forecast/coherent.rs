//! Influence-aware forecaster: one small network per trajectory whose inputs
//! are the trajectory's own lags plus the lagged values of its discovered
//! influencers, trained jointly per style with a coherence penalty that ties
//! the style's mean prediction to its mean truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{Adam, Init, Mlp};
use crate::error::{Error, Result};
use crate::metrics::mae;
use crate::types::{Axis, InfluenceTensor, Split, TrajectorySet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherentConfig {
    pub hidden: usize,
    /// Own-lag count `d`.
    pub order: usize,
    pub lr: f64,
    pub l2: f64,
    /// Coherence weight.
    pub lambda: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub init: Init,
    pub alpha_grid: Vec<f64>,
}

impl Default for CoherentConfig {
    fn default() -> Self {
        Self {
            hidden: 16,
            order: 8,
            lr: 1e-2,
            l2: 1e-8,
            lambda: 1.0,
            patience: 50,
            max_epochs: 2000,
            seed: 0,
            init: Init::Random,
            alpha_grid: default_alpha_grid(),
        }
    }
}

pub fn default_alpha_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 * 0.05).collect()
}

impl CoherentConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument("learning rate must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument("l2 and lambda must be non-negative".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be positive".into()));
        }
        if self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidArgument("alpha grid must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// First time index with every lag input available.
    pub fn first_row(&self) -> usize {
        self.order.max(InfluenceTensor::MAX_LAG as usize)
    }
}

/// One network input: trajectory `traj` (set index) at `lag` steps back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSpec {
    pub traj: usize,
    pub lag: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub mean: f64,
    pub sd: f64,
}

impl Scale {
    fn of(v: &[f64]) -> Self {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        let sd = var.sqrt();
        Self { mean, sd: if sd > 0.0 { sd } else { 1.0 } }
    }
}

/// Own lags `1..=order` followed by one input per incoming tensor edge.
pub fn network_inputs(
    ts: &TrajectorySet,
    tensor: Option<&InfluenceTensor>,
    order: usize,
) -> Result<Vec<Vec<InputSpec>>> {
    let mut inputs: Vec<Vec<InputSpec>> = (0..ts.n_trajectories())
        .map(|traj| (1..=order).map(|lag| InputSpec { traj, lag }).collect())
        .collect();
    let Some(tensor) = tensor else {
        return Ok(inputs);
    };
    let missing = |what: &str, id: &str| Error::InsufficientData(format!("influence tensor refers to {what} `{id}` missing from the trajectories"));
    for e in tensor.edges() {
        let (src, dst) = match tensor.axis() {
            Axis::Unit => {
                let s = ts.style_index(&e.context).map_err(|_| missing("style", &e.context))?;
                let a = ts.unit_index(&e.src).map_err(|_| missing("unit", &e.src))?;
                let b = ts.unit_index(&e.dst).map_err(|_| missing("unit", &e.dst))?;
                (ts.index(s, a), ts.index(s, b))
            }
            Axis::Style => {
                let u = ts.unit_index(&e.context).map_err(|_| missing("unit", &e.context))?;
                let p = ts.style_index(&e.src).map_err(|_| missing("style", &e.src))?;
                let q = ts.style_index(&e.dst).map_err(|_| missing("style", &e.dst))?;
                (ts.index(p, u), ts.index(q, u))
            }
        };
        inputs[dst].push(InputSpec { traj: src, lag: e.lag as usize });
    }
    Ok(inputs)
}

/// A trained network together with its input wiring and scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedNet {
    pub inputs: Vec<InputSpec>,
    pub input_scales: Vec<Scale>,
    pub output_scale: Scale,
    pub mlp: Mlp,
    pub epochs: usize,
    pub validation_mae: f64,
    pub reinitialized: bool,
}

impl TrainedNet {
    fn row(&self, history: &[Vec<f64>], t: usize, out: &mut [f64]) {
        for (k, (inp, sc)) in self.inputs.iter().zip(&self.input_scales).enumerate() {
            out[k] = (history[inp.traj][t - inp.lag] - sc.mean) / sc.sd;
        }
    }

    /// Prediction for time `t` given the values of every trajectory before `t`.
    pub fn predict_at(&self, history: &[Vec<f64>], t: usize) -> f64 {
        let mut x = vec![0.0; self.inputs.len()];
        self.row(history, t, &mut x);
        self.mlp.predict(&x) * self.output_scale.sd + self.output_scale.mean
    }
}

/// Per-trajectory networks for a whole trajectory set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentBank {
    pub config: CoherentConfig,
    pub styles: Vec<String>,
    pub units: Vec<String>,
    /// In trajectory-set order.
    pub nets: Vec<TrainedNet>,
}

/// Training rows of one group: standardized inputs and original-scale targets.
#[derive(Debug, Clone)]
pub struct GroupData {
    /// Per network, `n x inputs` row-major.
    pub x: Vec<Vec<f64>>,
    /// Per network, `n` targets.
    pub y: Vec<Vec<f64>>,
    pub output_scales: Vec<Scale>,
}

impl GroupData {
    pub fn n_rows(&self) -> usize {
        self.y.first().map_or(0, |y| y.len())
    }
}

/// Joint objective of one style group:
///
/// `sum_j mean_t (y_jt - yhat_jt)^2 + lambda mean_t (mean_j y_jt - mean_j yhat_jt)^2
///  + l2 sum_j |w_j|^2`
///
/// Gradients for networks with `active[j]` are written into `grads[j]`.
pub fn coherent_loss(
    nets: &[Mlp],
    data: &GroupData,
    lambda: f64,
    l2: f64,
    active: &[bool],
    grads: &mut [Vec<f64>],
) -> f64 {
    let g = nets.len();
    let n = data.n_rows();
    let nf = n as f64;
    let hidden = nets.iter().map(|m| m.hidden).max().unwrap_or(0);
    let mut acts = vec![vec![0.0; n * hidden]; g];
    let mut preds = vec![vec![0.0; n]; g];
    for j in 0..g {
        let p = nets[j].inputs;
        let h = nets[j].hidden;
        let sc = data.output_scales[j];
        for t in 0..n {
            let z = nets[j].forward(&data.x[j][t * p..(t + 1) * p], &mut acts[j][t * h..(t + 1) * h]);
            preds[j][t] = z * sc.sd + sc.mean;
        }
    }
    let mut loss = 0.0;
    for j in 0..g {
        loss += preds[j].iter().zip(&data.y[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / nf;
        loss += l2 * nets[j].weight_norm_sq();
    }
    let mut gap = vec![0.0; n];
    if lambda != 0.0 {
        for t in 0..n {
            let mut d = 0.0;
            for j in 0..g {
                d += preds[j][t] - data.y[j][t];
            }
            gap[t] = d / g as f64;
        }
        loss += lambda * gap.iter().map(|d| d * d).sum::<f64>() / nf;
    }

    for j in 0..g {
        if !active[j] {
            continue;
        }
        let net = &nets[j];
        let (p, h) = (net.inputs, net.hidden);
        let grad = &mut grads[j];
        grad.iter_mut().for_each(|v| *v = 0.0);
        let sd = data.output_scales[j].sd;
        for t in 0..n {
            let mut dy = 2.0 * (preds[j][t] - data.y[j][t]) / nf;
            if lambda != 0.0 {
                dy += lambda * 2.0 * gap[t] / (nf * g as f64);
            }
            net.backward(&data.x[j][t * p..(t + 1) * p], &acts[j][t * h..(t + 1) * h], dy * sd, grad);
        }
        if l2 != 0.0 {
            for (i, w) in net.params.iter().enumerate() {
                if net.is_weight(i) {
                    grad[i] += 2.0 * l2 * w;
                }
            }
        }
    }
    loss
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Independent stream per (seed, style, unit, attempt).
pub fn network_seed(seed: u64, style: usize, unit: usize, attempt: usize) -> u64 {
    [style as u64, unit as u64, attempt as u64]
        .iter()
        .fold(splitmix(seed), |acc, v| splitmix(acc ^ splitmix(*v)))
}

fn rows(
    series: &[Vec<f64>],
    inputs: &[InputSpec],
    scales: &[Scale],
    range: std::ops::Range<usize>,
) -> Vec<f64> {
    let mut x = Vec::with_capacity(range.len() * inputs.len());
    for t in range {
        for (inp, sc) in inputs.iter().zip(scales) {
            x.push((series[inp.traj][t - inp.lag] - sc.mean) / sc.sd);
        }
    }
    x
}

struct GroupSetup<'a> {
    ts: &'a TrajectorySet,
    style: usize,
    members: Vec<usize>,
    inputs: &'a [Vec<InputSpec>],
    scales: &'a [Scale],
    split: Split,
}

fn train_group(setup: &GroupSetup, cfg: &CoherentConfig) -> Result<Vec<TrainedNet>> {
    let ts = setup.ts;
    let series = ts.all_series();
    let lo = cfg.first_row();
    let (train_end, val_end) = (setup.split.train_end, setup.split.val_end);
    if train_end < lo + 2 {
        return Err(Error::TooShort { needed: lo + 2, have: train_end });
    }
    let members = &setup.members;
    let input_scales: Vec<Vec<Scale>> = members
        .iter()
        .map(|&i| setup.inputs[i].iter().map(|inp| setup.scales[inp.traj]).collect())
        .collect();
    let data = GroupData {
        x: members
            .iter()
            .zip(&input_scales)
            .map(|(&i, sc)| rows(series, &setup.inputs[i], sc, lo..train_end))
            .collect(),
        y: members.iter().map(|&i| series[i][lo..train_end].to_vec()).collect(),
        output_scales: members.iter().map(|&i| setup.scales[i]).collect(),
    };
    let val_x: Vec<Vec<f64>> = members
        .iter()
        .zip(&input_scales)
        .map(|(&i, sc)| rows(series, &setup.inputs[i], sc, train_end..val_end))
        .collect();

    for attempt in 0..2 {
        match run_epochs(setup, cfg, &data, &val_x, attempt)? {
            Some((nets, epochs, val)) => {
                return Ok(members
                    .iter()
                    .enumerate()
                    .map(|(k, &i)| TrainedNet {
                        inputs: setup.inputs[i].clone(),
                        input_scales: input_scales[k].clone(),
                        output_scale: setup.scales[i],
                        mlp: nets[k].clone(),
                        epochs: epochs[k],
                        validation_mae: val[k],
                        reinitialized: attempt > 0,
                    })
                    .collect());
            }
            None => log::warn!(
                "training diverged for style {} (attempt {}); reinitializing",
                ts.styles()[setup.style],
                attempt + 1
            ),
        }
    }
    Err(Error::Numerical(format!(
        "coherent training diverged twice for style {}",
        ts.styles()[setup.style]
    )))
}

type EpochResult = Option<(Vec<Mlp>, Vec<usize>, Vec<f64>)>;

fn run_epochs(
    setup: &GroupSetup,
    cfg: &CoherentConfig,
    data: &GroupData,
    val_x: &[Vec<f64>],
    attempt: usize,
) -> Result<EpochResult> {
    let ts = setup.ts;
    let members = &setup.members;
    let g = members.len();
    let series = ts.all_series();
    let (train_end, val_end) = (setup.split.train_end, setup.split.val_end);
    let mut nets: Vec<Mlp> = members
        .iter()
        .map(|&i| {
            let (s, u) = ts.coords(i);
            let mut rng = ChaCha8Rng::seed_from_u64(network_seed(cfg.seed, s, u, attempt));
            Mlp::new(setup.inputs[i].len(), cfg.hidden, cfg.init, &mut rng)
        })
        .collect();
    let mut opts: Vec<Adam> = nets.iter().map(|m| Adam::new(m.params.len(), cfg.lr)).collect();
    let mut grads: Vec<Vec<f64>> = nets.iter().map(|m| vec![0.0; m.params.len()]).collect();
    let mut active = vec![true; g];
    let mut best = nets.clone();
    let mut best_val = vec![f64::INFINITY; g];
    let mut since = vec![0usize; g];
    let mut epochs = vec![0usize; g];
    let has_val = val_end > train_end;
    let mut hbuf = vec![0.0; cfg.hidden];

    for _ in 0..cfg.max_epochs {
        let loss = coherent_loss(&nets, data, cfg.lambda, cfg.l2, &active, &mut grads);
        if !loss.is_finite() {
            return Ok(None);
        }
        for j in 0..g {
            if !active[j] {
                continue;
            }
            opts[j].step(&mut nets[j].params, &grads[j]);
            if nets[j].params.iter().any(|p| !p.is_finite()) {
                return Ok(None);
            }
            epochs[j] += 1;
            if !has_val {
                continue;
            }
            let sc = data.output_scales[j];
            let p = nets[j].inputs;
            let truth = &series[members[j]][train_end..val_end];
            let err = truth
                .iter()
                .enumerate()
                .map(|(t, y)| {
                    let z = nets[j].forward(&val_x[j][t * p..(t + 1) * p], &mut hbuf);
                    (z * sc.sd + sc.mean - y).abs()
                })
                .sum::<f64>()
                / truth.len() as f64;
            if err < best_val[j] {
                best_val[j] = err;
                best[j].params.copy_from_slice(&nets[j].params);
                since[j] = 0;
            } else {
                since[j] += 1;
                if since[j] >= cfg.patience {
                    active[j] = false;
                }
            }
        }
        if !active.iter().any(|a| *a) {
            break;
        }
    }
    if has_val {
        Ok(Some((best, epochs, best_val)))
    } else {
        Ok(Some((nets, epochs, vec![f64::NAN; g])))
    }
}

/// Trains one network per trajectory with explicit input wiring. Networks
/// are grouped by style for the coherence term; styles train in parallel.
pub fn train_with_inputs(
    ts: &TrajectorySet,
    inputs: &[Vec<InputSpec>],
    cfg: &CoherentConfig,
) -> Result<CoherentBank> {
    cfg.validate()?;
    let split = ts.require_split()?;
    if inputs.len() != ts.n_trajectories() {
        return Err(Error::LengthMismatch { left: ts.n_trajectories(), right: inputs.len() });
    }
    for inp in inputs.iter().flatten() {
        if inp.traj >= ts.n_trajectories() || inp.lag == 0 || inp.lag > cfg.first_row() {
            return Err(Error::InvalidArgument(format!("invalid network input {inp:?}")));
        }
    }
    let scales: Vec<Scale> = ts
        .all_series()
        .iter()
        .map(|s| Scale::of(&s[..split.train_end]))
        .collect();
    let groups: Vec<Vec<TrainedNet>> = (0..ts.n_styles())
        .into_par_iter()
        .map(|style| {
            let setup = GroupSetup {
                ts,
                style,
                members: (0..ts.n_units()).map(|u| ts.index(style, u)).collect(),
                inputs,
                scales: &scales,
                split,
            };
            train_group(&setup, cfg)
        })
        .collect::<Result<_>>()?;
    Ok(CoherentBank {
        config: cfg.clone(),
        styles: ts.styles().to_vec(),
        units: ts.units().to_vec(),
        nets: groups.into_iter().flatten().collect(),
    })
}

/// Trains the bank for `tensor`'s edges (none when `tensor` is `None`).
pub fn train_coherent(
    ts: &TrajectorySet,
    tensor: Option<&InfluenceTensor>,
    cfg: &CoherentConfig,
) -> Result<CoherentBank> {
    let inputs = network_inputs(ts, tensor, cfg.order)?;
    train_with_inputs(ts, &inputs, cfg)
}

/// Runs `step` forward from `origin`, appending every trajectory's
/// prediction before computing the next step.
pub fn lockstep<F>(ts: &TrajectorySet, origin: usize, horizon: usize, step: F) -> Vec<Vec<f64>>
where
    F: Fn(&[Vec<f64>], usize) -> Vec<f64>,
{
    let mut hist: Vec<Vec<f64>> = ts.all_series().iter().map(|s| s[..origin].to_vec()).collect();
    for h in 0..horizon {
        let next = step(&hist, origin + h);
        for (s, v) in hist.iter_mut().zip(next) {
            s.push(v);
        }
    }
    hist.into_iter().map(|mut s| s.split_off(origin)).collect()
}

impl CoherentBank {
    fn check(&self, ts: &TrajectorySet) -> Result<()> {
        if self.nets.is_empty() {
            return Err(Error::Untrained);
        }
        if ts.styles() != self.styles.as_slice() || ts.units() != self.units.as_slice() {
            return Err(Error::IdMismatch(
                "trajectory set does not match the trained bank".into(),
            ));
        }
        Ok(())
    }

    pub fn predict_step(&self, history: &[Vec<f64>], t: usize) -> Vec<f64> {
        self.nets.iter().map(|n| n.predict_at(history, t)).collect()
    }

    pub fn forecast_from(&self, ts: &TrajectorySet, origin: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        self.check(ts)?;
        if origin < self.config.first_row() || origin > ts.len() {
            return Err(Error::InvalidArgument(format!("forecast origin {origin} out of range")));
        }
        Ok(lockstep(ts, origin, horizon, |h, t| self.predict_step(h, t)))
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|n| n.mlp.params.iter().copied()).collect()
    }
}

/// Forecasts `horizon` steps past the validation region.
pub fn forecast_coherent(bank: &CoherentBank, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
    bank.forecast_from(ts, ts.pre_test_len(), horizon)
}

/// Mixture `unit + alpha (style - unit)` of the two influence banks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinedForecaster {
    pub style: CoherentBank,
    pub unit: CoherentBank,
    pub alpha: f64,
}

impl CombinedForecaster {
    pub fn forecast_from(&self, ts: &TrajectorySet, origin: usize, horizon: usize) -> Result<Vec<Vec<f64>>> {
        self.style.check(ts)?;
        self.unit.check(ts)?;
        let lo = self.style.config.first_row().max(self.unit.config.first_row());
        if origin < lo || origin > ts.len() {
            return Err(Error::InvalidArgument(format!("forecast origin {origin} out of range")));
        }
        Ok(mixture(&self.style, &self.unit, self.alpha, ts, origin, horizon))
    }

    pub fn forecast(&self, ts: &TrajectorySet, horizon: usize) -> Result<Vec<Vec<f64>>> {
        self.forecast_from(ts, ts.pre_test_len(), horizon)
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut p = self.style.parameters();
        p.extend(self.unit.parameters());
        p.push(self.alpha);
        p
    }
}

fn mixture(
    style: &CoherentBank,
    unit: &CoherentBank,
    alpha: f64,
    ts: &TrajectorySet,
    origin: usize,
    horizon: usize,
) -> Vec<Vec<f64>> {
    lockstep(ts, origin, horizon, |h, t| {
        let ps = style.predict_step(h, t);
        let pu = unit.predict_step(h, t);
        pu.iter().zip(&ps).map(|(u, s)| u + alpha * (s - u)).collect()
    })
}

/// First grid value with the smallest score; later values must improve by
/// more than 1e-12 to win.
pub fn pick_alpha(grid: &[f64], mut score: impl FnMut(f64) -> f64) -> (f64, f64) {
    let mut best = (f64::NAN, f64::INFINITY);
    for &a in grid {
        let s = score(a);
        if s < best.1 - 1e-12 || best.0.is_nan() {
            best = (a, s);
        }
    }
    best
}

/// Chooses the mixture weight by recursive forecasting over the validation
/// region from the end of training.
pub fn select_alpha(style: CoherentBank, unit: CoherentBank, ts: &TrajectorySet) -> Result<CombinedForecaster> {
    style.check(ts)?;
    unit.check(ts)?;
    let split = ts.require_split()?;
    let grid = style.config.alpha_grid.clone();
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty alpha grid".into()));
    }
    let alpha = if split.val_len() == 0 {
        log::warn!("no validation region; alpha defaults to {}", grid[0]);
        grid[0]
    } else {
        let (lo, hi) = (split.train_end, split.val_end);
        let mut failure = None;
        let (a, _) = pick_alpha(&grid, |a| {
            let f = mixture(&style, &unit, a, ts, lo, hi - lo);
            let mut total = 0.0;
            for (i, pred) in f.iter().enumerate() {
                match mae(pred, &ts.series_at(i)[lo..hi]) {
                    Ok(v) => total += v,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return f64::INFINITY;
                    }
                }
            }
            total / f.len() as f64
        });
        if let Some(e) = failure {
            return Err(e);
        }
        a
    };
    Ok(CombinedForecaster { style, unit, alpha })
}
