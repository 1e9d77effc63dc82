//! Autoregressive fits and Granger-causality influence discovery.
//!
//! A source series influences a target when adding one lagged value of the
//! source to an order-`d` autoregression of the target reduces the residual
//! sum of squares significantly (nested F-test). Candidate lags are scanned
//! one at a time and the strongest significant lag is kept.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};
use crate::ingest::global_trend;
use crate::linalg::{ols, Annihilator};
use crate::types::{Axis, InfluenceEdge, InfluenceTensor, TrajectorySet};

/// Fitted autoregression, optionally with lagged external regressors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub intercept: f64,
    /// Coefficients on lags `1..=order` of the series itself.
    pub own: Vec<f64>,
    pub external: Vec<f64>,
    pub external_lags: Vec<usize>,
    pub order: usize,
    pub ssr: f64,
    pub n_obs: usize,
    /// Set when the design was rank deficient and the ridge fallback was used.
    pub ridge: bool,
}

impl ArModel {
    /// One-step prediction following the end of `history`.
    pub fn predict_next(&self, history: &[f64]) -> f64 {
        let n = history.len();
        let mut y = self.intercept;
        for (k, phi) in self.own.iter().enumerate() {
            y += phi * history[n - 1 - k];
        }
        y
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut p = vec![self.intercept];
        p.extend(&self.own);
        p.extend(&self.external);
        p
    }
}

fn lag_design(
    series: &[f64],
    order: usize,
    external: Option<(&[f64], &[usize])>,
    first_row: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = series.len();
    let rows = n - first_row;
    let n_ext = external.map_or(0, |(_, l)| l.len());
    let k = 1 + order + n_ext;
    let x = DMatrix::from_fn(rows, k, |i, j| {
        let t = first_row + i;
        if j == 0 {
            1.0
        } else if j <= order {
            series[t - j]
        } else {
            let (ext, lags) = external.expect("external column requested");
            ext[t - lags[j - 1 - order]]
        }
    });
    let y = DVector::from_fn(rows, |i, _| series[first_row + i]);
    (x, y)
}

/// Least-squares autoregression of order `order` on rows `max_lag..len`.
pub fn fit_ar(
    series: &[f64],
    order: usize,
    external: Option<(&[f64], &[usize])>,
) -> Result<ArModel> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("series"));
    }
    let (ext_lags, ext_len) = match external {
        Some((ext, lags)) => {
            if lags.contains(&0) {
                return Err(Error::InvalidArgument("external lags start at 1".into()));
            }
            (lags.to_vec(), Some(ext.len()))
        }
        None => (Vec::new(), None),
    };
    if let Some(len) = ext_len {
        if len != series.len() {
            return Err(Error::LengthMismatch {
                left: series.len(),
                right: len,
            });
        }
    }
    let max_lag = ext_lags.iter().copied().chain([order]).max().unwrap_or(0);
    let params = 1 + order + ext_lags.len();
    let rows = series.len().saturating_sub(max_lag);
    if rows < params + 1 {
        return Err(Error::InsufficientData(format!(
            "{} points leave {rows} usable rows for {params} coefficients",
            series.len()
        )));
    }
    let (x, y) = lag_design(series, order, external, max_lag);
    let fit = ols(&x, &y)?;
    Ok(ArModel {
        intercept: fit.coef[0],
        own: fit.coef[1..=order].to_vec(),
        external: fit.coef[order + 1..].to_vec(),
        external_lags: ext_lags,
        order,
        ssr: fit.ssr,
        n_obs: rows,
        ridge: fit.ridge,
    })
}

/// How the per-lag p-values of one source/target scan are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagCorrection {
    /// Use the raw p-value of the selected lag.
    None,
    /// Multiply the selected lag's p-value by the number of scanned lags.
    Bonferroni,
}

/// Correction applied across all ordered pairs tested within one context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyCorrection {
    None,
    Bonferroni,
    BenjaminiHochberg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrangerConfig {
    /// Own-lag order of the restricted autoregression.
    pub order: usize,
    pub min_lag: usize,
    pub max_lag: usize,
    pub alpha: f64,
    pub lag_correction: LagCorrection,
    pub family_correction: FamilyCorrection,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        Self {
            order: 8,
            min_lag: 1,
            max_lag: 8,
            alpha: 0.05,
            lag_correction: LagCorrection::Bonferroni,
            family_correction: FamilyCorrection::BenjaminiHochberg,
        }
    }
}

impl GrangerConfig {
    fn validate(&self) -> Result<()> {
        if self.min_lag == 0 || self.min_lag > self.max_lag || self.max_lag > 8 {
            return Err(Error::InvalidArgument(format!(
                "lag range {}..={} must lie within 1..=8",
                self.min_lag, self.max_lag
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn first_row(&self) -> usize {
        self.order.max(self.max_lag)
    }

    fn n_lags(&self) -> usize {
        self.max_lag - self.min_lag + 1
    }
}

/// Nested F-test for a single source lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagTest {
    pub lag: usize,
    pub f_stat: f64,
    pub p_value: f64,
    pub ssr_restricted: f64,
    pub ssr_extended: f64,
    /// `(SSR_restricted - SSR_extended) / n`.
    pub delta_mse: f64,
    /// The lagged source lies in the span of the target's own regressors.
    pub collinear: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerScan {
    pub tests: Vec<LagTest>,
    pub n_obs: usize,
    pub df_resid: usize,
    /// The restricted model already fits perfectly (e.g. constant target);
    /// no influence can be detected.
    pub degenerate_target: bool,
}

/// The significant lag chosen by [`granger_test`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrangerHit {
    pub lag: u8,
    pub f_stat: f64,
    pub raw_p: f64,
    /// p-value after the lag-scan correction.
    pub p_value: f64,
    pub delta_mse: f64,
}

/// Restricted autoregression of one target, reused across candidate sources.
struct TargetFit {
    annihilator: Annihilator,
    residuals: DVector<f64>,
    ssr: f64,
    n_obs: usize,
    df_resid: usize,
    degenerate: bool,
    first_row: usize,
}

impl TargetFit {
    fn new(target: &[f64], cfg: &GrangerConfig) -> Result<Self> {
        cfg.validate()?;
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target series"));
        }
        let first_row = cfg.first_row();
        let k_full = 1 + cfg.order + 1;
        let rows = target.len().saturating_sub(first_row);
        if rows < k_full + 2 {
            return Err(Error::InsufficientData(format!(
                "{} points leave {rows} rows for a {k_full}-coefficient test",
                target.len()
            )));
        }
        let (x, y) = lag_design(target, cfg.order, None, first_row);
        let fit = ols(&x, &y)?;
        let scale = y.iter().map(|v| v * v).sum::<f64>().max(1.0);
        Ok(Self {
            annihilator: Annihilator::new(&x),
            residuals: DVector::from_vec(fit.residuals),
            ssr: fit.ssr,
            n_obs: rows,
            df_resid: rows - k_full,
            degenerate: fit.ssr <= 1e-24 * scale,
            first_row,
        })
    }

    fn scan(&self, source: &[f64], cfg: &GrangerConfig) -> Result<GrangerScan> {
        if source.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("source series"));
        }
        let df = self.df_resid as f64;
        let mut tests = Vec::with_capacity(cfg.n_lags());
        for lag in cfg.min_lag..=cfg.max_lag {
            let z = DVector::from_fn(self.n_obs, |i, _| source[self.first_row + i - lag]);
            let r = self.annihilator.residual(&z);
            let rr = r.dot(&r);
            let zz = z.dot(&z);
            let collinear = rr <= 1e-12 * zz.max(f64::MIN_POSITIVE);
            let drop = if collinear || self.degenerate {
                0.0
            } else {
                (r.dot(&self.residuals).powi(2) / rr).min(self.ssr)
            };
            let ssr_ext = (self.ssr - drop).max(0.0);
            let (f_stat, p_value) = if drop <= 0.0 {
                (0.0, 1.0)
            } else if ssr_ext <= 1e-30 * self.ssr {
                (f64::INFINITY, 0.0)
            } else {
                let f = drop / (ssr_ext / df);
                (f, f_survival(f, 1.0, df)?)
            };
            debug_assert!(ssr_ext <= self.ssr);
            tests.push(LagTest {
                lag,
                f_stat,
                p_value,
                ssr_restricted: self.ssr,
                ssr_extended: ssr_ext,
                delta_mse: drop / self.n_obs as f64,
                collinear,
            });
        }
        Ok(GrangerScan {
            tests,
            n_obs: self.n_obs,
            df_resid: self.df_resid,
            degenerate_target: self.degenerate,
        })
    }
}

fn check_pair(target: &[f64], source: &[f64]) -> Result<()> {
    if target.len() != source.len() {
        return Err(Error::LengthMismatch {
            left: target.len(),
            right: source.len(),
        });
    }
    Ok(())
}

/// Upper tail `P(F > f)` of the F distribution with `(d1, d2)` degrees of freedom.
pub fn f_survival(f: f64, d1: f64, d2: f64) -> Result<f64> {
    let dist = FisherSnedecor::new(d1, d2).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(dist.sf(f).clamp(0.0, 1.0))
}

/// Per-lag nested F-tests of `source` lags on `target`.
pub fn granger_scan(target: &[f64], source: &[f64], cfg: &GrangerConfig) -> Result<GrangerScan> {
    check_pair(target, source)?;
    TargetFit::new(target, cfg)?.scan(source, cfg)
}

fn pick_lag(scan: &GrangerScan, cfg: &GrangerConfig) -> Option<GrangerHit> {
    if scan.degenerate_target {
        return None;
    }
    // All lags share the same degrees of freedom, so the largest F is the
    // smallest p; comparing F avoids ties when p underflows to zero.
    let best = scan
        .tests
        .iter()
        .filter(|t| t.f_stat > 0.0)
        .fold(None::<&LagTest>, |acc, t| match acc {
            Some(b) if b.f_stat >= t.f_stat => Some(b),
            _ => Some(t),
        })?;
    let p_value = match cfg.lag_correction {
        LagCorrection::None => best.p_value,
        LagCorrection::Bonferroni => (best.p_value * cfg.n_lags() as f64).min(1.0),
    };
    (p_value < cfg.alpha).then(|| GrangerHit {
        lag: best.lag as u8,
        f_stat: best.f_stat,
        raw_p: best.p_value,
        p_value,
        delta_mse: best.delta_mse,
    })
}

/// Does `source` Granger-cause `target`? Returns the chosen lag if so.
///
/// Both series must already be restricted to the fitting region.
pub fn granger_test(
    target: &[f64],
    source: &[f64],
    cfg: &GrangerConfig,
) -> Result<Option<GrangerHit>> {
    let scan = granger_scan(target, source, cfg)?;
    Ok(pick_lag(&scan, cfg))
}

/// Applies the family correction to the p-values of one context.
/// `tested` is the number of hypotheses in the family, including the ones
/// that were not significant at the lag-scan stage.
fn correct_family(hits: &mut Vec<(usize, usize, GrangerHit)>, tested: usize, cfg: &GrangerConfig) {
    let m = tested.max(1) as f64;
    match cfg.family_correction {
        FamilyCorrection::None => {}
        FamilyCorrection::Bonferroni => {
            for h in hits.iter_mut() {
                h.2.p_value = (h.2.p_value * m).min(1.0);
            }
        }
        FamilyCorrection::BenjaminiHochberg => {
            let mut order: Vec<usize> = (0..hits.len()).collect();
            order.sort_by(|&a, &b| {
                hits[a]
                    .2
                    .p_value
                    .total_cmp(&hits[b].2.p_value)
                    .then(a.cmp(&b))
            });
            // Step-up adjusted values: q_(i) = min_{j >= i} m p_(j) / j.
            let mut running = 1.0f64;
            let mut adjusted = vec![0.0; hits.len()];
            for (rank, &idx) in order.iter().enumerate().rev() {
                let q = hits[idx].2.p_value * m / (rank + 1) as f64;
                running = running.min(q);
                adjusted[idx] = running.min(1.0);
            }
            for (h, q) in hits.iter_mut().zip(adjusted) {
                h.2.p_value = q;
            }
        }
    }
    hits.retain(|h| h.2.p_value < cfg.alpha);
}

/// Tensor plus bookkeeping about the individual tests.
#[derive(Debug, Clone)]
pub struct TensorBuild {
    pub tensor: InfluenceTensor,
    pub tested: usize,
    /// Tests that could not run, with the reason. Not fatal.
    pub failures: Vec<String>,
}

/// Runs every ordered-pair test of `axis` on the fitting region of `ts`.
///
/// With a split applied only the train and validation points are used;
/// otherwise the full series are.
pub fn build_influence_tensor_detailed(
    ts: &TrajectorySet,
    axis: Axis,
    cfg: &GrangerConfig,
) -> Result<TensorBuild> {
    cfg.validate()?;
    if axis == Axis::Style {
        let swapped = build_influence_tensor_detailed(&ts.transposed(), Axis::Unit, cfg)?;
        let t = swapped.tensor;
        let tensor = InfluenceTensor::from_edges(
            Axis::Style,
            t.entities().to_vec(),
            t.contexts().to_vec(),
            t.edges().iter().cloned(),
        )?;
        return Ok(TensorBuild { tensor, ..swapped });
    }
    let end = ts.pre_test_len();
    let n = ts.n_units();
    let contexts = ts.n_styles();
    let targets: Vec<(usize, usize)> = (0..contexts)
        .flat_map(|c| (0..n).map(move |d| (c, d)))
        .collect();

    type PerTarget = (Vec<(usize, usize, GrangerHit)>, Vec<String>);
    let per_target: Vec<PerTarget> = targets
        .par_iter()
        .map(|&(ctx, dst)| {
            let mut hits = Vec::new();
            let mut failures = Vec::new();
            if n < 2 {
                return (hits, failures);
            }
            let target = &ts.series(ctx, dst)[..end];
            let fit = match TargetFit::new(target, cfg) {
                Ok(f) => f,
                Err(e) => {
                    failures.push(format!(
                        "{} in {}: {e}",
                        ts.units()[dst],
                        ts.styles()[ctx]
                    ));
                    return (hits, failures);
                }
            };
            for src in (0..n).filter(|&s| s != dst) {
                let source = &ts.series(ctx, src)[..end];
                match fit.scan(source, cfg) {
                    Ok(scan) => {
                        if let Some(hit) = pick_lag(&scan, cfg) {
                            hits.push((src, dst, hit));
                        }
                    }
                    Err(e) => failures.push(format!(
                        "{} -> {} in {}: {e}",
                        ts.units()[src],
                        ts.units()[dst],
                        ts.styles()[ctx]
                    )),
                }
            }
            (hits, failures)
        })
        .collect();

    let mut tensor = InfluenceTensor::empty_for(ts, Axis::Unit);
    let mut failures = Vec::new();
    let pairs_per_ctx = n * n.saturating_sub(1);
    for ctx in 0..contexts {
        let mut hits = Vec::new();
        for (i, (h, f)) in per_target[ctx * n..(ctx + 1) * n].iter().enumerate() {
            debug_assert_eq!(targets[ctx * n + i].0, ctx);
            hits.extend(h.iter().cloned());
            failures.extend(f.iter().cloned());
        }
        correct_family(&mut hits, pairs_per_ctx, cfg);
        for (src, dst, hit) in hits {
            tensor.insert(InfluenceEdge {
                src: ts.units()[src].clone(),
                dst: ts.units()[dst].clone(),
                context: ts.styles()[ctx].clone(),
                lag: hit.lag,
                p_value: hit.p_value,
                delta_mse: hit.delta_mse,
            })?;
        }
    }
    for f in &failures {
        log::warn!("influence test skipped: {f}");
    }
    Ok(TensorBuild {
        tensor,
        tested: pairs_per_ctx * contexts,
        failures,
    })
}

/// Influence tensor over units (per style) or styles (per unit).
pub fn build_influence_tensor(
    ts: &TrajectorySet,
    axis: Axis,
    cfg: &GrangerConfig,
) -> Result<InfluenceTensor> {
    build_influence_tensor_detailed(ts, axis, cfg).map(|b| b.tensor)
}

/// Identifier used as the destination of unit-to-global edges.
pub const GLOBAL_ID: &str = "global";

/// Tests every unit's trajectory of `style` as a Granger cause of the
/// style's global trend.
pub fn unit_to_global(
    ts: &TrajectorySet,
    style: &str,
    cfg: &GrangerConfig,
) -> Result<Vec<InfluenceEdge>> {
    if ts.n_units() < 2 {
        return Err(Error::InvalidArgument(
            "unit-to-global influence needs at least two units".into(),
        ));
    }
    let s = ts.style_index(style)?;
    let end = ts.pre_test_len();
    let global = global_trend(ts, style)?;
    let target = &global.values[..end];
    let fit = TargetFit::new(target, cfg)?;
    let mut hits = Vec::new();
    for u in 0..ts.n_units() {
        let scan = fit.scan(&ts.series(s, u)[..end], cfg)?;
        if let Some(hit) = pick_lag(&scan, cfg) {
            hits.push((u, 0, hit));
        }
    }
    correct_family(&mut hits, ts.n_units(), cfg);
    Ok(hits
        .into_iter()
        .map(|(u, _, hit)| InfluenceEdge {
            src: ts.units()[u].clone(),
            dst: GLOBAL_ID.to_string(),
            context: style.to_string(),
            lag: hit.lag,
            p_value: hit.p_value,
            delta_mse: hit.delta_mse,
        })
        .collect())
}
