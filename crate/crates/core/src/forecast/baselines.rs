//! Per-trajectory forecasters: naive rules, autoregression, ARIMA,
//! exponential decay averaging and the sinusoid-plus-drift model.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::influence::{fit_ar, ArModel};
use crate::linalg::ols;
use crate::metrics::mae;

fn check_history(history: &[f64], horizon: usize) -> Result<()> {
    if history.is_empty() {
        return Err(Error::Empty("history"));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("history"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NaiveMethod {
    Gaussian,
    Seasonal,
    Mean,
    Last,
    Drift,
}

impl NaiveMethod {
    pub const ALL: [NaiveMethod; 5] = [
        NaiveMethod::Gaussian,
        NaiveMethod::Seasonal,
        NaiveMethod::Mean,
        NaiveMethod::Last,
        NaiveMethod::Drift,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NaiveMethod::Gaussian => "gaussian",
            NaiveMethod::Seasonal => "seasonal",
            NaiveMethod::Mean => "mean",
            NaiveMethod::Last => "last",
            NaiveMethod::Drift => "drift",
        }
    }
}

/// Season length of the seasonal naive rule, in buckets.
pub const SEASON: usize = 52;

/// Mean shifted by the first value, so a constant series returns itself exactly.
fn mean(v: &[f64]) -> f64 {
    let x0 = v[0];
    x0 + v.iter().map(|x| x - x0).sum::<f64>() / v.len() as f64
}

/// Naive forecasts of `horizon` steps after `history`.
pub fn forecast_naive(
    method: NaiveMethod,
    history: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_history(history, horizon)?;
    let n = history.len();
    let last = history[n - 1];
    Ok(match method {
        NaiveMethod::Mean => vec![mean(history); horizon],
        NaiveMethod::Last => vec![last; horizon],
        NaiveMethod::Drift => {
            let slope = if n > 1 {
                (last - history[0]) / (n - 1) as f64
            } else {
                0.0
            };
            (1..=horizon).map(|h| last + slope * h as f64).collect()
        }
        NaiveMethod::Seasonal => {
            if n <= SEASON {
                return Err(Error::TooShort {
                    needed: SEASON + 1,
                    have: n,
                });
            }
            (1..=horizon)
                .map(|h| {
                    let back = SEASON * h.div_ceil(SEASON);
                    history[n + h - back - 1]
                })
                .collect()
        }
        NaiveMethod::Gaussian => {
            let mu = mean(history);
            let sd = (history.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n as f64).sqrt();
            if sd == 0.0 {
                vec![mu; horizon]
            } else {
                let dist = Normal::new(mu, sd).map_err(|e| Error::Numerical(e.to_string()))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..horizon).map(|_| dist.sample(&mut rng)).collect()
            }
        }
    })
}

/// Recursive multi-step forecasts of a fitted autoregression.
pub fn ar_recursive(model: &ArModel, history: &[f64], horizon: usize) -> Vec<f64> {
    let mut h = history.to_vec();
    for _ in 0..horizon {
        let next = model.predict_next(&h);
        h.push(next);
    }
    h.split_off(history.len())
}

pub fn forecast_ar(history: &[f64], order: usize, horizon: usize) -> Result<Vec<f64>> {
    check_history(history, horizon)?;
    let model = fit_ar(history, order, None)?;
    Ok(ar_recursive(&model, history, horizon))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self { p: 1, d: 1, q: 1 }
    }
}

/// ARIMA fitted by the two-stage Hannan-Rissanen regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArimaFit {
    pub order: ArimaOrder,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// The MA part was not invertible; an ARI(p, d) model was fitted instead.
    pub fallback: bool,
}

fn difference(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| w[1] - w[0]).collect()
}

fn ma_invertible(theta: &[f64]) -> bool {
    let q = theta.len();
    if q == 0 {
        return true;
    }
    // Roots of 1 + t1 z + ... + tq z^q lie outside the unit circle iff the
    // companion matrix of z^q + t1 z^(q-1) + ... + tq has eigenvalues inside.
    let companion = DMatrix::from_fn(q, q, |i, j| {
        if i == 0 {
            -theta[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    companion
        .complex_eigenvalues()
        .iter()
        .all(|z| z.norm() < 1.0 - 1e-8)
}

impl ArimaFit {
    pub fn fit(history: &[f64], order: ArimaOrder) -> Result<Self> {
        let ArimaOrder { p, d, q } = order;
        let needed = p + d + q + 11;
        if history.len() < needed {
            return Err(Error::TooShort {
                needed,
                have: history.len(),
            });
        }
        let mut w = history.to_vec();
        for _ in 0..d {
            w = difference(&w);
        }
        let n = w.len();
        let mu = mean(&w);
        let spread = w.iter().map(|v| (v - mu).abs()).fold(0.0, f64::max);
        if spread <= 1e-12 * mu.abs().max(1.0) {
            // Differenced series is constant: a pure drift.
            return Ok(Self {
                order,
                intercept: mu,
                ar: vec![0.0; p],
                ma: vec![0.0; q],
                fallback: false,
            });
        }
        let ari = |fallback: bool| -> Result<Self> {
            let m = fit_ar(&w, p, None)?;
            Ok(Self {
                order,
                intercept: m.intercept,
                ar: m.own,
                ma: vec![0.0; q],
                fallback,
            })
        };
        if q == 0 {
            return ari(false);
        }

        // Stage 1: long autoregression for innovation estimates.
        let long = ((10.0 * (n as f64).log10()).ceil() as usize)
            .max(2 * (p + q))
            .min((n - 1) / 3);
        if long <= p.max(q) {
            return ari(true);
        }
        let long_fit = fit_ar(&w, long, None)?;
        let mut innov = vec![0.0; n];
        for t in long..n {
            innov[t] = w[t] - long_fit.predict_next(&w[..t]);
        }

        // Stage 2: regress on own lags and lagged innovations.
        let start = long + p.max(q);
        let rows = n - start;
        let k = 1 + p + q;
        if rows < k + 2 {
            return ari(true);
        }
        let x = DMatrix::from_fn(rows, k, |i, j| {
            let t = start + i;
            if j == 0 {
                1.0
            } else if j <= p {
                w[t - j]
            } else {
                innov[t - (j - p)]
            }
        });
        let y = DVector::from_fn(rows, |i, _| w[start + i]);
        let fit = ols(&x, &y)?;
        let ma = fit.coef[1 + p..].to_vec();
        if !ma_invertible(&ma) {
            log::debug!("non-invertible MA estimate {ma:?}; falling back to ARI");
            return ari(true);
        }
        Ok(Self {
            order,
            intercept: fit.coef[0],
            ar: fit.coef[1..=p].to_vec(),
            ma,
            fallback: false,
        })
    }

    pub fn forecast(&self, history: &[f64], horizon: usize) -> Vec<f64> {
        let ArimaOrder { p, d, q } = self.order;
        let mut levels = vec![history.to_vec()];
        for _ in 0..d {
            let next = difference(levels.last().expect("non-empty"));
            levels.push(next);
        }
        let mut w = levels.pop().expect("differenced series");
        let n = w.len();
        // Innovations by filtering the observed (differenced) series.
        let mut e = vec![0.0; n];
        for t in p.max(q)..n {
            let mut pred = self.intercept;
            for i in 0..p {
                pred += self.ar[i] * w[t - 1 - i];
            }
            for j in 0..q {
                pred += self.ma[j] * e[t - 1 - j];
            }
            e[t] = w[t] - pred;
        }
        for _ in 0..horizon {
            let t = w.len();
            let mut pred = self.intercept;
            for i in 0..p {
                pred += self.ar[i] * w[t - 1 - i];
            }
            for j in 0..q {
                pred += self.ma[j] * e[t - 1 - j];
            }
            w.push(pred);
            e.push(0.0);
        }
        let mut out = w.split_off(n);
        // Undo differencing from the innermost level outwards.
        while let Some(level) = levels.pop() {
            let mut acc = *level.last().expect("non-empty level");
            for v in out.iter_mut() {
                acc += *v;
                *v = acc;
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.ar);
        v.extend(&self.ma);
        v
    }
}

pub fn forecast_arima(history: &[f64], order: ArimaOrder, horizon: usize) -> Result<Vec<f64>> {
    check_history(history, horizon)?;
    Ok(ArimaFit::fit(history, order)?.forecast(history, horizon))
}

/// Decay grid searched by the exponential-decay forecaster.
pub fn decay_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

/// Normalized exponentially decaying average: weight `(1 - decay)^age`.
pub fn decayed_average(history: &[f64], decay: f64) -> f64 {
    let keep = 1.0 - decay;
    let mut num = 0.0;
    let mut den = 0.0;
    for v in history {
        num = v + keep * num;
        den = 1.0 + keep * den;
    }
    num / den
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpSmoothFit {
    pub decay: f64,
    pub validation_mae: f64,
}

impl ExpSmoothFit {
    /// Picks the decay whose constant forecast from the first
    /// `len - n_val` points best matches the last `n_val` points.
    pub fn fit(history: &[f64], n_val: usize) -> Result<Self> {
        if n_val == 0 || history.len() < n_val + 5 {
            return Err(Error::TooShort {
                needed: n_val.max(1) + 5,
                have: history.len(),
            });
        }
        let (train, val) = history.split_at(history.len() - n_val);
        let mut best = Self {
            decay: f64::NAN,
            validation_mae: f64::INFINITY,
        };
        for decay in decay_grid() {
            let f = decayed_average(train, decay);
            let err = mae(&vec![f; n_val], val)?;
            if err < best.validation_mae {
                best = Self {
                    decay,
                    validation_mae: err,
                };
            }
        }
        Ok(best)
    }

    pub fn forecast(&self, history: &[f64], horizon: usize) -> Vec<f64> {
        vec![decayed_average(history, self.decay); horizon]
    }
}

pub fn forecast_expsmooth(history: &[f64], n_val: usize, horizon: usize) -> Result<Vec<f64>> {
    check_history(history, horizon)?;
    Ok(ExpSmoothFit::fit(history, n_val)?.forecast(history, horizon))
}

/// `y_t = b + c t + A sin(2 pi t / P) + B cos(2 pi t / P)` by least squares,
/// with `t` counted from 1 at the first observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoModelFit {
    pub level: f64,
    pub slope: f64,
    pub sin: f64,
    pub cos: f64,
    pub period: usize,
    /// Fewer than two periods of data: the seasonal terms were left out.
    pub seasonal: bool,
}

impl GeoModelFit {
    pub fn fit(history: &[f64], period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("period must be positive".into()));
        }
        let n = history.len();
        let seasonal = n >= 2 * period;
        let k = if seasonal { 4 } else { 2 };
        if n < k + 1 {
            return Err(Error::TooShort {
                needed: k + 1,
                have: n,
            });
        }
        let x = DMatrix::from_fn(n, k, |i, j| Self::basis(i + 1, period, j));
        let y = DVector::from_column_slice(history);
        let fit = ols(&x, &y)?;
        Ok(Self {
            level: fit.coef[0],
            slope: fit.coef[1],
            sin: if seasonal { fit.coef[2] } else { 0.0 },
            cos: if seasonal { fit.coef[3] } else { 0.0 },
            period,
            seasonal,
        })
    }

    fn basis(t: usize, period: usize, j: usize) -> f64 {
        let phase = std::f64::consts::TAU * t as f64 / period as f64;
        match j {
            0 => 1.0,
            1 => t as f64,
            2 => phase.sin(),
            _ => phase.cos(),
        }
    }

    pub fn value_at(&self, t: usize) -> f64 {
        self.level
            + self.slope * t as f64
            + self.sin * Self::basis(t, self.period, 2)
            + self.cos * Self::basis(t, self.period, 3)
    }

    /// Extends the fitted curve past a history of length `n`.
    pub fn forecast(&self, n: usize, horizon: usize) -> Vec<f64> {
        (n + 1..=n + horizon).map(|t| self.value_at(t)).collect()
    }

    pub fn parameters(&self) -> Vec<f64> {
        vec![self.level, self.slope, self.sin, self.cos]
    }
}

pub fn forecast_geomodel(history: &[f64], horizon: usize, period: usize) -> Result<Vec<f64>> {
    check_history(history, horizon)?;
    Ok(GeoModelFit::fit(history, period)?.forecast(history.len(), horizon))
}
