//! Diagonal-covariance Gaussian mixture fitted by EM.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{as_rows, MAX_ITERATIONS, TOLERANCE};
use crate::error::{Error, Result};
use crate::types::AttributeVector;

/// Lower bound on every per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Points used for k-means++ seeding.
const SEEDING_SAMPLE: usize = 2000;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

impl GmmModel {
    pub fn from_parameters(
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let g = Self {
            weights,
            means,
            variances,
        };
        g.validate()?;
        Ok(g)
    }

    pub(super) fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 || self.means.len() != k || self.variances.len() != k {
            return Err(Error::InvalidArgument("inconsistent mixture sizes".into()));
        }
        let m = self.means[0].len();
        if m == 0
            || self.means.iter().any(|r| r.len() != m)
            || self.variances.iter().any(|r| r.len() != m)
        {
            return Err(Error::InvalidArgument("inconsistent attribute dimension".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("mixture weights must form a simplex".into()));
        }
        if self.variances.iter().flatten().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        Ok(())
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn variances(&self) -> &[Vec<f64>] {
        &self.variances
    }

    /// `ln w_k + ln N(x | mu_k, diag(var_k))` for every component.
    fn joint_log(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut lp = 0.0;
            for ((xi, mu), var) in x.iter().zip(&self.means[k]).zip(&self.variances[k]) {
                let d = xi - mu;
                lp -= 0.5 * (LN_2PI + var.ln() + d * d / var);
            }
            *o = self.weights[k].ln() + lp;
        }
    }

    /// Normalizes joint log densities in place into responsibilities and
    /// returns the log marginal.
    fn normalize(joint: &mut [f64]) -> f64 {
        let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = joint.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        for l in joint.iter_mut() {
            *l = (*l - lse).exp();
        }
        lse
    }

    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n_components()];
        self.joint_log(x, &mut r);
        Self::normalize(&mut r);
        r
    }

    /// Total log-likelihood of `rows`.
    pub fn log_likelihood(&self, rows: &[&[f64]]) -> f64 {
        let mut buf = vec![0.0; self.n_components()];
        rows.iter()
            .map(|x| {
                self.joint_log(x, &mut buf);
                Self::normalize(&mut buf)
            })
            .sum()
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood before each M-step, then after the last one.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// All points were identical; the model sits on the variance floor.
    pub degenerate: bool,
}

fn kmeans_pp(rows: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.shuffle(rng);
    idx.truncate(SEEDING_SAMPLE.max(k));
    let sample: Vec<&[f64]> = idx.iter().map(|&i| rows[i]).collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();

    let mut centers: Vec<Vec<f64>> = vec![sample[0].to_vec()];
    let mut best: Vec<f64> = sample.iter().map(|x| dist2(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = sample.len() - 1;
            for (i, d) in best.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..sample.len())
        };
        let c = sample[pick].to_vec();
        for (b, x) in best.iter_mut().zip(&sample) {
            *b = b.min(dist2(x, &c));
        }
        centers.push(c);
    }
    centers
}

/// EM fit of a `k`-component diagonal Gaussian mixture.
///
/// Requires at least `10 * k` points. Stops when the per-point
/// log-likelihood improves by less than 1e-6 or after 500 iterations.
pub fn fit_gmm(data: &[AttributeVector], k: usize, seed: u64) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    let (m, rows) = as_rows(data)?;
    let n = rows.len();
    if n < 10 * k {
        return Err(Error::InsufficientData(format!(
            "{n} points is fewer than 10 per component for K = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mean: Vec<f64> = (0..m)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let var: Vec<f64> = (0..m)
        .map(|j| {
            (rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64)
                .max(VARIANCE_FLOOR)
        })
        .collect();
    let degenerate = rows.iter().all(|r| *r == rows[0]);
    if degenerate {
        log::warn!("all attribute vectors are identical; mixture collapses to the variance floor");
    }

    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(&rows, k, &mut rng),
        variances: vec![var; k],
    };

    let mut history = Vec::new();
    let mut resp = vec![vec![0.0; k]; n];
    let mut converged = false;
    let mut iterations = 0;
    let mut prev = f64::NEG_INFINITY;
    while iterations < MAX_ITERATIONS {
        // E-step
        let mut ll = 0.0;
        for (x, r) in rows.iter().zip(resp.iter_mut()) {
            model.joint_log(x, r);
            ll += GmmModel::normalize(r);
        }
        history.push(ll);
        if (ll - prev) / (n as f64) < TOLERANCE {
            converged = true;
            break;
        }
        prev = ll;
        iterations += 1;

        // M-step
        for c in 0..k {
            let nk: f64 = resp.iter().map(|r| r[c]).sum();
            if nk <= 1e-12 {
                model.weights[c] = nk / n as f64;
                continue;
            }
            let mut mu = vec![0.0; m];
            for (x, r) in rows.iter().zip(&resp) {
                for (acc, xi) in mu.iter_mut().zip(x.iter()) {
                    *acc += r[c] * xi;
                }
            }
            mu.iter_mut().for_each(|v| *v /= nk);
            let mut v = vec![0.0; m];
            for (x, r) in rows.iter().zip(&resp) {
                for ((acc, xi), mj) in v.iter_mut().zip(x.iter()).zip(&mu) {
                    *acc += r[c] * (xi - mj).powi(2);
                }
            }
            v.iter_mut().for_each(|x| *x = (*x / nk).max(VARIANCE_FLOOR));
            model.weights[c] = nk / n as f64;
            model.means[c] = mu;
            model.variances[c] = v;
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
    }
    if !converged {
        history.push(model.log_likelihood(&rows));
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
        iterations,
        converged,
        degenerate,
    })
}
