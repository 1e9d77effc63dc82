//! Non-negative matrix factorization with multiplicative updates.
//!
//! The data matrix `X` (events by attributes) is approximated by `H W`
//! where each row of `W` is a style: a non-negative profile over the
//! attributes. Rows of `W` are normalized to sum to one after fitting and
//! the scale is moved into the loadings.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{as_rows, MAX_ITERATIONS, TOLERANCE};
use crate::error::{Error, Result};
use crate::types::AttributeVector;

const EPS: f64 = 1e-300;
const NNLS_SWEEPS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfModel {
    /// `K x M`, each row non-negative and summing to one (or all zero).
    factors: Vec<Vec<f64>>,
    /// Row sums of the raw factors before normalization.
    scales: Vec<f64>,
}

impl NmfModel {
    pub fn from_factors(factors: Vec<Vec<f64>>, scales: Vec<f64>) -> Result<Self> {
        let m = Self { factors, scales };
        m.validate()?;
        Ok(m)
    }

    pub(super) fn validate(&self) -> Result<()> {
        let k = self.factors.len();
        if k == 0 || self.scales.len() != k {
            return Err(Error::InvalidArgument("inconsistent factor count".into()));
        }
        let m = self.factors[0].len();
        if m == 0 || self.factors.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidArgument("inconsistent attribute dimension".into()));
        }
        if self.factors.iter().flatten().chain(&self.scales).any(|v| !(*v >= 0.0)) {
            return Err(Error::NegativeInput);
        }
        Ok(())
    }

    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.factors[0].len()
    }

    pub fn factors(&self) -> &[Vec<f64>] {
        &self.factors
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Non-negative least-squares weights of `attrs` on the style profiles,
    /// normalized to the simplex. Falls back to uniform when every weight is
    /// zero.
    pub fn posterior(&self, attrs: &[f64]) -> Vec<f64> {
        let k = self.n_factors();
        let gram: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| dot(&self.factors[i], &self.factors[j]))
                    .collect()
            })
            .collect();
        let b: Vec<f64> = self.factors.iter().map(|w| dot(w, attrs)).collect();
        let mut h = vec![0.0; k];
        // Cyclic coordinate descent on 1/2 h'Gh - b'h subject to h >= 0.
        for _ in 0..NNLS_SWEEPS {
            let mut change = 0.0f64;
            for i in 0..k {
                if gram[i][i] <= 0.0 {
                    continue;
                }
                let g: f64 = b[i] - dot(&gram[i], &h);
                let next = (h[i] + g / gram[i][i]).max(0.0);
                change = change.max((next - h[i]).abs());
                h[i] = next;
            }
            if change < 1e-14 {
                break;
            }
        }
        let total: f64 = h.iter().sum();
        if total > 0.0 {
            h.iter_mut().for_each(|v| *v /= total);
            h
        } else {
            vec![1.0 / k as f64; k]
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone)]
pub struct NmfFit {
    pub model: NmfModel,
    /// Per-event loadings `H` (events by styles), scaled to match the
    /// normalized factors.
    pub loadings: Vec<Vec<f64>>,
    /// Squared Frobenius reconstruction error at the start and after every
    /// iteration.
    pub errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn sq_error(x: &DMatrix<f64>, h: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    (x - h * w).norm_squared()
}

/// Lee-Seung multiplicative updates minimizing `||X - HW||_F^2`.
pub fn fit_nmf(data: &[AttributeVector], k: usize, seed: u64) -> Result<NmfFit> {
    let (m, rows) = as_rows(data)?;
    let n = rows.len();
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "K = {k} must lie in 1..={}",
            m.min(n)
        )));
    }
    if rows.iter().any(|r| r.iter().any(|v| *v < 0.0)) {
        return Err(Error::NegativeInput);
    }
    let x = DMatrix::from_fn(n, m, |i, j| rows[i][j]);
    let x_norm = x.norm_squared();
    if x_norm == 0.0 {
        return Ok(NmfFit {
            model: NmfModel {
                factors: vec![vec![0.0; m]; k],
                scales: vec![0.0; k],
            },
            loadings: vec![vec![0.0; k]; n],
            errors: vec![0.0],
            iterations: 0,
            converged: true,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let level = (x.mean() / k as f64).sqrt().max(1e-3);
    let mut h = DMatrix::from_fn(n, k, |_, _| level * (0.5 + rng.random::<f64>()));
    let mut w = DMatrix::from_fn(k, m, |_, _| level * (0.5 + rng.random::<f64>()));

    let mut errors = vec![sq_error(&x, &h, &w)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let num_h = &x * w.transpose();
        let den_h = &h * (&w * w.transpose());
        h.zip_zip_apply(&num_h, &den_h, |hv, nv, dv| *hv *= nv / (dv + EPS));
        let num_w = h.transpose() * &x;
        let den_w = (h.transpose() * &h) * &w;
        w.zip_zip_apply(&num_w, &den_w, |wv, nv, dv| *wv *= nv / (dv + EPS));
        iterations += 1;

        let err = sq_error(&x, &h, &w);
        let prev = *errors.last().expect("seeded with the initial error");
        errors.push(err);
        if err <= 1e-16 * x_norm || (prev - err) <= TOLERANCE * prev {
            converged = true;
            break;
        }
    }

    let mut factors = vec![vec![0.0; m]; k];
    let mut scales = vec![0.0; k];
    for c in 0..k {
        let s: f64 = w.row(c).iter().sum();
        scales[c] = s;
        if s > 0.0 {
            for j in 0..m {
                factors[c][j] = w[(c, j)] / s;
            }
        }
    }
    let loadings = (0..n)
        .map(|i| (0..k).map(|c| h[(i, c)] * scales[c]).collect())
        .collect();
    Ok(NmfFit {
        model: NmfModel { factors, scales },
        loadings,
        errors,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(v: Vec<f64>) -> AttributeVector {
        AttributeVector::new(v).unwrap()
    }

    fn random_data(seed: u64, n: usize, m: usize) -> Vec<AttributeVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| av((0..m).map(|_| rng.random::<f64>()).collect()))
            .collect()
    }

    #[test]
    fn rank_one_is_exact() {
        let u = [0.2, 0.5, 1.0, 0.7, 0.1, 0.9];
        let v = [0.3, 0.8, 0.5, 0.9];
        let data: Vec<AttributeVector> = u
            .iter()
            .map(|a| av(v.iter().map(|b| a * b).collect()))
            .collect();
        let fit = fit_nmf(&data, 1, 1).unwrap();
        assert!(*fit.errors.last().unwrap() < 1e-8);
    }

    #[test]
    fn objective_never_increases() {
        let data = random_data(2, 60, 8);
        let fit = fit_nmf(&data, 3, 5).unwrap();
        for w in fit.errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
        assert!(fit.model.factors().iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn full_rank_fits_at_least_as_well_as_rank_one() {
        let data = random_data(3, 40, 5);
        let one = fit_nmf(&data, 1, 0).unwrap();
        let full = fit_nmf(&data, 5, 0).unwrap();
        assert!(full.errors.last().unwrap() <= one.errors.last().unwrap());
    }

    #[test]
    fn zero_matrix() {
        let data: Vec<AttributeVector> = (0..5).map(|_| av(vec![0.0; 3])).collect();
        let fit = fit_nmf(&data, 2, 0).unwrap();
        assert_eq!(fit.errors, vec![0.0]);
        assert!(fit.model.factors().iter().flatten().all(|v| *v == 0.0));
        assert_eq!(fit.model.posterior(&[0.0; 3]), vec![0.5, 0.5]);
    }

    #[test]
    fn negative_input_rejected() {
        let data = vec![AttributeVector(vec![0.1, -0.2])];
        assert!(matches!(fit_nmf(&data, 1, 0), Err(Error::NegativeInput)));
    }

    #[test]
    fn posterior_on_simplex_and_recovers_pure_style() {
        let model = NmfModel::from_factors(
            vec![vec![0.5, 0.5, 0.0, 0.0], vec![0.0, 0.0, 0.5, 0.5]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let p = model.posterior(&[0.4, 0.4, 0.0, 0.0]);
        assert!((p[0] - 1.0).abs() < 1e-12);
        let p = model.posterior(&[0.2, 0.2, 0.6, 0.6]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn deterministic() {
        let data = random_data(8, 30, 6);
        assert_eq!(fit_nmf(&data, 3, 4).unwrap().model, fit_nmf(&data, 3, 4).unwrap().model);
    }
}
