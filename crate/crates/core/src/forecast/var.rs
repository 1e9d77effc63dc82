//! Vector autoregression fitted equation by equation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ols, ridge_ols};
use crate::types::TrajectorySet;

/// Which trajectories share one VAR system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarScope {
    /// One system per style over all units.
    AllUnitsPerStyle,
    /// One system per unit over all styles.
    AllStylesPerUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub order: usize,
    /// Per equation: `[intercept, s0 lag 1..=d, s1 lag 1..=d, ...]`.
    pub coef: Vec<Vec<f64>>,
    /// Standard errors matching `coef`; NaN when the ridge path was taken.
    pub std_errors: Vec<Vec<f64>>,
    pub ridge: bool,
}

impl VarModel {
    pub fn fit(series: &[&[f64]], order: usize) -> Result<Self> {
        let s = series.len();
        let first = series.first().ok_or(Error::Empty("VAR series"))?;
        let n = first.len();
        if let Some(bad) = series.iter().find(|v| v.len() != n) {
            return Err(Error::LengthMismatch { left: n, right: bad.len() });
        }
        if series.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::NonFinite("VAR series"));
        }
        if n < order + 2 {
            return Err(Error::TooShort { needed: order + 2, have: n });
        }
        let rows = n - order;
        let k = 1 + s * order;
        let x = DMatrix::from_fn(rows, k, |i, j| {
            if j == 0 {
                1.0
            } else {
                let (src, lag) = ((j - 1) / order, (j - 1) % order + 1);
                series[src][order + i - lag]
            }
        });
        // Rows must exceed the coefficient count for a determined system.
        let determined = rows > k;
        let mut ridge = !determined;
        let mut coef = Vec::with_capacity(s);
        let mut std_errors = Vec::with_capacity(s);
        let inv_gram = if determined {
            (x.transpose() * &x).try_inverse()
        } else {
            None
        };
        for target in series {
            let y = DVector::from_fn(rows, |i, _| target[order + i]);
            let fit = if determined { ols(&x, &y)? } else { ridge_ols(&x, &y)? };
            ridge |= fit.ridge;
            let se = match (&inv_gram, fit.ridge) {
                (Some(g), false) => {
                    let sigma2 = fit.ssr / (rows - k) as f64;
                    (0..k).map(|j| (sigma2 * g[(j, j)]).max(0.0).sqrt()).collect()
                }
                _ => vec![f64::NAN; k],
            };
            coef.push(fit.coef);
            std_errors.push(se);
        }
        if ridge {
            log::debug!("VAR with {s} series, order {order}, {rows} rows used the ridge fallback");
        }
        Ok(Self { order, coef, std_errors, ridge })
    }

    pub fn n_series(&self) -> usize {
        self.coef.len()
    }

    /// Coefficient of `src` at `lag` in the equation of `dst`.
    pub fn cross(&self, dst: usize, src: usize, lag: usize) -> f64 {
        self.coef[dst][1 + src * self.order + lag - 1]
    }

    /// Joint recursive forecasts following the end of each history.
    pub fn forecast(&self, histories: &[&[f64]], horizon: usize) -> Vec<Vec<f64>> {
        let s = self.n_series();
        let mut h: Vec<Vec<f64>> = histories.iter().map(|v| v.to_vec()).collect();
        for _ in 0..horizon {
            let next: Vec<f64> = (0..s)
                .map(|dst| {
                    let c = &self.coef[dst];
                    let mut y = c[0];
                    for (src, hist) in h.iter().enumerate() {
                        let n = hist.len();
                        for lag in 1..=self.order {
                            y += c[1 + src * self.order + lag - 1] * hist[n - lag];
                        }
                    }
                    y
                })
                .collect();
            for (hist, v) in h.iter_mut().zip(next) {
                hist.push(v);
            }
        }
        h.into_iter()
            .zip(histories)
            .map(|(mut v, orig)| v.split_off(orig.len()))
            .collect()
    }

    pub fn parameters(&self) -> Vec<f64> {
        self.coef.iter().flatten().copied().collect()
    }
}

/// Groups of trajectory indices forming one VAR system each.
pub fn var_groups(ts: &TrajectorySet, scope: VarScope) -> Vec<Vec<usize>> {
    match scope {
        VarScope::AllUnitsPerStyle => (0..ts.n_styles())
            .map(|s| (0..ts.n_units()).map(|u| ts.index(s, u)).collect())
            .collect(),
        VarScope::AllStylesPerUnit => (0..ts.n_units())
            .map(|u| (0..ts.n_styles()).map(|s| ts.index(s, u)).collect())
            .collect(),
    }
}

/// Fits on the pre-test region and forecasts `horizon` steps for every
/// trajectory, in set order.
pub fn forecast_var(
    ts: &TrajectorySet,
    scope: VarScope,
    order: usize,
    horizon: usize,
) -> Result<Vec<Vec<f64>>> {
    let origin = ts.pre_test_len();
    let mut out = vec![Vec::new(); ts.n_trajectories()];
    for group in var_groups(ts, scope) {
        let hist: Vec<&[f64]> = group.iter().map(|&i| &ts.series_at(i)[..origin]).collect();
        let model = VarModel::fit(&hist, order)?;
        for (i, f) in group.into_iter().zip(model.forecast(&hist, horizon)) {
            out[i] = f;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::baselines::forecast_ar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn exact_cross_coefficient() {
        let y1 = noise(1, 80);
        let mut y2 = vec![0.0];
        y2.extend(y1[..79].iter().map(|v| 0.7 * v));
        let m = VarModel::fit(&[&y1, &y2], 1).unwrap();
        assert!((m.cross(1, 0, 1) - 0.7).abs() < 1e-6);
        assert!(m.cross(1, 1, 1).abs() < 1e-6);
    }

    #[test]
    fn independent_series_have_small_cross_terms() {
        let a = noise(2, 300);
        let b = noise(3, 300);
        let m = VarModel::fit(&[&a, &b], 2).unwrap();
        for (dst, src) in [(0, 1), (1, 0)] {
            for lag in 1..=2 {
                let j = 1 + src * 2 + lag - 1;
                assert!(m.coef[dst][j].abs() < 3.0 * m.std_errors[dst][j]);
            }
        }
    }

    #[test]
    fn one_series_is_ar() {
        let mut y = vec![0.2];
        let e = noise(4, 100);
        for t in 1..100 {
            y.push(0.6 * y[t - 1] + 0.1 * e[t]);
        }
        let var = VarModel::fit(&[&y], 3).unwrap().forecast(&[&y], 10);
        assert_eq!(var[0], forecast_ar(&y, 3, 10).unwrap());
    }

    #[test]
    fn underdetermined_takes_ridge() {
        let series: Vec<Vec<f64>> = (0..6).map(|s| noise(10 + s, 12)).collect();
        let refs: Vec<&[f64]> = series.iter().map(|v| v.as_slice()).collect();
        let m = VarModel::fit(&refs, 2).unwrap();
        assert!(m.ridge);
        assert!(m.parameters().iter().all(|v| v.is_finite()));
    }
}
