//! Least-squares helpers shared by the regression-based models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Ridge strength used when a design matrix is rank deficient, relative to
/// the mean diagonal of the Gram matrix.
pub const RIDGE_FALLBACK: f64 = 1e-8;

/// Relative pivot size below which a QR factor is treated as singular.
const RANK_TOL: f64 = 1e-10;

const REFINE_STEPS: usize = 3;

#[derive(Debug, Clone)]
pub struct OlsFit {
    pub coef: Vec<f64>,
    pub residuals: Vec<f64>,
    pub ssr: f64,
    /// True when the ridge fallback was needed.
    pub ridge: bool,
}

fn is_rank_deficient(r: &DMatrix<f64>) -> bool {
    let k = r.ncols().min(r.nrows());
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    max == 0.0 || diag.iter().any(|d| *d <= RANK_TOL * max)
}

/// Ordinary least squares via Householder QR, with a small ridge fallback
/// for rank-deficient designs.
pub fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    if n < k || k == 0 {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot determine {k} coefficients"
        )));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    if is_rank_deficient(&r) {
        return ridge_ols(x, y);
    }
    let qty = qr.q().transpose() * y;
    let coef = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(finish(x, y, coef, false))
}

/// Least squares through the ridge fallback directly; also valid for
/// underdetermined designs (more coefficients than rows).
pub fn ridge_ols(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<OlsFit> {
    if y.len() != x.nrows() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    if x.ncols() == 0 || x.nrows() == 0 {
        return Err(Error::Empty("design matrix"));
    }
    let coef = ridge_solve(x, y)?;
    Ok(finish(x, y, coef, true))
}

fn finish(x: &DMatrix<f64>, y: &DVector<f64>, coef: DVector<f64>, ridge: bool) -> OlsFit {
    let fitted = x * &coef;
    let residuals: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let ssr = residuals.iter().map(|e| e * e).sum();
    OlsFit {
        coef: coef.iter().copied().collect(),
        residuals,
        ssr,
        ridge,
    }
}

fn ridge_solve(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let k = x.ncols();
    let mut gram = x.transpose() * x;
    let mean_diag = (0..k).map(|i| gram[(i, i)]).sum::<f64>() / k as f64;
    let lambda = RIDGE_FALLBACK * if mean_diag > 0.0 { mean_diag } else { 1.0 };
    for i in 0..k {
        gram[(i, i)] += lambda;
    }
    let solve: Box<dyn Fn(&DVector<f64>) -> Result<DVector<f64>>> = match gram.clone().cholesky() {
        Some(ch) => Box::new(move |rhs| Ok(ch.solve(rhs))),
        None => {
            let svd = gram.svd(true, true);
            Box::new(move |rhs| svd.solve(rhs, 1e-14).map_err(|e| Error::Numerical(e.to_string())))
        }
    };
    // Iterated Tikhonov: each pass shrinks the ridge bias on the identified
    // directions by a factor of about lambda / sigma^2, so consistent systems
    // (e.g. a constant series) still come out with an exact fit.
    let mut beta = solve(&(x.transpose() * y))?;
    for _ in 0..REFINE_STEPS {
        let resid = y - x * &beta;
        beta += solve(&(x.transpose() * resid))?;
    }
    Ok(beta)
}

/// Orthogonal projector onto the complement of a design's column space.
///
/// Used to update a nested regression by one extra regressor without
/// refitting: the SSR reduction is `(r'e)^2 / (r'r)` where `r` is the new
/// column with the design projected out and `e` the restricted residuals.
#[derive(Debug, Clone)]
pub struct Annihilator {
    basis: DMatrix<f64>,
}

impl Annihilator {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let qr = x.clone().qr();
        let r = qr.r();
        let basis = if is_rank_deficient(&r) {
            let svd = x.clone().svd(true, false);
            let u = svd.u.expect("left singular vectors requested");
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let keep: Vec<usize> = (0..svd.singular_values.len())
                .filter(|&i| svd.singular_values[i] > RANK_TOL * smax && smax > 0.0)
                .collect();
            DMatrix::from_fn(x.nrows(), keep.len(), |i, j| u[(i, keep[j])])
        } else {
            qr.q()
        };
        Self { basis }
    }

    /// `v` minus its projection onto the design's column space.
    pub fn residual(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.basis.ncols() == 0 {
            return v.clone();
        }
        let coords = self.basis.tr_mul(v);
        v - &self.basis * coords
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fit() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 3.0, 5.0, 7.0]);
        let fit = ols(&x, &y).unwrap();
        assert!(!fit.ridge);
        assert!((fit.coef[0] - 1.0).abs() < 1e-12);
        assert!((fit.coef[1] - 2.0).abs() < 1e-12);
        assert!(fit.ssr < 1e-20);
    }

    #[test]
    fn collinear_design_uses_ridge() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0, 4.0, 8.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let fit = ols(&x, &y).unwrap();
        assert!(fit.ridge);
        assert!(fit.ssr < 1e-10);
    }

    #[test]
    fn annihilator_matches_refit() {
        let x = DMatrix::from_fn(20, 3, |i, j| ((i * (j + 1)) as f64 * 0.37).sin() + j as f64);
        let y = DVector::from_fn(20, |i, _| (i as f64 * 0.11).cos());
        let z = DVector::from_fn(20, |i, _| (i as f64 * 0.71).sin());
        let restricted = ols(&x, &y).unwrap();
        let mut xz = x.clone().insert_column(3, 0.0);
        xz.set_column(3, &z);
        let full = ols(&xz, &y).unwrap();
        let r = Annihilator::new(&x).residual(&z);
        let e = DVector::from_vec(restricted.residuals.clone());
        let drop = r.dot(&e).powi(2) / r.dot(&r);
        assert!((restricted.ssr - drop - full.ssr).abs() < 1e-12);
    }
}
