//! Forecast error metrics.

use crate::error::{Error, Result};

/// Truth values with magnitude below this are left out of MAPE.
pub const MAPE_ZERO_GUARD: f64 = 1e-6;

fn check_pair(predicted: &[f64], truth: &[f64]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("metric input"));
    }
    if predicted.iter().chain(truth).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric input"));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair(predicted, truth)?;
    let sum: f64 = predicted.iter().zip(truth).map(|(p, y)| (p - y).abs()).sum();
    Ok(sum / predicted.len() as f64)
}

/// MAPE together with how many points were skipped by the zero guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    pub percent: f64,
    pub skipped: usize,
}

/// Mean absolute percentage error over entries whose truth is not near zero.
pub fn mape_detailed(predicted: &[f64], truth: &[f64]) -> Result<Mape> {
    check_pair(predicted, truth)?;
    let mut sum = 0.0;
    let mut kept = 0usize;
    for (p, y) in predicted.iter().zip(truth) {
        if y.abs() < MAPE_ZERO_GUARD {
            continue;
        }
        sum += ((p - y) / y).abs();
        kept += 1;
    }
    if kept == 0 {
        return Err(Error::MapeUndefined);
    }
    Ok(Mape {
        percent: 100.0 * sum / kept as f64,
        skipped: predicted.len() - kept,
    })
}

/// Mean absolute percentage error, in percent.
pub fn mape(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    mape_detailed(predicted, truth).map(|m| m.percent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_values() {
        assert!((mae(&[0.1, 0.2], &[0.2, 0.2]).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(mae(&[1.0, 3.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!((mape(&[0.1, 0.2], &[0.2, 0.2]).unwrap() - 25.0).abs() < 1e-12);
        assert!(matches!(mape(&[0.3], &[0.0]), Err(Error::MapeUndefined)));
    }

    #[test]
    fn zero_guard_counts_skips() {
        let m = mape_detailed(&[0.3, 0.2], &[0.0, 0.1]).unwrap();
        assert_eq!(m.skipped, 1);
        assert!((m.percent - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(mae(&[f64::NAN], &[1.0]), Err(Error::NonFinite(_))));
        assert!(mae(&[], &[]).is_err());
    }

    #[test]
    fn mape_is_not_symmetric() {
        let a = [0.1, 0.3];
        let b = [0.2, 0.2];
        assert_ne!(mape(&a, &b).unwrap(), mape(&b, &a).unwrap());
    }

    proptest! {
        #[test]
        fn mae_symmetric_and_nonnegative(
            pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40)
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let ab = mae(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, mae(&b, &a).unwrap());
            prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(ab == 0.0, a == b);
        }

        #[test]
        fn mape_zero_exactly_on_identity(v in prop::collection::vec(0.01f64..1.0, 1..40)) {
            prop_assert_eq!(mape(&v, &v).unwrap(), 0.0);
            let mut w = v.clone();
            w[0] += 0.5;
            prop_assert!(mape(&w, &v).unwrap() > 0.0);
        }
    }
}
