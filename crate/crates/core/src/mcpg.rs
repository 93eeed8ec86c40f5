//! Likelihood-ratio Monte-Carlo policy gradient.

use nalgebra::{DMatrix, DVector};

use crate::bpg::PathSample;
use crate::error::{Error, Result};
use crate::estimate::{Estimator, GradientEstimate};

/// `(1/M) Σ R(ξᵢ) u(ξᵢ)` with the sample covariance of the mean.
pub fn mc_gradient(samples: &[PathSample]) -> Result<GradientEstimate> {
    let first = samples.first().ok_or(Error::EmptyInput("path samples"))?;
    let n = first.score.len();
    let m = samples.len();
    let mut terms = Vec::with_capacity(m);
    for s in samples {
        if s.score.len() != n {
            return Err(Error::DimensionMismatch {
                context: "path scores",
                expected: n,
                found: s.score.len(),
            });
        }
        terms.push(&s.score * s.ret);
    }
    let mut mean = DVector::zeros(n);
    for t in &terms {
        mean += t;
    }
    mean /= m as f64;
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalInconsistency(
            "non-finite MC gradient".into(),
        ));
    }
    // dense covariance only where it is cheap to hold
    let covariance = (n <= crate::fisher::DENSE_LIMIT).then(|| {
        let mut cov = DMatrix::zeros(n, n);
        if m > 1 {
            for t in &terms {
                let d = t - &mean;
                cov.ger(1.0, &d, &d, 1.0);
            }
            cov /= ((m - 1) * m) as f64;
        }
        cov
    });
    Ok(GradientEstimate {
        mean,
        covariance,
        samples: m,
        estimator: Estimator::Mc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(u: &[f64], ret: f64) -> PathSample {
        PathSample {
            score: DVector::from_row_slice(u),
            ret,
        }
    }

    #[test]
    fn single_path() {
        let est = mc_gradient(&[sample(&[1.0, 0.0], 2.0)]).unwrap();
        assert_eq!(est.mean, DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(est.covariance.unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn zero_returns_give_zero() {
        let est = mc_gradient(&[sample(&[1.0, 3.0], 0.0), sample(&[-2.0, 0.5], 0.0)]).unwrap();
        assert_eq!(est.mean, DVector::zeros(2));
    }

    #[test]
    fn covariance_of_the_mean() {
        let est = mc_gradient(&[sample(&[1.0], 1.0), sample(&[1.0], 3.0)]).unwrap();
        assert!((est.mean[0] - 2.0).abs() < 1e-15);
        // sample variance 2, divided by M = 2
        assert!((est.covariance.unwrap()[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(mc_gradient(&[]).is_err());
    }
}
