use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::Error;

/// Gradient estimator tags as used on the command line and in CSV output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Mc,
    Bq1,
    Bq2,
    Bq1Sparse,
    Bq2Sparse,
    Bac,
    BacSparse,
}

impl Estimator {
    pub const ALL: [Estimator; 7] = [
        Estimator::Mc,
        Estimator::Bq1,
        Estimator::Bq2,
        Estimator::Bq1Sparse,
        Estimator::Bq2Sparse,
        Estimator::Bac,
        Estimator::BacSparse,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Estimator::Mc => "mc",
            Estimator::Bq1 => "bq1",
            Estimator::Bq2 => "bq2",
            Estimator::Bq1Sparse => "bq1-sparse",
            Estimator::Bq2Sparse => "bq2-sparse",
            Estimator::Bac => "bac",
            Estimator::BacSparse => "bac-sparse",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::config("estimators", format!("unknown estimator `{s}`")))
    }
}

/// Posterior (or sampling) moments of a policy gradient.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub mean: DVector<f64>,
    /// Posterior covariance for Bayesian estimators, the covariance of the
    /// sample mean for Monte Carlo. `None` when the dimension is too large
    /// to form a dense matrix.
    pub covariance: Option<DMatrix<f64>>,
    /// Number of sampled episodes.
    pub samples: usize,
    pub estimator: Estimator,
}

impl GradientEstimate {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}
