use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, Policy};
use crate::envs::{Action, Observation};
use crate::error::{Error, Result};
use crate::rng::SimRng;

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_7;

fn gaussian_log_density(a: f64, mean: f64, std: f64) -> f64 {
    let z = (a - mean) / std;
    -0.5 * z * z - std.ln() - HALF_LOG_TAU
}

/// `(∂/∂mean, ∂/∂std)` of the Gaussian log density.
fn gaussian_score(a: f64, mean: f64, std: f64) -> (f64, f64) {
    let d = a - mean;
    let var = std * std;
    (d / var, (d * d - var) / (var * std))
}

fn continuous(action: &Action) -> Result<f64> {
    match action {
        Action::Continuous(a) if a.is_finite() => Ok(*a),
        _ => Err(Error::ZeroDensity),
    }
}

/// `a ~ N(θ₁, θ₂²)` with no state dependence.
#[derive(Clone, Debug, Default)]
pub struct MeanStdGaussian;

impl MeanStdGaussian {
    fn moments(theta: &DVector<f64>) -> Result<(f64, f64)> {
        check_dim(2, theta)?;
        if !theta[0].is_finite() || !(theta[1] > 0.0 && theta[1].is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "standard deviation must be positive, got {}",
                theta[1]
            )));
        }
        Ok((theta[0], theta[1]))
    }
}

impl Policy for MeanStdGaussian {
    fn name(&self) -> &'static str {
        "gauss-meanstd"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_params(&self, _rng: &mut SimRng) -> DVector<f64> {
        DVector::from_vec(vec![0.0, 1.0])
    }

    fn validate(&self, theta: &DVector<f64>) -> Result<()> {
        Self::moments(theta).map(|_| ())
    }

    fn sample(&self, theta: &DVector<f64>, _obs: &Observation, rng: &mut SimRng) -> Result<Action> {
        let (m, s) = Self::moments(theta)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(Action::Continuous(m + s * z))
    }

    fn log_density(
        &self,
        theta: &DVector<f64>,
        _obs: &Observation,
        action: &Action,
    ) -> Result<f64> {
        let (m, s) = Self::moments(theta)?;
        Ok(gaussian_log_density(continuous(action)?, m, s))
    }

    fn score(
        &self,
        theta: &DVector<f64>,
        _obs: &Observation,
        action: &Action,
    ) -> Result<DVector<f64>> {
        let (m, s) = Self::moments(theta)?;
        let (dm, ds) = gaussian_score(continuous(action)?, m, s);
        Ok(DVector::from_vec(vec![dm, ds]))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LqrParameterization {
    /// `θ = (λ, σ)`.
    Direct,
    /// `θ = (κ₁, κ₂)` with `λ = -1.999 + 1.998/(1+e^κ₁)` and
    /// `σ = 0.001 + 1/(1+e^κ₂)`.
    Squashed,
}

/// Linear-Gaussian feedback `a ~ N(λx, σ²)`.
#[derive(Clone, Debug)]
pub struct LqrGaussian {
    pub parameterization: LqrParameterization,
}

impl LqrGaussian {
    pub fn direct() -> Self {
        Self {
            parameterization: LqrParameterization::Direct,
        }
    }

    pub fn squashed() -> Self {
        Self {
            parameterization: LqrParameterization::Squashed,
        }
    }

    /// `(λ, σ)` for the given parameters.
    pub fn gain_and_std(&self, theta: &DVector<f64>) -> Result<(f64, f64)> {
        check_dim(2, theta)?;
        let (gain, std) = match self.parameterization {
            LqrParameterization::Direct => (theta[0], theta[1]),
            LqrParameterization::Squashed => (
                -1.999 + 1.998 * super::logistic(-theta[0]),
                0.001 + super::logistic(-theta[1]),
            ),
        };
        if !gain.is_finite() || !(std > 0.0 && std.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "invalid gain {gain} or standard deviation {std}"
            )));
        }
        Ok((gain, std))
    }

    /// Diagonal Jacobian `(dλ/dθ₁, dσ/dθ₂)`.
    pub fn jacobian(&self, theta: &DVector<f64>) -> (f64, f64) {
        match self.parameterization {
            LqrParameterization::Direct => (1.0, 1.0),
            LqrParameterization::Squashed => {
                let s1 = super::logistic(-theta[0]);
                let s2 = super::logistic(-theta[1]);
                (-1.998 * s1 * (1.0 - s1), -s2 * (1.0 - s2))
            }
        }
    }

    /// Inverse of the squashing maps, for converting `(λ, σ)` to `κ`.
    pub fn squash_inverse(gain: f64, std: f64) -> Result<(f64, f64)> {
        let p = (gain + 1.999) / 1.998;
        let q = std - 0.001;
        if !(0.0 < p && p < 1.0 && 0.0 < q && q < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "({gain}, {std}) lies outside the squashed range"
            )));
        }
        Ok((((1.0 - p) / p).ln(), ((1.0 - q) / q).ln()))
    }

    fn state(obs: &Observation) -> Result<f64> {
        let p = obs.point()?;
        p.first()
            .copied()
            .ok_or(Error::ContractViolation("empty LQR observation".into()))
    }
}

impl Policy for LqrGaussian {
    fn name(&self) -> &'static str {
        "lqr-gauss"
    }

    fn dim(&self) -> usize {
        2
    }

    fn initial_params(&self, rng: &mut SimRng) -> DVector<f64> {
        match self.parameterization {
            LqrParameterization::Direct => DVector::from_vec(vec![-0.2, 1.0]),
            LqrParameterization::Squashed => DVector::from_vec(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ]),
        }
    }

    fn validate(&self, theta: &DVector<f64>) -> Result<()> {
        self.gain_and_std(theta).map(|_| ())
    }

    fn sample(&self, theta: &DVector<f64>, obs: &Observation, rng: &mut SimRng) -> Result<Action> {
        let (gain, std) = self.gain_and_std(theta)?;
        let x = Self::state(obs)?;
        let z: f64 = StandardNormal.sample(rng);
        Ok(Action::Continuous(gain * x + std * z))
    }

    fn log_density(&self, theta: &DVector<f64>, obs: &Observation, action: &Action) -> Result<f64> {
        let (gain, std) = self.gain_and_std(theta)?;
        let x = Self::state(obs)?;
        Ok(gaussian_log_density(continuous(action)?, gain * x, std))
    }

    fn score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
    ) -> Result<DVector<f64>> {
        let (gain, std) = self.gain_and_std(theta)?;
        let x = Self::state(obs)?;
        let (dm, ds) = gaussian_score(continuous(action)?, gain * x, std);
        let (j1, j2) = self.jacobian(theta);
        Ok(DVector::from_vec(vec![dm * x * j1, ds * j2]))
    }
}
