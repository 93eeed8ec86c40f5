//! Parametric stochastic policies with closed-form score functions.

mod cmac;
mod gaussian;
mod logistic;
mod softmax_rbf;

pub use cmac::{CmacGaussian, CmacLayout};
pub use gaussian::{LqrGaussian, LqrParameterization, MeanStdGaussian};
pub use logistic::WalkLogistic;
pub use softmax_rbf::SoftmaxRbf;

use nalgebra::DVector;

use crate::envs::{Action, Observation, Trajectory};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub trait Policy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Number of parameters.
    fn dim(&self) -> usize;

    /// Parameters used when a run does not specify any.
    fn initial_params(&self, rng: &mut SimRng) -> DVector<f64>;

    /// Checks that `theta` belongs to the parameter domain.
    fn validate(&self, theta: &DVector<f64>) -> Result<()> {
        check_dim(self.dim(), theta)?;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "non-finite policy parameter".into(),
            ));
        }
        Ok(())
    }

    fn sample(&self, theta: &DVector<f64>, obs: &Observation, rng: &mut SimRng) -> Result<Action>;

    fn log_density(&self, theta: &DVector<f64>, obs: &Observation, action: &Action) -> Result<f64>;

    /// `∇θ log μ(a | obs; θ)`.
    fn score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
    ) -> Result<DVector<f64>>;

    /// Adds `scale * score` into `out`. Families with sparse scores override
    /// this to avoid a dense temporary.
    fn accumulate_score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
        scale: f64,
        out: &mut DVector<f64>,
    ) -> Result<()> {
        out.axpy(scale, &self.score(theta, obs, action)?, 1.0);
        Ok(())
    }

    /// Action probabilities for discrete families, `None` otherwise.
    fn action_probabilities(&self, _theta: &DVector<f64>, _obs: &Observation) -> Option<Vec<f64>> {
        None
    }
}

pub(crate) fn check_dim(expected: usize, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::DimensionMismatch {
            context: "policy parameters",
            expected,
            found: theta.len(),
        });
    }
    Ok(())
}

/// Sum of per-step scores along a trajectory, using the recorded observations.
pub fn trajectory_score(
    policy: &dyn Policy,
    theta: &DVector<f64>,
    trajectory: &Trajectory,
) -> Result<DVector<f64>> {
    let mut total = DVector::zeros(policy.dim());
    for tr in &trajectory.transitions {
        policy.accumulate_score(theta, &tr.observation, &tr.action, 1.0, &mut total)?;
    }
    Ok(total)
}

/// Sum of per-step log densities along a trajectory.
pub fn trajectory_log_density(
    policy: &dyn Policy,
    theta: &DVector<f64>,
    trajectory: &Trajectory,
) -> Result<f64> {
    trajectory
        .transitions
        .iter()
        .map(|tr| policy.log_density(theta, &tr.observation, &tr.action))
        .sum()
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub(crate) fn sample_categorical(probs: &[f64], rng: &mut SimRng) -> usize {
    use rand::Rng;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
