use nalgebra::DVector;
use rand::Rng;

use super::{check_dim, logistic, Policy};
use crate::envs::{Action, Observation};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One logistic parameter per observed state:
/// `μ(right | x) = 1 / (1 + exp(-θₓ))`.
///
/// Observations are 1-based indices; action 0 is left and 1 is right.
#[derive(Clone, Debug)]
pub struct WalkLogistic {
    pub n_states: usize,
}

impl Default for WalkLogistic {
    fn default() -> Self {
        Self { n_states: 10 }
    }
}

impl WalkLogistic {
    fn slot(&self, obs: &Observation) -> Result<usize> {
        let i = obs.index()?;
        if i == 0 || i > self.n_states {
            return Err(Error::ContractViolation(format!(
                "walk observation {i} outside 1..={}",
                self.n_states
            )));
        }
        Ok(i - 1)
    }

    pub fn right_probability(&self, theta: &DVector<f64>, obs: &Observation) -> Result<f64> {
        check_dim(self.n_states, theta)?;
        Ok(logistic(theta[self.slot(obs)?]))
    }
}

fn walk_action(action: &Action) -> Result<usize> {
    match action {
        Action::Discrete(a) if *a <= 1 => Ok(*a),
        _ => Err(Error::ZeroDensity),
    }
}

impl Policy for WalkLogistic {
    fn name(&self) -> &'static str {
        "walk-logistic"
    }

    fn dim(&self) -> usize {
        self.n_states
    }

    fn initial_params(&self, _rng: &mut SimRng) -> DVector<f64> {
        DVector::zeros(self.n_states)
    }

    fn sample(&self, theta: &DVector<f64>, obs: &Observation, rng: &mut SimRng) -> Result<Action> {
        let p = self.right_probability(theta, obs)?;
        let u: f64 = rng.random();
        Ok(Action::Discrete(usize::from(u < p)))
    }

    fn log_density(&self, theta: &DVector<f64>, obs: &Observation, action: &Action) -> Result<f64> {
        let p = self.right_probability(theta, obs)?;
        let prob = if walk_action(action)? == 1 {
            p
        } else {
            1.0 - p
        };
        if prob <= 0.0 {
            return Err(Error::ZeroDensity);
        }
        Ok(prob.ln())
    }

    fn score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
    ) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.n_states);
        self.accumulate_score(theta, obs, action, 1.0, &mut out)?;
        Ok(out)
    }

    fn accumulate_score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
        scale: f64,
        out: &mut DVector<f64>,
    ) -> Result<()> {
        let p = self.right_probability(theta, obs)?;
        let slot = self.slot(obs)?;
        let d = if walk_action(action)? == 1 {
            1.0 - p
        } else {
            -p
        };
        out[slot] += scale * d;
        Ok(())
    }

    fn action_probabilities(&self, theta: &DVector<f64>, obs: &Observation) -> Option<Vec<f64>> {
        let p = self.right_probability(theta, obs).ok()?;
        Some(vec![1.0 - p, p])
    }
}
