use rand_distr::{Distribution, Normal};

use super::{wrong_state, Action, Environment, Objective, Observation, State, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Scalar linear system with quadratic cost over a fixed horizon.
///
/// `x' = x + a + n`, cost `x² + 0.1 a²`, minimized.
#[derive(Clone, Debug)]
pub struct Lqr {
    pub horizon: usize,
    pub x0_mean: f64,
    pub x0_var: f64,
    pub transition_var: f64,
    pub action_cost: f64,
    pub reward_noise_std: f64,
}

impl Default for Lqr {
    fn default() -> Self {
        Self {
            horizon: 20,
            x0_mean: 0.3,
            x0_var: 0.001,
            transition_var: 0.01,
            action_cost: 0.1,
            reward_noise_std: 0.0,
        }
    }
}

impl Lqr {
    pub fn mean_cost(&self, x: f64, a: f64) -> f64 {
        x * x + self.action_cost * a * a
    }
}

fn normal(mean: f64, var: f64, rng: &mut SimRng) -> f64 {
    if var <= 0.0 {
        return mean;
    }
    Normal::new(mean, var.sqrt())
        .expect("finite variance")
        .sample(rng)
}

impl Environment for Lqr {
    fn name(&self) -> &'static str {
        "lqr"
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn objective(&self) -> Objective {
        Objective::Minimize
    }

    fn step_cap(&self) -> usize {
        self.horizon
    }

    fn reset(&self, rng: &mut SimRng) -> State {
        State::Lqr {
            x: normal(self.x0_mean, self.x0_var, rng),
            t: 0,
        }
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Result<Step> {
        self.validate(state)?;
        let State::Lqr { x, t } = *state else {
            unreachable!()
        };
        let a = action.value()?;
        if !a.is_finite() {
            return Err(Error::ContractViolation("non-finite LQR action".into()));
        }
        let mut reward = self.mean_cost(x, a);
        if self.reward_noise_std > 0.0 {
            reward += normal(0.0, self.reward_noise_std.powi(2), rng);
        }
        let next = x + a + normal(0.0, self.transition_var, rng);
        Ok(Step {
            next_state: State::Lqr { x: next, t: t + 1 },
            reward,
            terminal: t + 1 == self.horizon,
        })
    }

    fn observe(&self, state: &State) -> Observation {
        match state {
            State::Lqr { x, .. } => Observation::Point(vec![*x]),
            _ => Observation::Empty,
        }
    }

    fn validate(&self, state: &State) -> Result<()> {
        match state {
            State::Lqr { x, t } if x.is_finite() && *t < self.horizon => Ok(()),
            other => Err(wrong_state("lqr", other)),
        }
    }
}
