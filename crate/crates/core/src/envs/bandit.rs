use rand_distr::{Distribution, Normal};

use super::{wrong_state, Action, Environment, Objective, Observation, State, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BanditReward {
    /// `r(a) = a`
    Linear,
    /// `r(a) = a²`
    Quadratic,
}

/// Single-state, single-step problem with a real-valued action.
#[derive(Clone, Debug)]
pub struct Bandit {
    pub reward: BanditReward,
    pub reward_noise_std: f64,
}

impl Bandit {
    pub fn new(reward: BanditReward) -> Self {
        Self {
            reward,
            reward_noise_std: 0.0,
        }
    }

    pub fn mean_reward(&self, a: f64) -> f64 {
        match self.reward {
            BanditReward::Linear => a,
            BanditReward::Quadratic => a * a,
        }
    }
}

impl Environment for Bandit {
    fn name(&self) -> &'static str {
        match self.reward {
            BanditReward::Linear => "bandit-linear",
            BanditReward::Quadratic => "bandit-quadratic",
        }
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn objective(&self) -> Objective {
        Objective::Maximize
    }

    fn step_cap(&self) -> usize {
        1
    }

    fn reset(&self, _rng: &mut SimRng) -> State {
        State::Bandit
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Result<Step> {
        self.validate(state)?;
        let a = action.value()?;
        if !a.is_finite() {
            return Err(Error::ContractViolation("non-finite bandit action".into()));
        }
        let mut reward = self.mean_reward(a);
        if self.reward_noise_std > 0.0 {
            reward += Normal::new(0.0, self.reward_noise_std)
                .expect("positive std")
                .sample(rng);
        }
        Ok(Step {
            next_state: State::Bandit,
            reward,
            terminal: true,
        })
    }

    fn observe(&self, _state: &State) -> Observation {
        Observation::Empty
    }

    fn validate(&self, state: &State) -> Result<()> {
        match state {
            State::Bandit => Ok(()),
            other => Err(wrong_state("bandit", other)),
        }
    }
}
