use rand_distr::{Distribution, Normal};

use super::{wrong_state, Action, Environment, Objective, Observation, State, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Chain of states `1..=n` with a retaining wall at state 1 and an
/// absorbing, zero-reward state `n`.
///
/// Every step taken from states `1..n` costs 1 on average (plus Gaussian
/// noise), so the objective is minimized by walking right.
#[derive(Clone, Debug)]
pub struct RandomWalk {
    pub n_states: usize,
    pub reward_noise_std: f64,
    pub gamma: f64,
    pub cap: usize,
}

impl Default for RandomWalk {
    fn default() -> Self {
        Self {
            n_states: 10,
            reward_noise_std: 0.1,
            gamma: 0.99,
            cap: 1_000_000,
        }
    }
}

impl RandomWalk {
    pub fn with_states(n_states: usize) -> Self {
        Self {
            n_states,
            ..Self::default()
        }
    }

    /// Deterministic successor of `state` under `action`.
    pub fn successor(&self, state: usize, action: usize) -> usize {
        if action == RIGHT {
            state + 1
        } else {
            state.saturating_sub(1).max(1)
        }
    }

    pub fn mean_reward(&self, state: usize) -> f64 {
        if state < self.n_states {
            1.0
        } else {
            0.0
        }
    }
}

impl Environment for RandomWalk {
    fn name(&self) -> &'static str {
        "randomwalk"
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn objective(&self) -> Objective {
        Objective::Minimize
    }

    fn step_cap(&self) -> usize {
        self.cap
    }

    fn cap_is_failure(&self) -> bool {
        true
    }

    fn reset(&self, _rng: &mut SimRng) -> State {
        State::Walk(1)
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Result<Step> {
        self.validate(state)?;
        let State::Walk(x) = *state else {
            unreachable!()
        };
        if x == self.n_states {
            return Err(Error::ContractViolation(
                "cannot step from the absorbing state".into(),
            ));
        }
        let a = action.discrete()?;
        if a > RIGHT {
            return Err(Error::ContractViolation(format!("walk action {a}")));
        }
        let mut reward = self.mean_reward(x);
        if self.reward_noise_std > 0.0 {
            reward += Normal::new(0.0, self.reward_noise_std)
                .expect("positive std")
                .sample(rng);
        }
        let next = self.successor(x, a);
        Ok(Step {
            next_state: State::Walk(next),
            reward,
            terminal: next == self.n_states,
        })
    }

    fn observe(&self, state: &State) -> Observation {
        match state {
            State::Walk(x) => Observation::Index(*x),
            _ => Observation::Empty,
        }
    }

    fn validate(&self, state: &State) -> Result<()> {
        match state {
            State::Walk(x) if (1..=self.n_states).contains(x) => Ok(()),
            other => Err(wrong_state("randomwalk", other)),
        }
    }
}
