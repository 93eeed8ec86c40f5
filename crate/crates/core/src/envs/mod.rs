//! Episodic simulation environments.
//!
//! Environments are immutable descriptions: stepping is a pure function of
//! the input state, the action and the random draws taken from the caller's
//! stream, so one environment value can be shared across worker threads.

mod bandit;
mod channel;
mod lqr;
mod mountain_car;
mod ship;
mod walk;

pub use bandit::{Bandit, BanditReward};
pub use channel::{Channel, Observed};
pub use lqr::Lqr;
pub use mountain_car::MountainCar;
pub use ship::Ship;
pub use walk::{RandomWalk, LEFT, RIGHT};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Environment state, one variant per environment family.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Bandit,
    Lqr {
        x: f64,
        t: usize,
    },
    /// Random-walk state, numbered from 1.
    Walk(usize),
    Car {
        position: f64,
        velocity: f64,
    },
    /// Ship pose; angles in degrees, turn rate in degrees per second.
    Ship {
        x: f64,
        y: f64,
        heading: f64,
        turn_rate: f64,
        t: usize,
    },
}

/// What the policy sees.
#[derive(Clone, Debug, PartialEq)]
pub enum Observation {
    Empty,
    Index(usize),
    Point(Vec<f64>),
}

impl Observation {
    pub fn index(&self) -> Result<usize> {
        match self {
            Observation::Index(i) => Ok(*i),
            other => Err(Error::ContractViolation(format!(
                "expected an indexed observation, got {other:?}"
            ))),
        }
    }

    pub fn point(&self) -> Result<&[f64]> {
        match self {
            Observation::Point(p) => Ok(p),
            other => Err(Error::ContractViolation(format!(
                "expected a point observation, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(f64),
    /// A squashed continuous action: the policy samples `latent` and the
    /// environment receives `value`.
    Squashed {
        latent: f64,
        value: f64,
    },
}

impl Action {
    pub fn discrete(&self) -> Result<usize> {
        match self {
            Action::Discrete(i) => Ok(*i),
            other => Err(Error::ContractViolation(format!(
                "expected a discrete action, got {other:?}"
            ))),
        }
    }

    /// Value passed to the dynamics for continuous actions.
    pub fn value(&self) -> Result<f64> {
        match self {
            Action::Continuous(v) | Action::Squashed { value: v, .. } => Ok(*v),
            other => Err(Error::ContractViolation(format!(
                "expected a continuous action, got {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Maximize,
    Minimize,
}

impl Objective {
    /// +1 for maximization, -1 for minimization.
    pub fn sign(self) -> f64 {
        match self {
            Objective::Maximize => 1.0,
            Objective::Minimize => -1.0,
        }
    }
}

/// Outcome of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next_state: State,
    pub reward: f64,
    pub terminal: bool,
}

pub trait Environment: Send + Sync {
    fn name(&self) -> &'static str;

    fn gamma(&self) -> f64;

    fn objective(&self) -> Objective;

    /// Default rollout cap; episodes reaching it without a terminal
    /// transition are marked truncated.
    fn step_cap(&self) -> usize;

    /// Whether reaching the cap means the policy has failed rather than an
    /// ordinary truncation. Learning stops on such episodes.
    fn cap_is_failure(&self) -> bool {
        false
    }

    fn reset(&self, rng: &mut SimRng) -> State;

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Result<Step>;

    /// Noise-free observation of `state`.
    fn observe(&self, state: &State) -> Observation;

    /// Observation as delivered to the policy. Wrappers override this to
    /// inject a stochastic channel.
    fn emit(&self, state: &State, _rng: &mut SimRng) -> Observation {
        self.observe(state)
    }

    /// Checks that `state` lies inside the declared bounds.
    fn validate(&self, state: &State) -> Result<()>;
}

pub(crate) fn wrong_state(env: &str, state: &State) -> Error {
    Error::ContractViolation(format!("{env} cannot handle state {state:?}"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub observation: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
    pub terminal: bool,
}

/// One episode.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub gamma: f64,
    /// Set when the rollout cap was hit before a terminal transition.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// `Σ γᵗ rₜ`.
    pub fn discounted_return(&self) -> f64 {
        let mut total = 0.0;
        let mut weight = 1.0;
        for tr in &self.transitions {
            total += weight * tr.reward;
            weight *= self.gamma;
        }
        total
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Checks non-emptiness, state chaining and that only the last
    /// transition may be terminal.
    pub fn check(&self) -> Result<()> {
        if self.transitions.is_empty() {
            return Err(Error::EmptyInput("trajectory"));
        }
        for pair in self.transitions.windows(2) {
            if pair[0].next_state != pair[1].state {
                return Err(Error::ContractViolation(
                    "consecutive transitions do not chain".into(),
                ));
            }
            if pair[0].terminal {
                return Err(Error::ContractViolation(
                    "terminal transition before the end of the episode".into(),
                ));
            }
        }
        if !self.discounted_return().is_finite() {
            return Err(Error::NumericalInconsistency("non-finite return".into()));
        }
        Ok(())
    }

    /// Appends `other`, used only to test additivity of trajectory scores.
    pub fn concat(&self, other: &Trajectory) -> Trajectory {
        let mut transitions = self.transitions.clone();
        transitions.extend(other.transitions.iter().cloned());
        Trajectory {
            transitions,
            gamma: self.gamma,
            truncated: other.truncated,
        }
    }
}
