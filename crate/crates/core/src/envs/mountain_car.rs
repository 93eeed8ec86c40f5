use rand::Rng;

use super::{wrong_state, Action, Environment, Objective, Observation, State, Step};
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub const POSITION_MIN: f64 = -1.2;
pub const POSITION_MAX: f64 = 0.5;
pub const VELOCITY_MAX: f64 = 0.07;

/// Under-powered car in a valley; the episode ends at the right boundary.
///
/// Actions `0, 1, 2` push with force `-1, 0, +1`. Observations are the
/// state mapped to the unit square.
#[derive(Clone, Debug)]
pub struct MountainCar {
    pub gamma: f64,
    pub cap: usize,
}

impl Default for MountainCar {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            cap: 1000,
        }
    }
}

impl MountainCar {
    /// Maps a state into `[0, 1]²`.
    pub fn normalize(position: f64, velocity: f64) -> [f64; 2] {
        [
            (position - POSITION_MIN) / (POSITION_MAX - POSITION_MIN),
            (velocity + VELOCITY_MAX) / (2.0 * VELOCITY_MAX),
        ]
    }

    pub fn dynamics(position: f64, velocity: f64, force: f64) -> (f64, f64) {
        let mut v = (velocity + 0.001 * force - 0.0025 * (3.0 * position).cos())
            .clamp(-VELOCITY_MAX, VELOCITY_MAX);
        let x = (position + v).clamp(POSITION_MIN, POSITION_MAX);
        if x <= POSITION_MIN {
            v = 0.0;
        }
        (x, v)
    }
}

impl Environment for MountainCar {
    fn name(&self) -> &'static str {
        "mountaincar"
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn objective(&self) -> Objective {
        Objective::Maximize
    }

    fn step_cap(&self) -> usize {
        self.cap
    }

    fn reset(&self, rng: &mut SimRng) -> State {
        State::Car {
            position: rng.random_range(POSITION_MIN..POSITION_MAX),
            velocity: rng.random_range(-VELOCITY_MAX..=VELOCITY_MAX),
        }
    }

    fn step(&self, state: &State, action: &Action, _rng: &mut SimRng) -> Result<Step> {
        self.validate(state)?;
        let State::Car { position, velocity } = *state else {
            unreachable!()
        };
        let a = action.discrete()?;
        if a > 2 {
            return Err(Error::ContractViolation(format!("mountain car action {a}")));
        }
        if position >= POSITION_MAX {
            // already at the goal: absorbing
            return Ok(Step {
                next_state: state.clone(),
                reward: -1.0,
                terminal: true,
            });
        }
        let (x, v) = Self::dynamics(position, velocity, a as f64 - 1.0);
        Ok(Step {
            next_state: State::Car {
                position: x,
                velocity: v,
            },
            reward: -1.0,
            terminal: x >= POSITION_MAX,
        })
    }

    fn observe(&self, state: &State) -> Observation {
        match state {
            State::Car { position, velocity } => {
                Observation::Point(Self::normalize(*position, *velocity).to_vec())
            }
            _ => Observation::Empty,
        }
    }

    fn validate(&self, state: &State) -> Result<()> {
        match state {
            State::Car { position, velocity }
                if (POSITION_MIN..=POSITION_MAX).contains(position)
                    && (-VELOCITY_MAX..=VELOCITY_MAX).contains(velocity) =>
            {
                Ok(())
            }
            other => Err(wrong_state("mountaincar", other)),
        }
    }
}
