use rand_distr::{Distribution, Normal};

use super::{Action, Environment, Objective, Observation, State, Step};
use crate::error::Result;
use crate::rng::SimRng;

/// Observation channel placed between the state and the policy.
#[derive(Clone, Debug, Default)]
pub enum Channel {
    #[default]
    Identity,
    /// Maps indexed observations through a table: `table[i]` is the label
    /// emitted for index `i`.
    Alias(Vec<usize>),
    /// Adds independent Gaussian noise to point observations.
    Gaussian { std: f64 },
}

impl Channel {
    pub fn apply(&self, observation: Observation, rng: &mut SimRng) -> Observation {
        match (self, observation) {
            (Channel::Identity, obs) => obs,
            (Channel::Alias(table), Observation::Index(i)) => {
                Observation::Index(table.get(i).copied().unwrap_or(i))
            }
            (Channel::Gaussian { std }, Observation::Point(mut p)) if *std > 0.0 => {
                let noise = Normal::new(0.0, *std).expect("positive std");
                for v in &mut p {
                    *v += noise.sample(rng);
                }
                Observation::Point(p)
            }
            (_, obs) => obs,
        }
    }
}

/// An environment whose observations pass through a [`Channel`].
#[derive(Clone, Debug)]
pub struct Observed<E> {
    pub inner: E,
    pub channel: Channel,
}

impl<E: Environment> Environment for Observed<E> {
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn gamma(&self) -> f64 {
        self.inner.gamma()
    }

    fn objective(&self) -> Objective {
        self.inner.objective()
    }

    fn step_cap(&self) -> usize {
        self.inner.step_cap()
    }

    fn cap_is_failure(&self) -> bool {
        self.inner.cap_is_failure()
    }

    fn reset(&self, rng: &mut SimRng) -> State {
        self.inner.reset(rng)
    }

    fn step(&self, state: &State, action: &Action, rng: &mut SimRng) -> Result<Step> {
        self.inner.step(state, action, rng)
    }

    fn observe(&self, state: &State) -> Observation {
        self.inner.observe(state)
    }

    fn emit(&self, state: &State, rng: &mut SimRng) -> Observation {
        self.channel.apply(self.inner.observe(state), rng)
    }

    fn validate(&self, state: &State) -> Result<()> {
        self.inner.validate(state)
    }
}
