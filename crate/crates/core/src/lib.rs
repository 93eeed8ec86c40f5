//! Bayesian policy-gradient and actor-critic estimators with Monte-Carlo
//! baselines, exact-gradient oracles, benchmark environments and a
//! reproducible experiment harness.
//!
//! The main entry points are:
//!
//! * [`bpg`]: gradient posteriors over whole trajectories (quadratic Fisher
//!   kernel and Fisher kernel models), with online sparsification and the
//!   policy-update loop.
//! * [`gptd`] and [`bac`]: a Gaussian-process temporal-difference critic and
//!   the actor-critic gradient posterior built on it.
//! * [`mcpg`]: the likelihood-ratio Monte-Carlo estimator.
//! * [`oracles`]: exact gradients and error metrics.
//! * [`harness`]: config-driven experiments writing CSV.

pub mod bac;
pub mod bpg;
pub mod bq;
pub mod envs;
pub mod error;
pub mod estimate;
pub mod fisher;
pub mod gptd;
pub mod harness;
pub mod linalg;
pub mod mcpg;
pub mod optimize;
pub mod oracles;
pub mod policies;
pub mod rng;
pub mod rollout;
pub mod schedule;
pub mod sparse;
pub mod task;

pub use error::{Error, Result};
pub use estimate::{Estimator, GradientEstimate};
