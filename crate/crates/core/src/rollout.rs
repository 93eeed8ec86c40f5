use nalgebra::DVector;

use crate::envs::{Environment, Trajectory, Transition};
use crate::error::{Error, Result};
use crate::policies::Policy;
use crate::rng::SimRng;

/// Runs one episode of at most `cap` steps.
pub fn rollout_capped(
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    cap: usize,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    policy.validate(theta)?;
    let mut state = env.reset(rng);
    let mut transitions = Vec::new();
    let mut truncated = false;
    loop {
        let observation = env.emit(&state, rng);
        let action = policy.sample(theta, &observation, rng)?;
        let step = env.step(&state, &action, rng)?;
        let terminal = step.terminal;
        transitions.push(Transition {
            state,
            observation,
            action,
            reward: step.reward,
            next_state: step.next_state.clone(),
            terminal,
        });
        if terminal {
            break;
        }
        if transitions.len() >= cap {
            truncated = true;
            break;
        }
        state = step.next_state;
    }
    Ok(Trajectory {
        transitions,
        gamma: env.gamma(),
        truncated,
    })
}

/// Runs one episode using the environment's own step cap.
pub fn rollout(
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    rng: &mut SimRng,
) -> Result<Trajectory> {
    rollout_capped(env, policy, theta, env.step_cap(), rng)
}

/// Runs `m` episodes in sequence from one stream.
pub fn episodes(
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    m: usize,
    rng: &mut SimRng,
) -> Result<Vec<Trajectory>> {
    (0..m).map(|_| rollout(env, policy, theta, rng)).collect()
}

/// Like [`episodes`], but fails with `StepCapExceeded` as soon as an
/// episode reaches a cap the environment treats as failure.
pub fn learning_episodes(
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    m: usize,
    rng: &mut SimRng,
) -> Result<Vec<Trajectory>> {
    let cap = env.step_cap();
    let mut out = Vec::with_capacity(m);
    for _ in 0..m {
        let traj = rollout_capped(env, policy, theta, cap, rng)?;
        if traj.truncated && env.cap_is_failure() {
            return Err(Error::StepCapExceeded { cap });
        }
        out.push(traj);
    }
    Ok(out)
}
