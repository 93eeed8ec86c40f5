//! Concrete environment-policy pairs with their oracles and evaluation
//! metrics.

use nalgebra::DVector;

use crate::envs::{
    Bandit, BanditReward, Environment, Lqr, MountainCar, RandomWalk, Ship, State, Trajectory,
};
use crate::error::{Error, Result};
use crate::fisher::{
    analytic_bandit, analytic_lqr, fit_linear_gaussian, ml_lqr, FisherInfo, FisherMethod,
};
use crate::optimize::{sampled_fisher, Problem};
use crate::oracles::{
    exact_discrete, exact_gradient_bandit, exact_value_bandit, lqr_gradient, lqr_value,
    optimal_value, TabularMdp,
};
use crate::policies::{
    CmacGaussian, LqrGaussian, MeanStdGaussian, Policy, SoftmaxRbf, WalkLogistic,
};
use crate::rng::SimRng;
use crate::rollout::rollout_capped;

/// Evaluation episodes for the mountain car.
pub const CAR_EVAL_EPISODES: usize = 1000;
/// Step limit of a mountain-car evaluation episode.
pub const CAR_EVAL_CAP: usize = 200;
/// Evaluation executions for ship steering.
pub const SHIP_EVAL_EPISODES: usize = 100;
/// Trajectories simulated from the fitted model for the ML Fisher estimate.
pub const ML_TRAJECTORIES: usize = 1000;

#[derive(Clone, Debug)]
pub enum Task {
    Bandit {
        env: Bandit,
        policy: MeanStdGaussian,
    },
    Lqr {
        env: Lqr,
        policy: LqrGaussian,
    },
    Walk {
        env: RandomWalk,
        policy: WalkLogistic,
        mdp: TabularMdp,
        optimum: f64,
    },
    MountainCar {
        env: MountainCar,
        policy: SoftmaxRbf,
        eval_episodes: usize,
    },
    Ship {
        env: Ship,
        policy: CmacGaussian,
        eval_episodes: usize,
    },
}

impl Task {
    pub fn bandit(reward: BanditReward) -> Self {
        Task::Bandit {
            env: Bandit::new(reward),
            policy: MeanStdGaussian,
        }
    }

    pub fn lqr(policy: LqrGaussian) -> Self {
        Task::Lqr {
            env: Lqr::default(),
            policy,
        }
    }

    pub fn walk(env: RandomWalk) -> Self {
        let mdp = TabularMdp::random_walk(&env);
        let optimum = optimal_value(&mdp, env.gamma, env.objective());
        Task::Walk {
            policy: WalkLogistic {
                n_states: env.n_states,
            },
            env,
            mdp,
            optimum,
        }
    }

    pub fn mountain_car() -> Self {
        Task::MountainCar {
            env: MountainCar::default(),
            policy: SoftmaxRbf::default(),
            eval_episodes: CAR_EVAL_EPISODES,
        }
    }

    pub fn ship(policy: CmacGaussian) -> Self {
        Task::Ship {
            env: Ship::default(),
            policy,
            eval_episodes: SHIP_EVAL_EPISODES,
        }
    }

    /// Resolves an environment name to its default task.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "bandit-linear" => Task::bandit(BanditReward::Linear),
            "bandit-quadratic" => Task::bandit(BanditReward::Quadratic),
            "lqr" => Task::lqr(LqrGaussian::direct()),
            "lqr-squashed" => Task::lqr(LqrGaussian::squashed()),
            "walk" => Task::walk(RandomWalk::default()),
            "mountain-car" => Task::mountain_car(),
            "ship" => Task::ship(CmacGaussian::default()),
            _ => {
                return Err(Error::config(
                    "env",
                    format!("unknown environment `{name}`"),
                ))
            }
        })
    }

    /// Exact `∇η` where a closed form or tabular solution exists.
    pub fn exact_gradient(&self, theta: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        Ok(match self {
            Task::Bandit { env, .. } => Some(exact_gradient_bandit(env.reward, theta)?),
            Task::Lqr { env, policy } => Some(lqr_gradient(env, policy, theta)?),
            Task::Walk {
                env, policy, mdp, ..
            } => Some(exact_discrete(mdp, policy, theta, env.gamma)?.gradient),
            Task::MountainCar { .. } | Task::Ship { .. } => None,
        })
    }

    /// Exact `η` where available.
    pub fn exact_value(&self, theta: &DVector<f64>) -> Result<Option<f64>> {
        Ok(match self {
            Task::Bandit { env, .. } => Some(exact_value_bandit(env.reward, theta)?),
            Task::Lqr { env, policy } => Some(lqr_value(env, policy, theta)?),
            Task::Walk {
                env, policy, mdp, ..
            } => Some(exact_discrete(mdp, policy, theta, env.gamma)?.value),
            Task::MountainCar { .. } | Task::Ship { .. } => None,
        })
    }

    /// Path length used by the trajectory noise model.
    pub fn horizon(&self) -> usize {
        match self {
            Task::Lqr { env, .. } => env.horizon,
            _ => 1,
        }
    }
}

impl Problem for Task {
    fn env(&self) -> &dyn Environment {
        match self {
            Task::Bandit { env, .. } => env,
            Task::Lqr { env, .. } => env,
            Task::Walk { env, .. } => env,
            Task::MountainCar { env, .. } => env,
            Task::Ship { env, .. } => env,
        }
    }

    fn policy(&self) -> &dyn Policy {
        match self {
            Task::Bandit { policy, .. } => policy,
            Task::Lqr { policy, .. } => policy,
            Task::Walk { policy, .. } => policy,
            Task::MountainCar { policy, .. } => policy,
            Task::Ship { policy, .. } => policy,
        }
    }

    fn fisher(
        &self,
        method: FisherMethod,
        theta: &DVector<f64>,
        batch: &[Trajectory],
        rng: &mut SimRng,
    ) -> Result<FisherInfo> {
        match (method, self) {
            (FisherMethod::Analytic, Task::Bandit { .. }) => analytic_bandit(theta),
            (FisherMethod::Analytic, Task::Lqr { env, policy }) => analytic_lqr(env, policy, theta),
            (
                FisherMethod::Analytic,
                Task::Walk {
                    env, policy, mdp, ..
                },
            ) => FisherInfo::new(
                exact_discrete(mdp, policy, theta, env.gamma)?.fisher(true),
                FisherMethod::Analytic,
            ),
            (FisherMethod::MlModel, Task::Lqr { env, policy }) => {
                let mut triples = Vec::new();
                for traj in batch {
                    for tr in &traj.transitions {
                        if let (State::Lqr { x, .. }, State::Lqr { x: next, .. }) =
                            (&tr.state, &tr.next_state)
                        {
                            triples.push((*x, tr.action.value()?, *next));
                        }
                    }
                }
                let model = fit_linear_gaussian(&triples)?;
                ml_lqr(&model, env, policy, theta, ML_TRAJECTORIES, rng)
            }
            _ => sampled_fisher(self.env(), self.policy(), method, theta, batch, rng),
        }
    }

    fn metric_name(&self) -> &'static str {
        match self {
            Task::Bandit { .. } | Task::Lqr { .. } => "expected_return",
            Task::Walk { .. } => "eta_gap",
            Task::MountainCar { .. } => "steps_to_goal",
            Task::Ship { .. } => "success_ratio",
        }
    }

    fn evaluate(&self, theta: &DVector<f64>, rng: &mut SimRng) -> Result<f64> {
        match self {
            Task::Bandit { .. } | Task::Lqr { .. } => {
                Ok(self.exact_value(theta)?.expect("closed form exists"))
            }
            Task::Walk { optimum, .. } => {
                Ok(self.exact_value(theta)?.expect("tabular solution exists") - optimum)
            }
            Task::MountainCar {
                env,
                policy,
                eval_episodes,
            } => {
                let mut steps = 0usize;
                for _ in 0..*eval_episodes {
                    steps += rollout_capped(env, policy, theta, CAR_EVAL_CAP, rng)?.len();
                }
                Ok(steps as f64 / *eval_episodes as f64)
            }
            Task::Ship {
                env,
                policy,
                eval_episodes,
            } => {
                let mut successes = 0usize;
                for _ in 0..*eval_episodes {
                    let traj = rollout_capped(env, policy, theta, env.step_limit, rng)?;
                    if traj.total_reward() > 0.0 {
                        successes += 1;
                    }
                }
                Ok(successes as f64 / *eval_episodes as f64)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn names_resolve() {
        for name in [
            "bandit-linear",
            "bandit-quadratic",
            "lqr",
            "lqr-squashed",
            "walk",
            "mountain-car",
            "ship",
        ] {
            assert!(Task::by_name(name).is_ok(), "{name}");
        }
        assert!(Task::by_name("pendulum").is_err());
    }

    #[test]
    fn walk_gap_vanishes_at_the_optimum() {
        let task = Task::walk(RandomWalk::default());
        let theta = DVector::from_element(10, 40.0);
        let gap = task.evaluate(&theta, &mut seeded(1)).unwrap();
        assert!(gap.abs() < 1e-9, "{gap}");
        assert!(task.evaluate(&DVector::zeros(10), &mut seeded(1)).unwrap() > 1.0);
    }
}
