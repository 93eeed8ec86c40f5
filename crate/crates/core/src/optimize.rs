//! Policy-update loops shared by the Monte-Carlo, trajectory-BQ and
//! actor-critic optimizers.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::bac::{bac_eval, BacConfig};
use crate::bpg::{bpg_posterior, path_samples, BpgConfig};
use crate::envs::{Environment, Trajectory};
use crate::error::{Error, Result};
use crate::estimate::GradientEstimate;
use crate::fisher::{g_est, state_action_average, traj_mc, FisherInfo, FisherMethod};
use crate::mcpg::mc_gradient;
use crate::policies::{trajectory_score, Policy};
use crate::rng::SimRng;
use crate::rollout::learning_episodes;
use crate::schedule::Schedule;

/// Parameters beyond this sup-norm abort a run.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// An environment-policy pair with its Fisher estimators and evaluation
/// metric.
pub trait Problem: Sync {
    fn env(&self) -> &dyn Environment;

    fn policy(&self) -> &dyn Policy;

    /// Fisher information at `theta`; `batch` holds the trajectories
    /// sampled for the current gradient estimate.
    fn fisher(
        &self,
        method: FisherMethod,
        theta: &DVector<f64>,
        batch: &[Trajectory],
        rng: &mut SimRng,
    ) -> Result<FisherInfo> {
        sampled_fisher(self.env(), self.policy(), method, theta, batch, rng)
    }

    fn metric_name(&self) -> &'static str;

    /// Performance of the policy at `theta` as logged in learning curves.
    fn evaluate(&self, theta: &DVector<f64>, rng: &mut SimRng) -> Result<f64>;
}

/// Fisher estimators that need only samples.
pub fn sampled_fisher(
    env: &dyn Environment,
    policy: &dyn Policy,
    method: FisherMethod,
    theta: &DVector<f64>,
    batch: &[Trajectory],
    rng: &mut SimRng,
) -> Result<FisherInfo> {
    match method {
        FisherMethod::TrajMc => {
            let scores = batch
                .iter()
                .map(|t| trajectory_score(policy, theta, t))
                .collect::<Result<Vec<_>>>()?;
            traj_mc(&scores)
        }
        FisherMethod::StateActionAvg => {
            let mut cols = Vec::new();
            for traj in batch {
                for tr in &traj.transitions {
                    cols.push(policy.score(theta, &tr.observation, &tr.action)?);
                }
            }
            if cols.is_empty() {
                return Err(Error::EmptyInput("state-action scores"));
            }
            state_action_average(&DMatrix::from_columns(&cols))
        }
        FisherMethod::GEst => g_est(env, policy, theta, batch.len().max(1), env.gamma(), rng),
        FisherMethod::Analytic | FisherMethod::MlModel => Err(Error::config(
            "fisher",
            format!("`{method}` is not available for {}", env.name()),
        )),
    }
}

/// How a gradient estimate becomes a parameter step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpdateRule {
    Plain,
    /// `G⁻¹Δ`
    Natural,
    /// `det(G) · G⁻¹Δ`
    NaturalDet,
    /// `[(1+n)I - Cov] / (1+n) · Δ`
    CovScaled,
}

impl UpdateRule {
    pub fn tag(self) -> &'static str {
        match self {
            UpdateRule::Plain => "plain",
            UpdateRule::Natural => "natural",
            UpdateRule::NaturalDet => "natural-det",
            UpdateRule::CovScaled => "var",
        }
    }

    fn needs_fisher(self) -> bool {
        matches!(self, UpdateRule::Natural | UpdateRule::NaturalDet)
    }
}

impl fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(UpdateRule::Plain),
            "natural" => Ok(UpdateRule::Natural),
            "natural-det" => Ok(UpdateRule::NaturalDet),
            "var" => Ok(UpdateRule::CovScaled),
            _ => Err(Error::config(
                "update",
                format!("unknown update rule `{s}`"),
            )),
        }
    }
}

pub fn direction(
    rule: UpdateRule,
    estimate: &GradientEstimate,
    fisher: Option<&FisherInfo>,
) -> Result<DVector<f64>> {
    let need = || fisher.ok_or_else(|| Error::ContractViolation("update rule needs G".into()));
    Ok(match rule {
        UpdateRule::Plain => estimate.mean.clone(),
        UpdateRule::Natural => need()?.solve(&estimate.mean),
        UpdateRule::NaturalDet => {
            let g = need()?;
            g.solve(&estimate.mean) * g.determinant()
        }
        UpdateRule::CovScaled => {
            let cov = estimate.covariance.as_ref().ok_or_else(|| {
                Error::ContractViolation("covariance-scaled update needs a covariance".into())
            })?;
            let n = estimate.dim() as f64;
            let scale = (DMatrix::identity(cov.nrows(), cov.ncols()) * (1.0 + n) - cov) / (1.0 + n);
            scale * &estimate.mean
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    Mcpg,
    Bpg(BpgConfig),
    Bac(BacConfig),
}

impl Algorithm {
    pub fn family(&self) -> &'static str {
        match self {
            Algorithm::Mcpg => "mcpg",
            Algorithm::Bpg(_) => "bpg",
            Algorithm::Bac(_) => "bac",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoopConfig {
    /// Number of policy updates `N`.
    pub updates: usize,
    /// Episodes per gradient estimate `M`.
    pub episodes: usize,
    pub schedule: Schedule,
    pub rule: UpdateRule,
    pub fisher: FisherMethod,
    /// Evaluate every this many updates (and at the first and last).
    pub eval_every: usize,
    /// Stop once `‖Δθ‖∞` falls below this; zero disables the test.
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub update: usize,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Status {
    Completed,
    /// The step fell below the tolerance.
    Converged,
    Diverged {
        update: usize,
        norm: f64,
    },
    /// A sampled episode reached a failure cap at this update, so no
    /// further batch can be collected.
    Stalled {
        update: usize,
        cap: usize,
    },
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub theta: DVector<f64>,
    pub curve: Vec<CurvePoint>,
    pub updates: usize,
    pub status: Status,
}

impl Outcome {
    /// Turns divergence into an error.
    pub fn into_result(self) -> Result<Self> {
        match self.status {
            Status::Diverged { update, norm } => Err(Error::Diverged { update, norm }),
            _ => Ok(self),
        }
    }

    pub fn final_value(&self) -> Option<f64> {
        self.curve.last().map(|p| p.value)
    }
}

/// One gradient estimate at `theta` together with the Fisher estimate it
/// used, if any.
pub fn estimate_gradient(
    problem: &dyn Problem,
    algorithm: &Algorithm,
    config: &LoopConfig,
    theta: &DVector<f64>,
    rng: &mut SimRng,
) -> Result<(GradientEstimate, Option<FisherInfo>)> {
    let env = problem.env();
    let policy = problem.policy();
    let batch = learning_episodes(env, policy, theta, config.episodes, rng)?;
    match algorithm {
        Algorithm::Mcpg => {
            let est = mc_gradient(&path_samples(policy, theta, &batch)?)?;
            let fisher = if config.rule.needs_fisher() {
                Some(problem.fisher(config.fisher, theta, &batch, rng)?)
            } else {
                None
            };
            Ok((est, fisher))
        }
        Algorithm::Bpg(bpg) => {
            let fisher = problem.fisher(config.fisher, theta, &batch, rng)?;
            let est = bpg_posterior(bpg, &path_samples(policy, theta, &batch)?, &fisher)?;
            Ok((est, Some(fisher)))
        }
        Algorithm::Bac(bac) => {
            let fisher = problem.fisher(config.fisher, theta, &batch, rng)?;
            let est = bac_eval(bac, policy, theta, &batch, &fisher)?;
            Ok((est, Some(fisher)))
        }
    }
}

/// Runs `config.updates` policy updates from `theta0`.
///
/// `rng` drives sampling and `eval_rng` the evaluation episodes, so that
/// evaluation cadence does not perturb the learning stream.
pub fn optimize(
    problem: &dyn Problem,
    algorithm: &Algorithm,
    config: &LoopConfig,
    theta0: DVector<f64>,
    rng: &mut SimRng,
    eval_rng: &mut SimRng,
) -> Result<Outcome> {
    let policy = problem.policy();
    policy.validate(&theta0)?;
    config.schedule.validate(policy.dim())?;
    if config.episodes == 0 {
        return Err(Error::config("episodes", "must be at least 1"));
    }
    let sign = problem.env().objective().sign();
    let every = config.eval_every.max(1);
    let mut theta = theta0;
    let mut curve = vec![CurvePoint {
        update: 0,
        value: problem.evaluate(&theta, eval_rng)?,
    }];
    let mut status = Status::Completed;
    let mut done = 0;
    for j in 0..config.updates {
        let (est, fisher) = match estimate_gradient(problem, algorithm, config, &theta, rng) {
            Err(Error::StepCapExceeded { cap }) => {
                status = Status::Stalled { update: done, cap };
                break;
            }
            other => other?,
        };
        let step = direction(config.rule, &est, fisher.as_ref())?;
        if config.tolerance > 0.0 && step.amax() < config.tolerance {
            status = Status::Converged;
            break;
        }
        let rates = config.schedule.rates(j, theta.len());
        theta += step.component_mul(&rates) * sign;
        done = j + 1;
        let norm = theta.amax();
        if !(norm <= DIVERGENCE_LIMIT) {
            status = Status::Diverged { update: done, norm };
            break;
        }
        if done % every == 0 || done == config.updates {
            curve.push(CurvePoint {
                update: done,
                value: problem.evaluate(&theta, eval_rng)?,
            });
        }
    }
    let early = matches!(status, Status::Converged | Status::Stalled { .. });
    if early && curve.last().map(|p| p.update) != Some(done) {
        curve.push(CurvePoint {
            update: done,
            value: problem.evaluate(&theta, eval_rng)?,
        });
    }
    Ok(Outcome {
        theta,
        curve,
        updates: done,
        status,
    })
}

pub fn mcpg_optimize(
    problem: &dyn Problem,
    config: &LoopConfig,
    theta0: DVector<f64>,
    rng: &mut SimRng,
    eval_rng: &mut SimRng,
) -> Result<Outcome> {
    optimize(problem, &Algorithm::Mcpg, config, theta0, rng, eval_rng)
}

pub fn bpg_optimize(
    problem: &dyn Problem,
    bpg: &BpgConfig,
    config: &LoopConfig,
    theta0: DVector<f64>,
    rng: &mut SimRng,
    eval_rng: &mut SimRng,
) -> Result<Outcome> {
    optimize(
        problem,
        &Algorithm::Bpg(*bpg),
        config,
        theta0,
        rng,
        eval_rng,
    )
}

pub fn bac_optimize(
    problem: &dyn Problem,
    bac: &BacConfig,
    config: &LoopConfig,
    theta0: DVector<f64>,
    rng: &mut SimRng,
    eval_rng: &mut SimRng,
) -> Result<Outcome> {
    optimize(
        problem,
        &Algorithm::Bac(*bac),
        config,
        theta0,
        rng,
        eval_rng,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{BanditReward, RandomWalk};
    use crate::estimate::Estimator;
    use crate::rng::seeded;
    use crate::task::Task;

    fn estimate(mean: &[f64], cov: Option<DMatrix<f64>>) -> GradientEstimate {
        GradientEstimate {
            mean: DVector::from_column_slice(mean),
            covariance: cov,
            samples: 1,
            estimator: Estimator::Mc,
        }
    }

    fn loop_config(rate: f64, updates: usize) -> LoopConfig {
        LoopConfig {
            updates,
            episodes: 5,
            schedule: Schedule::constant(rate),
            rule: UpdateRule::Plain,
            fisher: FisherMethod::TrajMc,
            eval_every: 1,
            tolerance: 0.0,
        }
    }

    #[test]
    fn natural_with_identity_metric_is_plain() {
        let est = estimate(&[0.3, -1.2], None);
        let g = FisherInfo::new(DMatrix::identity(2, 2), FisherMethod::Analytic).unwrap();
        let plain = direction(UpdateRule::Plain, &est, None).unwrap();
        let nat = direction(UpdateRule::Natural, &est, Some(&g)).unwrap();
        assert!((plain - nat).amax() < 1e-5);
    }

    #[test]
    fn determinant_scaling() {
        let est = estimate(&[1.0, 2.0], None);
        let g = FisherInfo::new(DMatrix::identity(2, 2) * 2.0, FisherMethod::Analytic).unwrap();
        let d = direction(UpdateRule::NaturalDet, &est, Some(&g)).unwrap();
        assert!((d - est.mean.clone() * 2.0).amax() < 1e-5);
        assert!(direction(UpdateRule::Natural, &est, None).is_err());
    }

    #[test]
    fn covariance_scaling() {
        let est = estimate(&[1.0, 1.0], Some(DMatrix::zeros(2, 2)));
        assert_eq!(
            direction(UpdateRule::CovScaled, &est, None).unwrap(),
            est.mean
        );
        // full prior covariance (1+n) I cancels the step
        let est = estimate(&[1.0, 1.0], Some(DMatrix::identity(2, 2) * 3.0));
        assert!(direction(UpdateRule::CovScaled, &est, None).unwrap().amax() < 1e-15);
        assert!(direction(UpdateRule::CovScaled, &estimate(&[1.0], None), None).is_err());
    }

    #[test]
    fn zero_rate_freezes_parameters() {
        let task = Task::bandit(BanditReward::Linear);
        let theta0 = DVector::from_vec(vec![0.5, 1.0]);
        let out = mcpg_optimize(
            &task,
            &loop_config(0.0, 4),
            theta0.clone(),
            &mut seeded(1),
            &mut seeded(2),
        )
        .unwrap();
        assert_eq!(out.theta, theta0);
        assert_eq!(out.curve.len(), 5);
        assert!(out.curve.iter().all(|p| p.value == out.curve[0].value));
        assert_eq!(out.status, Status::Completed);
    }

    #[test]
    fn huge_rate_diverges() {
        let task = Task::bandit(BanditReward::Linear);
        let out = mcpg_optimize(
            &task,
            &loop_config(1e12, 10),
            DVector::from_vec(vec![0.0, 1.0]),
            &mut seeded(3),
            &mut seeded(4),
        )
        .unwrap();
        assert!(matches!(out.status, Status::Diverged { update: 1, .. }));
        assert!(matches!(out.into_result(), Err(Error::Diverged { .. })));
    }

    #[test]
    fn capped_walk_episode_stalls_the_run() {
        // nearly always stepping left, the walk cannot reach its goal in 50 steps
        let task = Task::walk(RandomWalk {
            cap: 50,
            ..RandomWalk::with_states(6)
        });
        let out = mcpg_optimize(
            &task,
            &loop_config(0.1, 10),
            DVector::from_element(6, -8.0),
            &mut seeded(7),
            &mut seeded(8),
        )
        .unwrap();
        assert_eq!(out.status, Status::Stalled { update: 0, cap: 50 });
        assert_eq!(out.updates, 0);
        assert_eq!(out.curve.len(), 1);
    }

    #[test]
    fn large_tolerance_stops_immediately() {
        let task = Task::bandit(BanditReward::Linear);
        let mut cfg = loop_config(0.1, 10);
        cfg.tolerance = 1e9;
        let out = mcpg_optimize(
            &task,
            &cfg,
            DVector::from_vec(vec![0.0, 1.0]),
            &mut seeded(5),
            &mut seeded(6),
        )
        .unwrap();
        assert_eq!(out.status, Status::Converged);
        assert_eq!(out.updates, 0);
        assert_eq!(out.curve.len(), 1);
    }

    #[test]
    fn linear_bandit_mean_increases() {
        let task = Task::bandit(BanditReward::Linear);
        let out = mcpg_optimize(
            &task,
            &loop_config(0.05, 20),
            DVector::from_vec(vec![0.0, 1.0]),
            &mut seeded(7),
            &mut seeded(8),
        )
        .unwrap();
        assert!(out.final_value().unwrap() > out.curve[0].value);
    }
}
