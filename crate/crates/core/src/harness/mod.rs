//! Config-driven experiments: same-sample gradient comparisons and
//! policy-optimization learning curves, written as versioned CSV.
//!
//! Every random stream is derived from `(seed, experiment, run, component)`
//! so results do not depend on thread scheduling.

pub mod config;
pub mod presets;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::bac::{bac_eval, BacConfig, CompositeKernel};
use crate::bpg::{bpg_posterior, path_samples, BpgConfig, BpgModel, NoiseSpec};
use crate::error::{Error, Result};
use crate::estimate::{Estimator, GradientEstimate};
use crate::fisher::FisherInfo;
use crate::mcpg::mc_gradient;
use crate::optimize::{optimize, Algorithm, LoopConfig, Outcome, Problem, Status};
use crate::oracles::{angular_error, mse, read_fixture};
use crate::policies::{CmacGaussian, CmacLayout};
use crate::rng::stream;
use crate::rollout::episodes;
use crate::schedule::{Decay, Schedule};
use crate::task::Task;

pub use config::{AlgoTag, ExperimentConfig, RawConfig, ScheduleKind, Theta0, Truth};

/// Header comment identifying the CSV layout.
pub const SCHEMA_LINE: &str = "# schema=1";

/// Stream component reserved for initial parameters shared by all
/// algorithms within a run.
const INIT_COMPONENT: u64 = 1 << 40;

/// Builds the task named by the config with its overrides applied.
pub fn build_task(cfg: &ExperimentConfig) -> Result<Task> {
    let mut task = Task::by_name(&cfg.env)?;
    match &mut task {
        Task::Bandit { env, .. } => env.reward_noise_std = cfg.sigma_r,
        Task::Lqr { env, .. } => env.reward_noise_std = cfg.sigma_r,
        Task::Walk { env, .. } => {
            let mut walk = env.clone();
            if let Some(n) = cfg.walk_states {
                if n < 2 {
                    return Err(Error::config("walk_states", "need at least 2 states"));
                }
                walk.n_states = n;
            }
            if let Some(g) = cfg.gamma {
                walk.gamma = g;
            }
            task = Task::walk(walk);
        }
        Task::MountainCar {
            env, eval_episodes, ..
        } => {
            if let Some(g) = cfg.gamma {
                env.gamma = g;
            }
            if let Some(e) = cfg.eval_episodes {
                *eval_episodes = e;
            }
        }
        Task::Ship {
            policy,
            eval_episodes,
            ..
        } => {
            if cfg.ship_tilings.is_some() || cfg.ship_tiles.is_some() {
                let tilings = cfg.ship_tilings.unwrap_or(9);
                let tiles = cfg.ship_tiles.unwrap_or([5, 5, 36, 5]);
                *policy = CmacGaussian {
                    layout: CmacLayout::ship(tilings, tiles),
                    ..CmacGaussian::default()
                };
            }
            if let Some(e) = cfg.eval_episodes {
                *eval_episodes = e;
            }
        }
    }
    Ok(task)
}

/// State-kernel width and Fisher-kernel weight used by the critic.
pub fn critic_kernel(cfg: &ExperimentConfig, task: &Task) -> Result<CompositeKernel> {
    let (width, weight) = match task {
        Task::Walk { .. } => (3.0, 0.01),
        Task::MountainCar { .. } => (1.3 * 0.25, 1.0),
        _ => (1.0, 1.0),
    };
    CompositeKernel::new(
        cfg.state_width.unwrap_or(width),
        cfg.fisher_weight.unwrap_or(weight),
    )
}

fn noise_spec(cfg: &ExperimentConfig, task: &Task) -> NoiseSpec {
    NoiseSpec {
        reward_std: cfg.sigma_r,
        horizon: task.horizon(),
    }
}

pub fn initial_theta(cfg: &ExperimentConfig, task: &Task, run: u64) -> Result<DVector<f64>> {
    let policy = task.policy();
    let theta = match &cfg.theta0 {
        Theta0::Default | Theta0::Random => {
            policy.initial_params(&mut stream(cfg.seed, &cfg.experiment, run, INIT_COMPONENT))
        }
        Theta0::Fixed(v) if v.len() == 1 => DVector::from_element(policy.dim(), v[0]),
        Theta0::Fixed(v) => DVector::from_row_slice(v),
    };
    policy
        .validate(&theta)
        .map_err(|e| Error::config("theta0", e.to_string()))?;
    Ok(theta)
}

/// One repetition of one estimator at one sample size.
#[derive(Clone, Debug, PartialEq)]
pub struct GradRow {
    pub estimator: Estimator,
    pub m: usize,
    pub rep: usize,
    pub mse: f64,
    pub angular_error_deg: f64,
}

fn reference_gradient(
    cfg: &ExperimentConfig,
    task: &Task,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    match &cfg.truth {
        Truth::Exact => task
            .exact_gradient(theta)?
            .ok_or_else(|| Error::config("truth", format!("no exact gradient for {}", cfg.env))),
        Truth::Fixture(path) => {
            let rows = read_fixture(&fs::read_to_string(path)?)?;
            let mut g = DVector::zeros(rows.len());
            for row in rows {
                if row.component >= g.len() {
                    return Err(Error::config(
                        "truth",
                        "fixture components are not contiguous",
                    ));
                }
                g[row.component] = row.value;
            }
            Ok(g)
        }
    }
}

/// Gradient estimates of every configured estimator on one shared sample.
pub fn same_sample_estimates(
    cfg: &ExperimentConfig,
    task: &Task,
    theta: &DVector<f64>,
    m: usize,
    rep: u64,
) -> Result<Vec<GradientEstimate>> {
    let component = (m as u64) << 1;
    let mut rng = stream(cfg.seed, &cfg.experiment, rep, component);
    let mut aux = stream(cfg.seed, &cfg.experiment, rep, component | 1);
    let env = task.env();
    let policy = task.policy();
    let batch = episodes(env, policy, theta, m, &mut rng)?;
    let samples = path_samples(policy, theta, &batch)?;
    let mut fishers: Vec<(String, FisherInfo)> = Vec::new();
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &est in &cfg.estimators {
        if est == Estimator::Mc {
            out.push(mc_gradient(&samples)?);
            continue;
        }
        let method = cfg.fisher_for(est.tag());
        let key = method.tag().to_string();
        let fisher = match fishers.iter().find(|(k, _)| *k == key) {
            Some((_, f)) => f.clone(),
            None => {
                let f = task.fisher(method, theta, &batch, &mut aux)?;
                fishers.push((key, f.clone()));
                f
            }
        };
        let noise = noise_spec(cfg, task);
        let estimate = match est {
            Estimator::Mc => unreachable!(),
            Estimator::Bq1 | Estimator::Bq2 | Estimator::Bq1Sparse | Estimator::Bq2Sparse => {
                let model = if matches!(est, Estimator::Bq1 | Estimator::Bq1Sparse) {
                    BpgModel::One
                } else {
                    BpgModel::Two
                };
                let sparse = matches!(est, Estimator::Bq1Sparse | Estimator::Bq2Sparse);
                let config = BpgConfig {
                    model,
                    noise,
                    tau: sparse.then_some(cfg.tau),
                };
                bpg_posterior(&config, &samples, &fisher)?
            }
            Estimator::Bac | Estimator::BacSparse => {
                let config = BacConfig {
                    kernel: critic_kernel(cfg, task)?,
                    sigma2: cfg.gptd_sigma2,
                    tau: (est == Estimator::BacSparse).then_some(cfg.tau),
                };
                bac_eval(&config, policy, theta, &batch, &fisher)?
            }
        };
        out.push(estimate);
    }
    Ok(out)
}

pub fn run_grad_compare(cfg: &ExperimentConfig) -> Result<Vec<GradRow>> {
    if cfg.estimators.is_empty() {
        return Err(Error::config("estimators", "no estimators given"));
    }
    let task = build_task(cfg)?;
    let theta = initial_theta(cfg, &task, 0)?;
    let truth = reference_gradient(cfg, &task, &theta)?;
    if truth.len() != theta.len() {
        return Err(Error::config(
            "truth",
            "reference gradient has the wrong dimension",
        ));
    }
    let jobs: Vec<(usize, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&m| (0..cfg.repetitions).map(move |rep| (m, rep)))
        .collect();
    let chunks: Vec<Vec<GradRow>> = jobs
        .par_iter()
        .map(|&(m, rep)| {
            let estimates = same_sample_estimates(cfg, &task, &theta, m, rep as u64)?;
            estimates
                .into_iter()
                .map(|est| {
                    Ok(GradRow {
                        estimator: est.estimator,
                        m,
                        rep,
                        mse: mse(&est.mean, &truth)?,
                        angular_error_deg: angular_error(&est.mean, &truth).unwrap_or(f64::NAN),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Mean and standard error, ignoring NaN entries.
pub fn mean_stderr(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// CSV with one row per repetition followed by `mean` and `stderr`
/// summary rows per (estimator, M).
pub fn grad_compare_csv(rows: &[GradRow]) -> String {
    let mut out = String::new();
    out.push_str(SCHEMA_LINE);
    out.push('\n');
    out.push_str("estimator,M,rep,mse,angular_error_deg\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.estimator, r.m, r.rep, r.mse, r.angular_error_deg
        );
    }
    let mut keys: Vec<(usize, Estimator)> = rows.iter().map(|r| (r.m, r.estimator)).collect();
    keys.sort();
    keys.dedup();
    for (m, est) in keys {
        let group: Vec<&GradRow> = rows
            .iter()
            .filter(|r| r.m == m && r.estimator == est)
            .collect();
        let (mse_mean, mse_se) = mean_stderr(group.iter().map(|r| r.mse));
        let (ang_mean, ang_se) = mean_stderr(group.iter().map(|r| r.angular_error_deg));
        let _ = writeln!(out, "{est},{m},mean,{mse_mean},{ang_mean}");
        let _ = writeln!(out, "{est},{m},stderr,{mse_se},{ang_se}");
    }
    out
}

/// One learning-curve point.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub algo: String,
    pub run: usize,
    pub update: usize,
    pub metric_name: String,
    pub metric_value: f64,
}

fn schedule_for(cfg: &ExperimentConfig, algo: AlgoTag, m: usize) -> Result<Schedule> {
    let base = cfg.beta(algo, m)?;
    let decay = match cfg.schedule_for(algo) {
        ScheduleKind::Constant => Decay::Constant,
        ScheduleKind::Lqr => Decay::Harmonic { horizon: 20.0 },
        ScheduleKind::Hyperbolic => {
            let c = cfg.beta_c(algo, m)?;
            if c.is_infinite() {
                Decay::Constant
            } else {
                Decay::Hyperbolic { c }
            }
        }
    };
    Ok(Schedule { base, decay })
}

/// The algorithm and loop settings the config describes for `algo` at `m`.
pub fn algorithm_setup(
    cfg: &ExperimentConfig,
    task: &Task,
    algo: AlgoTag,
    m: usize,
) -> Result<(Algorithm, LoopConfig)> {
    let algorithm = match algo {
        AlgoTag::Mcpg => Algorithm::Mcpg,
        AlgoTag::Bpg | AlgoTag::Bpng | AlgoTag::BpgVar => Algorithm::Bpg(BpgConfig {
            model: cfg.model,
            noise: noise_spec(cfg, task),
            tau: Some(cfg.tau),
        }),
        AlgoTag::Bac => Algorithm::Bac(BacConfig {
            kernel: critic_kernel(cfg, task)?,
            sigma2: cfg.gptd_sigma2,
            tau: Some(cfg.tau),
        }),
    };
    let loop_config = LoopConfig {
        updates: cfg.updates,
        episodes: m,
        schedule: schedule_for(cfg, algo, m)?,
        rule: algo.rule(cfg.natural),
        fisher: cfg.fisher_for(algo.tag()),
        eval_every: cfg.eval_every,
        tolerance: cfg.tolerance,
    };
    Ok((algorithm, loop_config))
}

/// Runs one learning trial; `run` selects the derived streams.
pub fn run_trial(
    cfg: &ExperimentConfig,
    task: &Task,
    algo: AlgoTag,
    m: usize,
    run: u64,
) -> Result<Outcome> {
    let (algorithm, loop_config) = algorithm_setup(cfg, task, algo, m)?;
    let theta0 = initial_theta(cfg, task, run)?;
    let component = ((m as u64) << 16) | (algo.index() << 1);
    let mut rng = stream(cfg.seed, &cfg.experiment, run, component);
    let mut eval_rng = stream(cfg.seed, &cfg.experiment, run, component | 1);
    optimize(
        task,
        &algorithm,
        &loop_config,
        theta0,
        &mut rng,
        &mut eval_rng,
    )
}

pub fn run_optimize(cfg: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    if cfg.algorithms.is_empty() {
        return Err(Error::config("algorithms", "no algorithms given"));
    }
    let task = build_task(cfg)?;
    // validate every lookup before starting work
    for &algo in &cfg.algorithms {
        for &m in &cfg.sample_sizes {
            algorithm_setup(cfg, &task, algo, m)?;
        }
    }
    let several_m = cfg.sample_sizes.len() > 1;
    let jobs: Vec<(usize, AlgoTag, usize)> = cfg
        .sample_sizes
        .iter()
        .flat_map(|&m| {
            cfg.algorithms
                .iter()
                .flat_map(move |&a| (0..cfg.repetitions).map(move |run| (m, a, run)))
        })
        .collect();
    let metric = task.metric_name();
    let chunks: Vec<Vec<CurveRow>> = jobs
        .par_iter()
        .map(|&(m, algo, run)| {
            let label = if several_m {
                format!("{algo}-M{m}")
            } else {
                algo.tag().to_string()
            };
            let outcome = run_trial(cfg, &task, algo, m, run as u64)?;
            let mut rows: Vec<CurveRow> = outcome
                .curve
                .iter()
                .map(|p| CurveRow {
                    algo: label.clone(),
                    run,
                    update: p.update,
                    metric_name: metric.to_string(),
                    metric_value: p.value,
                })
                .collect();
            match outcome.status {
                Status::Diverged { update, norm } => {
                    eprintln!("warning: {label} run {run} diverged at update {update} (|theta|_inf = {norm:e})");
                    rows.push(CurveRow {
                        algo: label,
                        run,
                        update,
                        metric_name: "diverged".into(),
                        metric_value: norm,
                    });
                }
                Status::Stalled { update, cap } => {
                    eprintln!("warning: {label} run {run} stalled at update {update}: an episode reached {cap} steps");
                    rows.push(CurveRow {
                        algo: label,
                        run,
                        update,
                        metric_name: "stalled".into(),
                        metric_value: cap as f64,
                    });
                }
                Status::Completed | Status::Converged => {}
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<CurveRow> = chunks.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.algo.as_str(), a.run, a.update).cmp(&(b.algo.as_str(), b.run, b.update))
    });
    Ok(rows)
}

pub fn optimize_csv(rows: &[CurveRow]) -> String {
    let mut out = String::new();
    out.push_str(SCHEMA_LINE);
    out.push('\n');
    out.push_str("algo,run,update,metric_name,metric_value\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.algo, r.run, r.update, r.metric_name, r.metric_value
        );
    }
    out
}

pub fn write_output(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Full-scale repetition count: ten times the desk-scale default.
pub fn paper_scale(cfg: &mut ExperimentConfig) {
    cfg.repetitions *= 10;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bandit_cfg(reps: usize) -> ExperimentConfig {
        ExperimentConfig::parse(&format!(
            "env = bandit-linear\nestimators = mc, bq1\nM = 10\nrepetitions = {reps}\n"
        ))
        .unwrap()
    }

    #[test]
    fn single_repetition_summary_equals_row() {
        let rows = run_grad_compare(&bandit_cfg(1)).unwrap();
        assert_eq!(rows.len(), 2);
        let csv = grad_compare_csv(&rows);
        for r in &rows {
            assert!(csv.contains(&format!(
                "{},10,mean,{},{}",
                r.estimator, r.mse, r.angular_error_deg
            )));
            assert!(csv.contains(&format!("{},10,stderr,0,0", r.estimator)));
        }
        assert!(csv.starts_with("# schema=1\nestimator,M,rep,mse,angular_error_deg\n"));
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = grad_compare_csv(&run_grad_compare(&bandit_cfg(20)).unwrap());
        let b = grad_compare_csv(&run_grad_compare(&bandit_cfg(20)).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_updates_give_initial_point_only() {
        let cfg = ExperimentConfig::parse(
            "env = lqr\nalgorithms = mcpg\nM = 5\nrepetitions = 2\nupdates = 0\nbeta = 0.01\n",
        )
        .unwrap();
        let rows = run_optimize(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.update == 0));
    }

    #[test]
    fn algorithms_use_independent_streams() {
        let cfg = ExperimentConfig::parse(
            "env = lqr-squashed\nalgorithms = mcpg, bpg\nM = 5\nrepetitions = 1\nupdates = 5\nbeta = 0.01\ntheta0 = 0, 0\n",
        )
        .unwrap();
        let rows = run_optimize(&cfg).unwrap();
        let curve = |a: &str| -> Vec<f64> {
            rows.iter()
                .filter(|r| r.algo == a)
                .map(|r| r.metric_value)
                .collect()
        };
        assert_eq!(curve("mcpg")[0], curve("bpg")[0]);
        assert_ne!(curve("mcpg"), curve("bpg"));
    }
}
