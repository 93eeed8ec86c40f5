//! Checks shared by the property tests and the acceptance runner. Each
//! check draws its inputs from a seeded stream so that proptest only has
//! to supply seeds and sizes.

#![allow(dead_code)]

use bpg_lab::bac::{bac_eval, BacConfig, CompositeKernel};
use bpg_lab::bpg::{
    bpg_posterior, path_samples, traj_kernel, BpgConfig, BpgModel, NoiseSpec, PathSample,
    TrajKernel,
};
use bpg_lab::bq::{gp_condition, GpDataset};
use bpg_lab::envs::{Action, BanditReward, Lqr, Observation};
use bpg_lab::estimate::GradientEstimate;
use bpg_lab::fisher::{analytic_bandit, analytic_lqr, FisherInfo, FisherMethod};
use bpg_lab::gptd::GaussianKernel;
use bpg_lab::harness::config::ExperimentConfig;
use bpg_lab::harness::{grad_compare_csv, optimize_csv, run_grad_compare, run_optimize};
use bpg_lab::linalg::min_eigenvalue;
use bpg_lab::mcpg::mc_gradient;
use bpg_lab::optimize::Problem;
use bpg_lab::policies::{
    CmacGaussian, CmacLayout, LqrGaussian, MeanStdGaussian, Policy, SoftmaxRbf, WalkLogistic,
};
use bpg_lab::rng::{seeded, SimRng};
use bpg_lab::rollout::episodes;
use bpg_lab::task::Task;
use nalgebra::{DMatrix, DVector};
use proptest::test_runner::TestCaseError;
use rand::Rng;

pub type CheckResult = Result<(), TestCaseError>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

fn fail(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

/// `μ'(a | x; θ') = μ(a | x; factor · θ')`.
pub struct Rescaled<P> {
    pub inner: P,
    pub factor: f64,
}

impl<P: Policy> Policy for Rescaled<P> {
    fn name(&self) -> &'static str {
        "rescaled"
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn initial_params(&self, rng: &mut SimRng) -> DVector<f64> {
        self.inner.initial_params(rng) / self.factor
    }

    fn sample(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        rng: &mut SimRng,
    ) -> bpg_lab::Result<Action> {
        self.inner.sample(&(theta * self.factor), obs, rng)
    }

    fn log_density(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        a: &Action,
    ) -> bpg_lab::Result<f64> {
        self.inner.log_density(&(theta * self.factor), obs, a)
    }

    fn score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        a: &Action,
    ) -> bpg_lab::Result<DVector<f64>> {
        Ok(self.inner.score(&(theta * self.factor), obs, a)? * self.factor)
    }
}

pub const POLICY_FAMILIES: usize = 6;

fn uniform_vec(rng: &mut SimRng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// A policy, a parameter point and an observation for family `family`.
fn policy_case(family: usize, rng: &mut SimRng) -> (Box<dyn Policy>, DVector<f64>, Observation) {
    match family {
        0 => (
            Box::new(MeanStdGaussian),
            DVector::from_vec(vec![
                rng.random_range(-2.0..2.0),
                rng.random_range(0.3..2.0),
            ]),
            Observation::Empty,
        ),
        1 => (
            Box::new(LqrGaussian::direct()),
            DVector::from_vec(vec![
                rng.random_range(-1.5..0.5),
                rng.random_range(0.3..2.0),
            ]),
            Observation::Point(vec![rng.random_range(-2.0..2.0)]),
        ),
        2 => (
            Box::new(LqrGaussian::squashed()),
            uniform_vec(rng, 2, -3.0, 3.0),
            Observation::Point(vec![rng.random_range(-2.0..2.0)]),
        ),
        3 => (
            Box::new(WalkLogistic { n_states: 10 }),
            uniform_vec(rng, 10, -3.0, 3.0),
            Observation::Index(rng.random_range(1..=10)),
        ),
        4 => {
            let p = SoftmaxRbf::default();
            let theta = uniform_vec(rng, p.dim(), -1.0, 1.0);
            let obs =
                Observation::Point(vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]);
            (Box::new(p), theta, obs)
        }
        _ => {
            let p = CmacGaussian {
                layout: CmacLayout::ship(2, [4, 4, 12, 4]),
                limit: 15.0,
                latent_std: 1.0,
            };
            let theta = uniform_vec(rng, p.dim(), -0.5, 0.5);
            let obs = Observation::Point(vec![
                rng.random_range(0.0..150.0),
                rng.random_range(0.0..150.0),
                rng.random_range(-180.0..180.0),
                rng.random_range(-15.0..15.0),
            ]);
            (Box::new(p), theta, obs)
        }
    }
}

/// Analytic score against central differences of the log density.
pub fn score_matches_finite_difference(family: usize, seed: u64) -> CheckResult {
    let mut rng = seeded(seed);
    let (policy, theta, obs) = policy_case(family % POLICY_FAMILIES, &mut rng);
    let action = policy.sample(&theta, &obs, &mut rng).map_err(fail)?;
    let score = policy.score(&theta, &obs, &action).map_err(fail)?;
    let h = 1e-5;
    let scale = score.amax().max(1.0);
    for i in 0..theta.len() {
        let mut up = theta.clone();
        let mut down = theta.clone();
        up[i] += h;
        down[i] -= h;
        let fd = (policy.log_density(&up, &obs, &action).map_err(fail)?
            - policy.log_density(&down, &obs, &action).map_err(fail)?)
            / (2.0 * h);
        ensure!(
            (fd - score[i]).abs() <= 1e-5 * scale,
            "{} component {i}: score {} vs difference {fd}",
            policy.name(),
            score[i]
        );
    }
    Ok(())
}

fn check_psd(est: &GradientEstimate, what: &str) -> CheckResult {
    let cov = est
        .covariance
        .as_ref()
        .ok_or_else(|| fail(format!("{what}: no covariance")))?;
    ensure!(
        (cov - cov.transpose()).amax() <= 1e-10 * cov.amax().max(1.0),
        "{what}: covariance is not symmetric"
    );
    let min = min_eigenvalue(cov);
    ensure!(
        min >= -1e-8 * cov.amax().max(1.0),
        "{what}: covariance eigenvalue {min:e}"
    );
    Ok(())
}

/// Every estimator's covariance is symmetric PSD on a random LQR batch.
pub fn covariances_are_psd(m: usize, seed: u64) -> CheckResult {
    let mut rng = seeded(seed);
    let task = Task::lqr(LqrGaussian::direct());
    let theta = DVector::from_vec(vec![
        rng.random_range(-1.2..0.0),
        rng.random_range(0.3..1.5),
    ]);
    let batch = episodes(task.env(), task.policy(), &theta, m, &mut rng).map_err(fail)?;
    let samples = path_samples(task.policy(), &theta, &batch).map_err(fail)?;
    let fisher = task
        .fisher(FisherMethod::Analytic, &theta, &batch, &mut rng)
        .map_err(fail)?;
    check_psd(&mc_gradient(&samples).map_err(fail)?, "mc")?;
    for model in [BpgModel::One, BpgModel::Two] {
        for reward_std in [0.0, 0.5] {
            let noise = NoiseSpec {
                reward_std,
                horizon: 20,
            };
            for tau in [None, Some(1e-3)] {
                let cfg = BpgConfig { model, noise, tau };
                let est = bpg_posterior(&cfg, &samples, &fisher).map_err(fail)?;
                check_psd(&est, &format!("{model} sigma_r={reward_std} tau={tau:?}"))?;
            }
        }
    }
    for tau in [None, Some(1e-3)] {
        let cfg = BacConfig {
            kernel: CompositeKernel::new(1.0, 1.0).map_err(fail)?,
            sigma2: 1.0,
            tau,
        };
        let est = bac_eval(&cfg, task.policy(), &theta, &batch, &fisher).map_err(fail)?;
        check_psd(&est, &format!("bac tau={tau:?}"))?;
    }
    Ok(())
}

/// Model-1 posterior variance of each gradient component never grows as
/// paths are added (fixed G and a per-path noise model), and neither does a
/// GP predictive variance as points are added.
pub fn posterior_variance_is_monotone(m: usize, seed: u64) -> CheckResult {
    let mut rng = seeded(seed);
    let task = Task::bandit(BanditReward::Linear);
    let theta = DVector::from_vec(vec![
        rng.random_range(-1.0..1.0),
        rng.random_range(0.5..1.5),
    ]);
    let fisher = analytic_bandit(&theta).map_err(fail)?;
    let batch = episodes(task.env(), task.policy(), &theta, m, &mut rng).map_err(fail)?;
    let samples = path_samples(task.policy(), &theta, &batch).map_err(fail)?;
    let cfg = BpgConfig {
        model: BpgModel::One,
        noise: NoiseSpec {
            reward_std: 0.5,
            horizon: 1,
        },
        tau: None,
    };
    let mut last = DVector::from_element(2, f64::INFINITY);
    for k in 1..=m {
        let est = bpg_posterior(&cfg, &samples[..k], &fisher).map_err(fail)?;
        let var = est.covariance.unwrap().diagonal();
        for j in 0..2 {
            ensure!(
                var[j] <= last[j] + 1e-9 * last[j].abs().clamp(1.0, 1e6),
                "component {j} variance grew from {} to {} at {k} paths",
                last[j],
                var[j]
            );
        }
        last = var;
    }

    let kernel = GaussianKernel::new(0.7).map_err(fail)?;
    let xs: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let query = rng.random_range(-2.0..2.0);
    let mut last = 1.0 + 1e-12;
    for k in 1..=m {
        let pts = &xs[..k];
        let kmat = DMatrix::from_fn(k, k, |i, j| kernel.eval_slices(&[pts[i]], &[pts[j]]));
        let kq = DVector::from_fn(k, |i, _| kernel.eval_slices(&[pts[i]], &[query]));
        let data = GpDataset::new(kmat, DMatrix::identity(k, k) * 0.01, DVector::zeros(k));
        let (_, var) = gp_condition(&data, &kq, 0.0, &kq, 1.0).map_err(fail)?;
        ensure!(
            var <= last + 1e-12,
            "predictive variance grew from {last} to {var}"
        );
        last = var;
    }
    Ok(())
}

fn kernel_pair(
    reference: &dyn Policy,
    rescaled: &dyn Policy,
    theta: &DVector<f64>,
    fisher: &DMatrix<f64>,
    factor: f64,
    obs: &[Observation],
    rng: &mut SimRng,
) -> Result<(f64, f64), TestCaseError> {
    let a = reference.sample(theta, &obs[0], rng).map_err(fail)?;
    let b = reference.sample(theta, &obs[1], rng).map_err(fail)?;
    let theta2 = theta / factor;
    let u = |p: &dyn Policy, th: &DVector<f64>, o: &Observation, act: &Action| {
        p.score(th, o, act).map_err(fail)
    };
    let g = FisherInfo::new(fisher.clone(), FisherMethod::Analytic).map_err(fail)?;
    let g2 = FisherInfo::new(fisher * (factor * factor), FisherMethod::Analytic).map_err(fail)?;
    let k1 = traj_kernel(
        TrajKernel::Fisher,
        &u(reference, theta, &obs[0], &a)?,
        &u(reference, theta, &obs[1], &b)?,
        &g,
    )
    .map_err(fail)?;
    let k2 = traj_kernel(
        TrajKernel::Fisher,
        &u(rescaled, &theta2, &obs[0], &a)?,
        &u(rescaled, &theta2, &obs[1], &b)?,
        &g2,
    )
    .map_err(fail)?;
    Ok((k1, k2))
}

/// Fisher-kernel values agree under `θ' = θ / factor` at corresponding
/// parameters.
pub fn fisher_kernel_is_reparameterization_invariant(seed: u64) -> CheckResult {
    let mut rng = seeded(seed);
    let factor = 2.0;

    let theta = DVector::from_vec(vec![
        rng.random_range(-1.0..1.0),
        rng.random_range(0.3..1.2),
    ]);
    let g = analytic_bandit(&theta).map_err(fail)?;
    let rescaled = Rescaled {
        inner: MeanStdGaussian,
        factor,
    };
    let obs = [Observation::Empty, Observation::Empty];
    let (k1, k2) = kernel_pair(
        &MeanStdGaussian,
        &rescaled,
        &theta,
        g.matrix(),
        factor,
        &obs,
        &mut rng,
    )?;
    ensure!((k1 - k2).abs() < 1e-8, "bandit kernel {k1} vs {k2}");

    let lqr = Lqr::default();
    let policy = LqrGaussian::direct();
    let theta = DVector::from_vec(vec![
        rng.random_range(-1.0..0.0),
        rng.random_range(0.5..1.5),
    ]);
    let g = analytic_lqr(&lqr, &policy, &theta).map_err(fail)?;
    let rescaled = Rescaled {
        inner: LqrGaussian::direct(),
        factor,
    };
    let obs = [
        Observation::Point(vec![rng.random_range(-1.0..1.0)]),
        Observation::Point(vec![rng.random_range(-1.0..1.0)]),
    ];
    let (k1, k2) = kernel_pair(
        &policy,
        &rescaled,
        &theta,
        g.matrix(),
        factor,
        &obs,
        &mut rng,
    )?;
    ensure!((k1 - k2).abs() < 1e-8, "LQR kernel {k1} vs {k2}");
    Ok(())
}

/// The average of `reps` MC gradient estimates lies within three standard
/// errors of the exact gradient in every component.
pub fn mc_is_unbiased(
    task: &Task,
    theta: &DVector<f64>,
    m: usize,
    reps: usize,
    seed: u64,
) -> CheckResult {
    let truth = task.exact_gradient(theta).map_err(fail)?.unwrap();
    let mut rng = seeded(seed);
    let means: Vec<DVector<f64>> = (0..reps)
        .map(|_| {
            let batch = episodes(task.env(), task.policy(), theta, m, &mut rng)?;
            let samples: Vec<PathSample> = path_samples(task.policy(), theta, &batch)?;
            Ok(mc_gradient(&samples)?.mean)
        })
        .collect::<bpg_lab::Result<_>>()
        .map_err(fail)?;
    let n = reps as f64;
    for j in 0..truth.len() {
        let avg = means.iter().map(|g| g[j]).sum::<f64>() / n;
        let var = means.iter().map(|g| (g[j] - avg).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        ensure!(
            (avg - truth[j]).abs() <= 3.0 * se,
            "component {j}: mean {avg} vs exact {} (stderr {se})",
            truth[j]
        );
    }
    Ok(())
}

/// Both CSV writers give byte-identical output on reruns and across
/// worker-thread counts.
pub fn reruns_are_byte_identical() -> CheckResult {
    let grad = ExperimentConfig::parse(
        "env = lqr\ntheta0 = -0.2, 1\nestimators = mc, bq1, bq2-sparse\nM = 5, 10\nrepetitions = 8\nfisher = analytic\n",
    )
    .map_err(fail)?;
    let opt = ExperimentConfig::parse(
        "env = walk\nalgorithms = mcpg, bac\nM = 3\nrepetitions = 3\nupdates = 6\neval_every = 2\nfisher = g-est\nbeta = 0.05\nstate_width = 3\nfisher_weight = 0.01\ntau = 1e-4\n",
    )
    .map_err(fail)?;
    let run = || -> bpg_lab::Result<(String, String)> {
        Ok((
            grad_compare_csv(&run_grad_compare(&grad)?),
            optimize_csv(&run_optimize(&opt)?),
        ))
    };
    let first = run().map_err(fail)?;
    let second = run().map_err(fail)?;
    ensure!(first == second, "rerun changed the output");
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .map_err(fail)?;
    let threaded = pool.install(run).map_err(fail)?;
    ensure!(first == threaded, "thread count changed the output");
    Ok(())
}
