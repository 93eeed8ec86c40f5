//! Bayesian policy gradient over whole trajectories.
//!
//! Model 1 places a GP on `R(ξ) ∇log Pr(ξ; θ)` component-wise with the
//! quadratic Fisher kernel; Model 2 places a GP on `R(ξ)` with the Fisher
//! kernel. Both yield closed-form prior integrals, so the gradient
//! posterior follows from one conditioning on the sampled paths.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::bq::{
    checked_psd, clamp_variance, decoupled_vector_posterior, matrix_integral_posterior, GpDataset,
    MatrixIntegralPrior,
};
use crate::envs::{Environment, Trajectory};
use crate::error::{Error, Result};
use crate::estimate::{Estimator, GradientEstimate};
use crate::fisher::FisherInfo;
use crate::linalg::{PsdFactor, BASE_JITTER};
use crate::policies::{trajectory_score, Policy};
use crate::rng::SimRng;
use crate::rollout::episodes;
use crate::sparse::{projection_matrix, SparseDictionary};

/// Sparsification threshold used when none is configured.
pub const DEFAULT_TAU: f64 = 1e-2;

/// Relative scale of the jitter noise used when rewards are deterministic.
pub const DEFAULT_NOISE_SCALE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BpgModel {
    /// GP on `R(ξ)u(ξ)` with the quadratic Fisher kernel.
    One,
    /// GP on `R(ξ)` with the Fisher kernel.
    Two,
}

impl BpgModel {
    pub fn kernel(self) -> TrajKernel {
        match self {
            BpgModel::One => TrajKernel::QuadraticFisher,
            BpgModel::Two => TrajKernel::Fisher,
        }
    }

    pub fn estimator(self, sparse: bool) -> Estimator {
        match (self, sparse) {
            (BpgModel::One, false) => Estimator::Bq1,
            (BpgModel::One, true) => Estimator::Bq1Sparse,
            (BpgModel::Two, false) => Estimator::Bq2,
            (BpgModel::Two, true) => Estimator::Bq2Sparse,
        }
    }
}

impl fmt::Display for BpgModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BpgModel::One => "model1",
            BpgModel::Two => "model2",
        })
    }
}

impl FromStr for BpgModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model1" | "1" => Ok(BpgModel::One),
            "model2" | "2" => Ok(BpgModel::Two),
            _ => Err(Error::config("model", format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrajKernel {
    /// `(1 + uᵢᵀG⁻¹uⱼ)²`
    QuadraticFisher,
    /// `uᵢᵀG⁻¹uⱼ`
    Fisher,
}

impl TrajKernel {
    fn apply(self, q: f64) -> f64 {
        match self {
            TrajKernel::QuadraticFisher => (1.0 + q) * (1.0 + q),
            TrajKernel::Fisher => q,
        }
    }
}

pub fn traj_kernel(
    kind: TrajKernel,
    u_i: &DVector<f64>,
    u_j: &DVector<f64>,
    fisher: &FisherInfo,
) -> Result<f64> {
    for u in [u_i, u_j] {
        if u.len() != fisher.dim() {
            return Err(Error::DimensionMismatch {
                context: "trajectory kernel",
                expected: fisher.dim(),
                found: u.len(),
            });
        }
    }
    Ok(kind.apply(fisher.inner(u_i, u_j)))
}

/// Score and return of one sampled path.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub score: DVector<f64>,
    pub ret: f64,
}

/// Scores and discounted returns of sampled trajectories.
pub fn path_samples(
    policy: &dyn Policy,
    theta: &DVector<f64>,
    trajectories: &[Trajectory],
) -> Result<Vec<PathSample>> {
    trajectories
        .iter()
        .map(|traj| {
            Ok(PathSample {
                score: trajectory_score(policy, theta, traj)?,
                ret: traj.discounted_return(),
            })
        })
        .collect()
}

/// Closed-form prior integrals over the sampled paths.
#[derive(Clone, Debug, PartialEq)]
pub enum ClosedFormPrior {
    /// `bᵢ = 1 + uᵢᵀG⁻¹uᵢ`, `b₀ = 1 + n`.
    One { b: DVector<f64>, b0: f64 },
    /// `B = [u₁ … u_M]`, `B₀ = G`.
    Two { b: DMatrix<f64>, b0: DMatrix<f64> },
}

pub fn closed_form_prior(
    model: BpgModel,
    scores: &[DVector<f64>],
    fisher: &FisherInfo,
) -> Result<ClosedFormPrior> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("path scores"));
    }
    let n = fisher.dim();
    check_scores(scores, n)?;
    Ok(match model {
        BpgModel::One => ClosedFormPrior::One {
            b: DVector::from_iterator(
                scores.len(),
                scores.iter().map(|u| 1.0 + fisher.inner(u, u)),
            ),
            b0: 1.0 + n as f64,
        },
        BpgModel::Two => ClosedFormPrior::Two {
            b: DMatrix::from_columns(scores),
            b0: fisher.regularized(),
        },
    })
}

fn check_scores(scores: &[DVector<f64>], n: usize) -> Result<()> {
    if let Some(bad) = scores.iter().find(|u| u.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "path scores",
            expected: n,
            found: bad.len(),
        });
    }
    Ok(())
}

/// Measurement-noise model for path returns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    /// Per-step reward noise standard deviation.
    pub reward_std: f64,
    /// Path length.
    pub horizon: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            reward_std: 0.0,
            horizon: 1,
        }
    }
}

impl NoiseSpec {
    fn check(&self) -> Result<()> {
        if !(self.reward_std >= 0.0) || !self.reward_std.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "reward noise std {} must be nonnegative",
                self.reward_std
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// Diagonal of the measurement-noise covariance.
///
/// `component` selects the Model 1 component whose noise scales with the
/// squared score entries; Model 2 ignores it. With zero reward noise the
/// default `1e-4 · mean(diag K)` is used for every path.
pub fn noise_cov(
    model: BpgModel,
    spec: &NoiseSpec,
    scores: &[DVector<f64>],
    component: usize,
    kernel_diag_mean: f64,
) -> Result<DVector<f64>> {
    spec.check()?;
    let m = scores.len();
    if spec.reward_std == 0.0 {
        return Ok(DVector::from_element(
            m,
            DEFAULT_NOISE_SCALE * kernel_diag_mean,
        ));
    }
    let level = spec.horizon as f64 * spec.reward_std * spec.reward_std;
    Ok(match model {
        BpgModel::One => DVector::from_iterator(
            m,
            scores.iter().map(|u| level * u[component] * u[component]),
        ),
        BpgModel::Two => DVector::from_element(m, level),
    })
}

/// Gradient-posterior settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BpgConfig {
    pub model: BpgModel,
    pub noise: NoiseSpec,
    /// Sparsification threshold; dense conditioning when `None`.
    pub tau: Option<f64>,
}

impl BpgConfig {
    pub fn dense(model: BpgModel) -> Self {
        Self {
            model,
            noise: NoiseSpec::default(),
            tau: None,
        }
    }

    pub fn sparse(model: BpgModel, tau: f64) -> Self {
        Self {
            model,
            noise: NoiseSpec::default(),
            tau: Some(tau),
        }
    }
}

/// Gram data shared by the dense and sparse forms.
struct PathGram {
    n: usize,
    scores: Vec<DVector<f64>>,
    returns: DVector<f64>,
    /// `uᵢᵀG⁻¹uⱼ`
    inner: DMatrix<f64>,
    kernel: DMatrix<f64>,
}

impl PathGram {
    fn new(kind: TrajKernel, samples: &[PathSample], fisher: &FisherInfo) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("path samples"));
        }
        let n = fisher.dim();
        let scores: Vec<DVector<f64>> = samples.iter().map(|s| s.score.clone()).collect();
        check_scores(&scores, n)?;
        let m = samples.len();
        let u = DMatrix::from_columns(&scores);
        let v = fisher.solve_matrix(&u);
        let mut inner = u.transpose() * v;
        inner = (&inner + inner.transpose()) * 0.5;
        let kernel = inner.map(|q| kind.apply(q));
        let returns = DVector::from_iterator(m, samples.iter().map(|s| s.ret));
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::NumericalInconsistency(
                "non-finite path return".into(),
            ));
        }
        Ok(Self {
            n,
            scores,
            returns,
            inner,
            kernel,
        })
    }

    fn m(&self) -> usize {
        self.returns.len()
    }

    fn kernel_diag_mean(&self) -> f64 {
        self.kernel.diagonal().mean()
    }

    /// Model 1 observations of component `j`: `R(ξᵢ) uⱼ(ξᵢ)`.
    fn component_obs(&self, j: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.m(),
            (0..self.m()).map(|i| self.returns[i] * self.scores[i][j]),
        )
    }
}

/// Gradient posterior from sampled paths.
pub fn bpg_posterior(
    config: &BpgConfig,
    samples: &[PathSample],
    fisher: &FisherInfo,
) -> Result<GradientEstimate> {
    let gram = PathGram::new(config.model.kernel(), samples, fisher)?;
    let (mean, cov) = match (config.model, config.tau) {
        (BpgModel::One, None) => model_one_dense(config, &gram)?,
        (BpgModel::Two, None) => model_two_dense(config, &gram, fisher)?,
        (model, Some(tau)) => {
            let sparse = SparseGram::new(&gram, tau)?;
            match model {
                BpgModel::One => model_one_sparse(config, &gram, &sparse)?,
                BpgModel::Two => model_two_sparse(config, &gram, &sparse, fisher)?,
            }
        }
    };
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalInconsistency(
            "non-finite gradient posterior mean".into(),
        ));
    }
    Ok(GradientEstimate {
        mean,
        covariance: Some(cov),
        samples: samples.len(),
        estimator: config.model.estimator(config.tau.is_some()),
    })
}

/// Samples `m` paths and returns the gradient posterior.
pub fn bpg_eval(
    config: &BpgConfig,
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    m: usize,
    fisher: &FisherInfo,
    rng: &mut SimRng,
) -> Result<GradientEstimate> {
    if m == 0 {
        return Err(Error::EmptyInput("sample paths"));
    }
    let trajectories = episodes(env, policy, theta, m, rng)?;
    bpg_posterior(config, &path_samples(policy, theta, &trajectories)?, fisher)
}

fn model_one_dense(config: &BpgConfig, gram: &PathGram) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = gram.n;
    let b = DVector::from_iterator(gram.m(), (0..gram.m()).map(|i| 1.0 + gram.inner[(i, i)]));
    let b0 = 1.0 + n as f64;
    let diag_mean = gram.kernel_diag_mean();
    if config.noise.reward_std == 0.0 {
        let noise = noise_cov(BpgModel::One, &config.noise, &gram.scores, 0, diag_mean)?;
        let ys = DMatrix::from_fn(n, gram.m(), |j, i| gram.returns[i] * gram.scores[i][j]);
        let (mean, var) =
            decoupled_vector_posterior(&gram.kernel, &DMatrix::from_diagonal(&noise), &ys, &b, b0)?;
        return Ok((mean, DMatrix::identity(n, n) * var));
    }
    let mut mean = DVector::zeros(n);
    let mut var = DVector::zeros(n);
    for j in 0..n {
        let noise = noise_cov(BpgModel::One, &config.noise, &gram.scores, j, diag_mean)?;
        let factor = PsdFactor::new(
            &(&gram.kernel + DMatrix::from_diagonal(&noise)),
            "K + noise",
        )?;
        let cb = factor.solve(&b);
        mean[j] = gram.component_obs(j).dot(&cb);
        var[j] = clamp_variance(b0 - b.dot(&cb))?;
    }
    Ok((mean, DMatrix::from_diagonal(&var)))
}

fn model_two_dense(
    config: &BpgConfig,
    gram: &PathGram,
    fisher: &FisherInfo,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let noise = noise_cov(
        BpgModel::Two,
        &config.noise,
        &gram.scores,
        0,
        gram.kernel_diag_mean(),
    )?;
    let data = GpDataset::new(
        gram.kernel.clone(),
        DMatrix::from_diagonal(&noise),
        gram.returns.clone(),
    );
    let prior = MatrixIntegralPrior {
        rho0: DVector::zeros(gram.n),
        b: DMatrix::from_columns(&gram.scores),
        b0: fisher.regularized(),
    };
    matrix_integral_posterior(&prior, &data)
}

/// Dictionary over paths with its projection matrix.
struct SparseGram {
    members: Vec<usize>,
    /// Cholesky factor of the dictionary kernel matrix.
    l: DMatrix<f64>,
    /// `M × m` projection.
    a: DMatrix<f64>,
}

impl SparseGram {
    fn new(gram: &PathGram, tau: f64) -> Result<Self> {
        let mut dict = SparseDictionary::new(tau)?;
        let mut rows = Vec::with_capacity(gram.m());
        for i in 0..gram.m() {
            let k_vec: Vec<f64> = dict
                .members()
                .iter()
                .map(|&d| gram.kernel[(d, i)])
                .collect();
            rows.push(dict.admit(&i, gram.kernel[(i, i)], &k_vec).row);
        }
        let a = projection_matrix(&rows, dict.len());
        Ok(Self {
            members: dict.members().to_vec(),
            l: dict.factor(),
            a,
        })
    }

    /// `S = I + Lᵀ Aᵀ Σ⁻¹ A L` for diagonal `Σ`.
    fn inner_system(&self, noise: &DVector<f64>) -> Result<(DMatrix<f64>, PsdFactor)> {
        let scaled = DMatrix::from_fn(self.a.nrows(), self.a.ncols(), |i, j| {
            self.a[(i, j)] / noise[i]
        });
        let p = self.a.transpose() * scaled;
        let m = self.members.len();
        let s = DMatrix::identity(m, m) + self.l.transpose() * &p * &self.l;
        let s = (&s + s.transpose()) * 0.5;
        Ok((p, PsdFactor::identity_dominated(&s, "sparse inner system")?))
    }

    fn lower_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.l
            .solve_lower_triangular(v)
            .expect("dictionary factor has a positive diagonal")
    }

    fn lower_solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.l
            .solve_lower_triangular(m)
            .expect("dictionary factor has a positive diagonal")
    }
}

/// Noise of the sparse forms: the same diagonal jitter the dense
/// factorization adds to `K + Σ` is folded into `Σ` so that both forms
/// condition on the same model.
fn jittered(noise: DVector<f64>) -> DVector<f64> {
    noise.add_scalar(BASE_JITTER)
}

fn model_one_sparse(
    config: &BpgConfig,
    gram: &PathGram,
    sparse: &SparseGram,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = gram.n;
    let b0 = 1.0 + n as f64;
    let b_dict = DVector::from_iterator(
        sparse.members.len(),
        sparse.members.iter().map(|&d| 1.0 + gram.inner[(d, d)]),
    );
    let w = sparse.lower_solve(&b_dict);
    let shared = config.noise.reward_std == 0.0;
    let diag_mean = gram.kernel_diag_mean();
    let mut mean = DVector::zeros(n);
    let mut var = DVector::zeros(n);
    let mut cached = None;
    for j in 0..n {
        if cached.is_none() || !shared {
            let noise = jittered(noise_cov(
                BpgModel::One,
                &config.noise,
                &gram.scores,
                j,
                diag_mean,
            )?);
            let (_, s) = sparse.inner_system(&noise)?;
            let s_w = s.solve(&w);
            // Σ⁻¹ A L S⁻¹ w
            let weights = (&sparse.a * (&sparse.l * &s_w)).component_div(&noise);
            let v = clamp_variance(b0 - w.norm_squared() + w.dot(&s_w))?;
            cached = Some((weights, v));
        }
        let (weights, v) = cached.as_ref().expect("set above");
        mean[j] = gram.component_obs(j).dot(weights);
        var[j] = *v;
    }
    Ok((mean, DMatrix::from_diagonal(&var)))
}

fn model_two_sparse(
    config: &BpgConfig,
    gram: &PathGram,
    sparse: &SparseGram,
    fisher: &FisherInfo,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let noise = jittered(noise_cov(
        BpgModel::Two,
        &config.noise,
        &gram.scores,
        0,
        gram.kernel_diag_mean(),
    )?);
    let (_, s) = sparse.inner_system(&noise)?;
    let b_dict = DMatrix::from_columns(
        &sparse
            .members
            .iter()
            .map(|&d| gram.scores[d].clone())
            .collect::<Vec<_>>(),
    );
    // W = L⁻¹ B̃ᵀ
    let w = sparse.lower_solve_matrix(&b_dict.transpose());
    let z = sparse.l.transpose() * (sparse.a.transpose() * gram.returns.component_div(&noise));
    let mean = w.transpose() * s.solve(&z);
    let cov = fisher.regularized() - w.transpose() * &w + w.transpose() * s.solve_matrix(&w);
    Ok((mean, checked_psd(cov)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fisher::FisherMethod;
    use crate::linalg::max_abs_diff;

    fn info(diag: &[f64]) -> FisherInfo {
        FisherInfo::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
            FisherMethod::Analytic,
        )
        .unwrap()
    }

    fn sample(score: &[f64], ret: f64) -> PathSample {
        PathSample {
            score: DVector::from_row_slice(score),
            ret,
        }
    }

    #[test]
    fn kernel_values() {
        let g = info(&[1.0, 2.0]);
        let zero = DVector::zeros(2);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert!(
            (traj_kernel(TrajKernel::QuadraticFisher, &zero, &zero, &g).unwrap() - 1.0).abs()
                < 1e-12
        );
        assert!(
            (traj_kernel(TrajKernel::QuadraticFisher, &e1, &e1, &g).unwrap() - 4.0).abs() < 1e-5
        );
        assert!(
            traj_kernel(TrajKernel::Fisher, &e1, &e2, &info(&[1.0, 1.0]))
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn closed_form_prior_values() {
        let g = info(&[1.0, 2.0]);
        let scores = vec![DVector::from_vec(vec![1.0, 0.0])];
        match closed_form_prior(BpgModel::One, &scores, &g).unwrap() {
            ClosedFormPrior::One { b, b0 } => {
                assert_eq!(b0, 3.0);
                assert!((b[0] - 2.0).abs() < 1e-5);
            }
            _ => unreachable!(),
        }
        match closed_form_prior(BpgModel::Two, &scores, &g).unwrap() {
            ClosedFormPrior::Two { b, b0 } => {
                assert_eq!(b.column(0), scores[0].column(0));
                assert_eq!(b0, g.regularized());
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn noise_structures() {
        let scores = vec![DVector::from_vec(vec![2.0, 0.5]); 3];
        let spec = NoiseSpec {
            reward_std: 1.0,
            horizon: 20,
        };
        let two = noise_cov(BpgModel::Two, &spec, &scores, 0, 1.0).unwrap();
        assert!(two.iter().all(|&v| v == 20.0));
        let one = noise_cov(BpgModel::One, &spec, &scores, 0, 1.0).unwrap();
        assert!(one.iter().all(|&v| v == 80.0));
        let quiet = noise_cov(BpgModel::Two, &NoiseSpec::default(), &scores, 0, 5.0).unwrap();
        assert!(quiet.iter().all(|&v| (v - 5e-4).abs() < 1e-15));
    }

    #[test]
    fn model_two_single_path() {
        // G = I, one path: mean = u C R with C ≈ 1/k, cov = I - e₁e₁ᵀ
        let g = info(&[1.0, 1.0]);
        let est = bpg_posterior(
            &BpgConfig::dense(BpgModel::Two),
            &[sample(&[1.0, 0.0], 3.0)],
            &g,
        )
        .unwrap();
        assert!((est.mean[0] - 3.0).abs() < 1e-3 && est.mean[1].abs() < 1e-12);
        let cov = est.covariance.unwrap();
        assert!(cov[(0, 0)].abs() < 1e-3 && (cov[(1, 1)] - 1.0).abs() < 1e-5);
    }

    fn fixture() -> (Vec<PathSample>, FisherInfo) {
        let samples = vec![
            sample(&[0.3, -1.2], 1.5),
            sample(&[1.1, 0.4], -0.7),
            sample(&[-0.8, 0.9], 2.2),
            sample(&[0.05, 0.6], 0.4),
            sample(&[-1.4, -0.3], 1.1),
        ];
        let g = FisherInfo::new(
            DMatrix::from_row_slice(2, 2, &[1.3, 0.2, 0.2, 0.9]),
            FisherMethod::Analytic,
        )
        .unwrap();
        (samples, g)
    }

    #[test]
    fn sparse_matches_dense_with_tiny_threshold() {
        let (samples, g) = fixture();
        for model in [BpgModel::One, BpgModel::Two] {
            for reward_std in [0.0, 0.3] {
                let noise = NoiseSpec {
                    reward_std,
                    horizon: 4,
                };
                let dense = bpg_posterior(
                    &BpgConfig {
                        model,
                        noise,
                        tau: None,
                    },
                    &samples,
                    &g,
                )
                .unwrap();
                let sparse = bpg_posterior(
                    &BpgConfig {
                        model,
                        noise,
                        tau: Some(1e-12),
                    },
                    &samples,
                    &g,
                )
                .unwrap();
                assert!((&dense.mean - &sparse.mean).amax() < 1e-6, "{model} mean");
                let dc = dense.covariance.unwrap();
                let sc = sparse.covariance.unwrap();
                assert!(max_abs_diff(&dc, &sc) < 1e-6, "{model} cov");
            }
        }
    }

    #[test]
    fn duplicate_paths_give_one_member() {
        let g = info(&[1.0, 1.0]);
        let samples = vec![sample(&[0.5, 0.5], 1.0); 6];
        let est = bpg_posterior(&BpgConfig::sparse(BpgModel::One, 1e-2), &samples, &g).unwrap();
        assert!(est.mean.iter().all(|v| v.is_finite()));
        let gram = PathGram::new(TrajKernel::QuadraticFisher, &samples, &g).unwrap();
        assert_eq!(SparseGram::new(&gram, 1e-2).unwrap().members.len(), 1);
    }

    #[test]
    fn model_one_covariance_is_bounded() {
        let (samples, g) = fixture();
        for tau in [None, Some(1e-2), Some(0.5)] {
            let est = bpg_posterior(
                &BpgConfig {
                    model: BpgModel::One,
                    noise: NoiseSpec::default(),
                    tau,
                },
                &samples,
                &g,
            )
            .unwrap();
            let cov = est.covariance.unwrap();
            assert!(cov.trace() <= 3.0 * 2.0 + 1e-12);
            assert!(cov[(0, 1)] == 0.0);
        }
    }
}
