//! Bayesian actor-critic.
//!
//! The critic is a GPTD posterior under the kernel
//! `k(z, z') = k_x(x, x') + w · u(z)ᵀG⁻¹u(z')`. With that prior the
//! gradient posterior is available in closed form: `E = w Uα`,
//! `Cov = w G - w² U C Uᵀ`, where `U` holds the state-action scores of the
//! critic basis. The state kernel drops out because scores average to zero
//! over actions.

use nalgebra::{DMatrix, DVector};

use crate::bq::checked_psd;
use crate::envs::{Observation, Trajectory};
use crate::error::{Error, Result};
use crate::estimate::{Estimator, GradientEstimate};
use crate::fisher::FisherInfo;
use crate::gptd::{gptd_fit, gptd_fit_sparse, Episode, GaussianKernel, GptdPosterior, Kernel};
use crate::policies::Policy;

/// A state-action pair as seen by the composite kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct SaPoint {
    pub state: Vec<f64>,
    /// `∇θ log μ(a | x; θ)`
    pub score: DVector<f64>,
    /// `G⁻¹ u`
    pub natural: DVector<f64>,
}

/// Gaussian state kernel plus a weighted Fisher kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeKernel {
    pub state: GaussianKernel,
    pub fisher_weight: f64,
}

impl CompositeKernel {
    pub fn new(state_width: f64, fisher_weight: f64) -> Result<Self> {
        if !(fisher_weight >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Fisher kernel weight {fisher_weight} must be nonnegative"
            )));
        }
        Ok(Self {
            state: GaussianKernel::new(state_width)?,
            fisher_weight,
        })
    }

    /// `u(z)ᵀG⁻¹u(z')`.
    pub fn fisher_part(a: &SaPoint, b: &SaPoint) -> f64 {
        a.score.dot(&b.natural)
    }
}

impl Kernel for CompositeKernel {
    type Point = SaPoint;

    fn eval(&self, a: &SaPoint, b: &SaPoint) -> f64 {
        self.state.eval_slices(&a.state, &b.state) + self.fisher_weight * Self::fisher_part(a, b)
    }
}

/// Real-valued state features used by the state kernel.
pub fn state_features(obs: &Observation) -> Vec<f64> {
    match obs {
        Observation::Empty => Vec::new(),
        Observation::Index(i) => vec![*i as f64],
        Observation::Point(p) => p.clone(),
    }
}

/// Converts trajectories into critic episodes.
pub fn critic_episodes(
    policy: &dyn Policy,
    theta: &DVector<f64>,
    fisher: &FisherInfo,
    trajectories: &[Trajectory],
) -> Result<Vec<Episode<SaPoint>>> {
    if fisher.dim() != policy.dim() {
        return Err(Error::DimensionMismatch {
            context: "Fisher matrix",
            expected: policy.dim(),
            found: fisher.dim(),
        });
    }
    trajectories
        .iter()
        .map(|traj| {
            let mut points = Vec::with_capacity(traj.len());
            let mut rewards = Vec::with_capacity(traj.len());
            for tr in &traj.transitions {
                let score = policy.score(theta, &tr.observation, &tr.action)?;
                let natural = fisher.solve(&score);
                points.push(SaPoint {
                    state: state_features(&tr.observation),
                    score,
                    natural,
                });
                rewards.push(tr.reward);
            }
            let terminal = !traj.truncated && traj.transitions.last().is_some_and(|t| t.terminal);
            Ok(Episode {
                points,
                rewards,
                terminal,
            })
        })
        .collect()
}

/// Gradient posterior from a critic posterior whose basis has scores `scores`
/// (one column per basis point, in basis order) under Fisher-kernel weight
/// `fisher_weight`.
pub fn bac_gradient<P>(
    critic: &GptdPosterior<P>,
    scores: &DMatrix<f64>,
    fisher: &FisherInfo,
    fisher_weight: f64,
) -> Result<GradientEstimate>
where
    P: Clone,
{
    gradient_moments(critic, scores, fisher, fisher_weight, Estimator::Bac)
}

/// Same moments over a sparse critic's dictionary.
pub fn bac_gradient_sparse<P>(
    critic: &GptdPosterior<P>,
    scores: &DMatrix<f64>,
    fisher: &FisherInfo,
    fisher_weight: f64,
) -> Result<GradientEstimate>
where
    P: Clone,
{
    gradient_moments(critic, scores, fisher, fisher_weight, Estimator::BacSparse)
}

fn gradient_moments<P: Clone>(
    critic: &GptdPosterior<P>,
    scores: &DMatrix<f64>,
    fisher: &FisherInfo,
    weight: f64,
    estimator: Estimator,
) -> Result<GradientEstimate> {
    let n = fisher.dim();
    let prior = fisher.regularized() * weight;
    if critic.basis.is_empty() {
        return Ok(GradientEstimate {
            mean: DVector::zeros(n),
            covariance: Some(prior),
            samples: 0,
            estimator,
        });
    }
    if scores.ncols() != critic.len() {
        return Err(Error::DimensionMismatch {
            context: "critic basis scores",
            expected: critic.len(),
            found: scores.ncols(),
        });
    }
    if scores.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "score dimension",
            expected: n,
            found: scores.nrows(),
        });
    }
    let mean = scores * &critic.alpha * weight;
    let cov = prior - scores * &critic.c * scores.transpose() * (weight * weight);
    Ok(GradientEstimate {
        mean,
        covariance: Some(checked_psd(cov)?),
        samples: 0,
        estimator,
    })
}

/// Critic settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BacConfig {
    pub kernel: CompositeKernel,
    /// GPTD noise variance.
    pub sigma2: f64,
    /// Sparsification threshold; dense critic when `None`.
    pub tau: Option<f64>,
}

/// Fits the critic to `trajectories` and returns the gradient posterior.
pub fn bac_eval(
    config: &BacConfig,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    trajectories: &[Trajectory],
    fisher: &FisherInfo,
) -> Result<GradientEstimate> {
    let eps = critic_episodes(policy, theta, fisher, trajectories)?;
    let gamma = trajectories.first().map_or(1.0, |t| t.gamma);
    let critic = match config.tau {
        None => gptd_fit(&eps, &config.kernel, config.sigma2, gamma)?,
        Some(tau) => gptd_fit_sparse(&eps, &config.kernel, config.sigma2, gamma, tau)?,
    };
    let basis_scores = if critic.is_empty() {
        DMatrix::zeros(fisher.dim(), 0)
    } else {
        DMatrix::from_columns(
            &critic
                .basis
                .iter()
                .map(|p| p.score.clone())
                .collect::<Vec<_>>(),
        )
    };
    let w = config.kernel.fisher_weight;
    let mut est = match config.tau {
        None => bac_gradient(&critic, &basis_scores, fisher, w)?,
        Some(_) => bac_gradient_sparse(&critic, &basis_scores, fisher, w)?,
    };
    est.samples = trajectories.len();
    Ok(est)
}
