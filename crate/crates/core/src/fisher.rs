//! Fisher information estimates.
//!
//! A [`FisherInfo`] stores the symmetrized matrix together with its jittered
//! factorization, so products `G⁻¹v` are always PSD solves.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::envs::{Environment, Lqr};
use crate::error::{Error, Result};
use crate::linalg::{symmetrize, PsdFactor};
use crate::policies::{trajectory_score, LqrGaussian, Policy};
use crate::rng::SimRng;
use crate::rollout::rollout;

/// Largest parameter dimension for which dense Fisher matrices are formed.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FisherMethod {
    Analytic,
    TrajMc,
    StateActionAvg,
    GEst,
    MlModel,
}

impl FisherMethod {
    pub fn tag(self) -> &'static str {
        match self {
            FisherMethod::Analytic => "analytic",
            FisherMethod::TrajMc => "mc",
            FisherMethod::StateActionAvg => "state-action-avg",
            FisherMethod::GEst => "g-est",
            FisherMethod::MlModel => "ml",
        }
    }
}

impl fmt::Display for FisherMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FisherMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "analytic" => FisherMethod::Analytic,
            "mc" | "traj-mc" => FisherMethod::TrajMc,
            "state-action-avg" | "ghat" => FisherMethod::StateActionAvg,
            "g-est" => FisherMethod::GEst,
            "ml" | "ml-model" => FisherMethod::MlModel,
            other => {
                return Err(Error::config(
                    "fisher",
                    format!("unknown Fisher method `{other}`"),
                ))
            }
        })
    }
}

/// Symmetric PSD Fisher matrix with its factorization.
#[derive(Clone, Debug)]
pub struct FisherInfo {
    matrix: DMatrix<f64>,
    factor: PsdFactor,
    method: FisherMethod,
}

impl FisherInfo {
    pub fn new(matrix: DMatrix<f64>, method: FisherMethod) -> Result<Self> {
        if matrix.nrows() > DENSE_LIMIT {
            return Err(Error::TooLarge {
                context: "Fisher matrix",
                dim: matrix.nrows(),
                limit: DENSE_LIMIT,
            });
        }
        let matrix = symmetrize(&matrix);
        // jitter in units of the mean diagonal keeps uᵀG⁻¹u' unchanged when
        // the parameters are rescaled; the floor keeps the absolute 1e-6 for
        // a vanishing G (near-deterministic policies)
        let scale = if matrix.nrows() == 0 {
            1.0
        } else {
            matrix.diagonal().mean().max(1.0)
        };
        let factor = PsdFactor::scaled(&matrix, scale, "Fisher information")?;
        Ok(Self {
            matrix,
            factor,
            method,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `G + jitter · I`, the matrix the factorization actually inverts.
    /// Prior covariances built from the Fisher kernel use this form so that
    /// they stay consistent with `G⁻¹` as applied.
    pub fn regularized(&self) -> DMatrix<f64> {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += self.factor.jitter();
        }
        m
    }

    pub fn method(&self) -> FisherMethod {
        self.method
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn factor(&self) -> &PsdFactor {
        &self.factor
    }

    /// `G⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(v)
    }

    pub fn solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve_matrix(m)
    }

    /// `uᵀ G⁻¹ v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        u.dot(&self.factor.solve(v))
    }

    /// Determinant of `G` (after jitter).
    pub fn determinant(&self) -> f64 {
        self.factor.determinant()
    }
}

fn check_scores(scores: &[DVector<f64>]) -> Result<usize> {
    let first = scores.first().ok_or(Error::EmptyInput("score list"))?;
    let n = first.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            context: "Fisher matrix",
            dim: n,
            limit: DENSE_LIMIT,
        });
    }
    if let Some(bad) = scores.iter().find(|u| u.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "score list",
            expected: n,
            found: bad.len(),
        });
    }
    Ok(n)
}

/// `(1/M) Σ uᵢuᵢᵀ` over trajectory scores.
pub fn traj_mc(scores: &[DVector<f64>]) -> Result<FisherInfo> {
    let n = check_scores(scores)?;
    let mut g = DMatrix::zeros(n, n);
    for u in scores {
        g.ger(1.0, u, u, 1.0);
    }
    g /= scores.len() as f64;
    FisherInfo::new(g, FisherMethod::TrajMc)
}

/// One step of the recursive inverse of `Ĝᵢ₊₁ = (1-ζ)Ĝᵢ + ζuuᵀ`
/// by the Sherman-Morrison identity.
pub fn inverse_recursive_update(
    prev_inverse: &DMatrix<f64>,
    u: &DVector<f64>,
    zeta: f64,
) -> Result<DMatrix<f64>> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "step size {zeta} must lie in (0, 1)"
        )));
    }
    if prev_inverse.nrows() != u.len() || !prev_inverse.is_square() {
        return Err(Error::DimensionMismatch {
            context: "recursive Fisher inverse",
            expected: prev_inverse.nrows(),
            found: u.len(),
        });
    }
    let gu = prev_inverse * u;
    let denom = 1.0 - zeta + zeta * u.dot(&gu);
    let mut next = prev_inverse.clone();
    next.ger(-zeta / denom, &gu, &gu, 1.0);
    next /= 1.0 - zeta;
    Ok(symmetrize(&next))
}

/// `U Uᵀ / (t+1)` for a score matrix with one column per state-action pair.
pub fn state_action_average(scores: &DMatrix<f64>) -> Result<FisherInfo> {
    if scores.ncols() == 0 {
        return Err(Error::EmptyInput("state-action scores"));
    }
    if scores.nrows() > DENSE_LIMIT {
        return Err(Error::TooLarge {
            context: "Fisher matrix",
            dim: scores.nrows(),
            limit: DENSE_LIMIT,
        });
    }
    let g = scores * scores.transpose() / scores.ncols() as f64;
    FisherInfo::new(g, FisherMethod::StateActionAvg)
}

/// Restart-chain Fisher estimate over `m` episodes.
///
/// Along each episode `u uᵀ` is accumulated for every non-terminal step
/// until a Bernoulli(1-γ) restart fires. If the episode terminates first,
/// the last step's outer product is added with weight `1/(1-γ)`.
pub fn g_est(
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    m: usize,
    gamma: f64,
    rng: &mut SimRng,
) -> Result<FisherInfo> {
    if m == 0 {
        return Err(Error::EmptyInput("g-est episodes"));
    }
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("discount {gamma}")));
    }
    let n = policy.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge {
            context: "Fisher matrix",
            dim: n,
            limit: DENSE_LIMIT,
        });
    }
    policy.validate(theta)?;
    let cap = env.step_cap();
    let mut g = DMatrix::zeros(n, n);
    for _ in 0..m {
        let mut state = env.reset(rng);
        let mut steps = 0;
        loop {
            let obs = env.emit(&state, rng);
            let action = policy.sample(theta, &obs, rng)?;
            let step = env.step(&state, &action, rng)?;
            let u = policy.score(theta, &obs, &action)?;
            steps += 1;
            if step.terminal {
                if gamma >= 1.0 {
                    return Err(Error::InvalidParameter(
                        "terminal weight 1/(1-γ) is undefined for γ = 1".into(),
                    ));
                }
                g.ger(1.0 / (1.0 - gamma), &u, &u, 1.0);
                break;
            }
            g.ger(1.0, &u, &u, 1.0);
            if rng.random::<f64>() < 1.0 - gamma {
                break;
            }
            if steps >= cap {
                if gamma >= 1.0 {
                    return Err(Error::StepCapExceeded { cap });
                }
                // remaining weight is at most γ^cap; stop like a restart
                break;
            }
            state = step.next_state;
        }
    }
    g /= m as f64;
    FisherInfo::new(g, FisherMethod::GEst)
}

/// Exact Fisher matrices where a closed form exists.
pub fn analytic_bandit(theta: &DVector<f64>) -> Result<FisherInfo> {
    if theta.len() != 2 || !(theta[1] > 0.0) {
        return Err(Error::InvalidParameter(
            "bandit parameters must be (mean, std > 0)".into(),
        ));
    }
    let var = theta[1] * theta[1];
    FisherInfo::new(
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / var, 2.0 / var])),
        FisherMethod::Analytic,
    )
}

pub fn analytic_lqr(lqr: &Lqr, policy: &LqrGaussian, theta: &DVector<f64>) -> Result<FisherInfo> {
    FisherInfo::new(
        crate::oracles::lqr_fisher(lqr, policy, theta)?,
        FisherMethod::Analytic,
    )
}

/// `P(x' | x, a) = N(c₁x + c₂a + c₃, c₄²)` fitted by least squares.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearGaussianModel {
    pub state_gain: f64,
    pub action_gain: f64,
    pub offset: f64,
    pub noise_std: f64,
}

/// Maximum-likelihood fit of a linear-Gaussian transition model to
/// `(x, a, x')` triples.
pub fn fit_linear_gaussian(transitions: &[(f64, f64, f64)]) -> Result<LinearGaussianModel> {
    if transitions.len() < 10 {
        return Err(Error::InvalidParameter(format!(
            "need at least 10 transitions, got {}",
            transitions.len()
        )));
    }
    let n = transitions.len();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => transitions[i].0,
        1 => transitions[i].1,
        _ => 1.0,
    });
    let target = DVector::from_iterator(n, transitions.iter().map(|t| t.2));
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient);
    }
    let coef = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::NumericalInconsistency(e.to_string()))?;
    let resid = &target - &design * &coef;
    Ok(LinearGaussianModel {
        state_gain: coef[0],
        action_gain: coef[1],
        offset: coef[2],
        noise_std: (resid.norm_squared() / n as f64).sqrt(),
    })
}

/// Fisher matrix of the LQR policy estimated by simulating `trajectories`
/// paths from a fitted transition model.
pub fn ml_lqr(
    model: &LinearGaussianModel,
    lqr: &Lqr,
    policy: &LqrGaussian,
    theta: &DVector<f64>,
    trajectories: usize,
    rng: &mut SimRng,
) -> Result<FisherInfo> {
    use rand_distr::{Distribution, Normal};

    let (gain, std) = policy.gain_and_std(theta)?;
    let (j1, j2) = policy.jacobian(theta);
    let init = Normal::new(lqr.x0_mean, lqr.x0_var.sqrt())
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let noise = Normal::new(0.0, model.noise_std.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut scores = Vec::with_capacity(trajectories);
    for _ in 0..trajectories {
        let mut x = init.sample(rng);
        let mut u = DVector::zeros(2);
        for _ in 0..lqr.horizon {
            let eps: f64 = rand_distr::StandardNormal.sample(rng);
            let a = gain * x + std * eps;
            u[0] += eps * x / std * j1;
            u[1] += (eps * eps - 1.0) / std * j2;
            x = model.state_gain * x + model.action_gain * a + model.offset + noise.sample(rng);
        }
        scores.push(u);
    }
    let mut info = traj_mc(&scores)?;
    info.method = FisherMethod::MlModel;
    Ok(info)
}

/// Fisher estimate by sampled trajectory scores at fixed parameters.
pub fn traj_mc_sampled(
    env: &dyn Environment,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    trajectories: usize,
    rng: &mut SimRng,
) -> Result<FisherInfo> {
    let scores = (0..trajectories)
        .map(|_| {
            let traj = rollout(env, policy, theta, rng)?;
            trajectory_score(policy, theta, &traj)
        })
        .collect::<Result<Vec<_>>>()?;
    traj_mc(&scores)
}
