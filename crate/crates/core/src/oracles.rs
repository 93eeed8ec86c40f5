//! Ground-truth values, gradients and error metrics.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::envs::{BanditReward, Lqr, Objective, Observation, RandomWalk};
use crate::error::{Error, Result};
use crate::policies::{trajectory_score, LqrGaussian, Policy};
use crate::rng::SimRng;
use crate::rollout::rollout;

/// `∇η` for the Gaussian bandit policy `N(θ₁, θ₂²)`.
pub fn exact_gradient_bandit(reward: BanditReward, theta: &DVector<f64>) -> Result<DVector<f64>> {
    check_bandit(theta)?;
    Ok(match reward {
        BanditReward::Linear => DVector::from_vec(vec![1.0, 0.0]),
        BanditReward::Quadratic => DVector::from_vec(vec![2.0 * theta[0], 2.0 * theta[1]]),
    })
}

/// `η = E[r(a)]` for the Gaussian bandit policy.
pub fn exact_value_bandit(reward: BanditReward, theta: &DVector<f64>) -> Result<f64> {
    check_bandit(theta)?;
    Ok(match reward {
        BanditReward::Linear => theta[0],
        BanditReward::Quadratic => theta[0] * theta[0] + theta[1] * theta[1],
    })
}

fn check_bandit(theta: &DVector<f64>) -> Result<()> {
    if theta.len() != 2 || !(theta[1] > 0.0) {
        return Err(Error::InvalidParameter(
            "bandit parameters must be (mean, std > 0)".into(),
        ));
    }
    Ok(())
}

/// Expected cost of the linear-Gaussian policy on the LQR together with its
/// derivatives with respect to `(λ, σ)`, from the second-moment recursion
/// `E[x²ₜ₊₁] = (1+λ)² E[x²ₜ] + σ² + var(n)`.
#[derive(Clone, Copy, Debug)]
pub struct LqrMoments {
    pub value: f64,
    pub d_gain: f64,
    pub d_std: f64,
    /// `Σₜ E[x²ₜ]` over the horizon.
    pub state_energy: f64,
}

pub fn lqr_moments(lqr: &Lqr, gain: f64, std: f64) -> LqrMoments {
    let c = lqr.action_cost;
    let rho = (1.0 + gain) * (1.0 + gain);
    let mut m = lqr.x0_mean * lqr.x0_mean + lqr.x0_var;
    let (mut dm_gain, mut dm_std) = (0.0, 0.0);
    let mut out = LqrMoments {
        value: 0.0,
        d_gain: 0.0,
        d_std: 0.0,
        state_energy: 0.0,
    };
    for _ in 0..lqr.horizon {
        let step_factor = 1.0 + c * gain * gain;
        out.value += m * step_factor + c * std * std;
        out.d_gain += dm_gain * step_factor + m * 2.0 * c * gain;
        out.d_std += dm_std * step_factor + 2.0 * c * std;
        out.state_energy += m;
        let next_dm_gain = 2.0 * (1.0 + gain) * m + rho * dm_gain;
        dm_std = rho * dm_std + 2.0 * std;
        dm_gain = next_dm_gain;
        m = rho * m + std * std + lqr.transition_var;
    }
    out
}

/// Expected LQR cost at the policy parameters.
pub fn lqr_value(lqr: &Lqr, policy: &LqrGaussian, theta: &DVector<f64>) -> Result<f64> {
    let (gain, std) = policy.gain_and_std(theta)?;
    Ok(lqr_moments(lqr, gain, std).value)
}

/// Exact gradient of the expected LQR cost in the policy's own parameters.
pub fn lqr_gradient(lqr: &Lqr, policy: &LqrGaussian, theta: &DVector<f64>) -> Result<DVector<f64>> {
    let (gain, std) = policy.gain_and_std(theta)?;
    let mom = lqr_moments(lqr, gain, std);
    let (j1, j2) = policy.jacobian(theta);
    Ok(DVector::from_vec(vec![mom.d_gain * j1, mom.d_std * j2]))
}

/// Trajectory Fisher information of the LQR policy in its own parameters.
///
/// Per-step scores form a martingale difference sequence, so cross-time
/// terms vanish and only `Σₜ E[x²ₜ]/σ²` and `2T/σ²` remain.
pub fn lqr_fisher(lqr: &Lqr, policy: &LqrGaussian, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    let (gain, std) = policy.gain_and_std(theta)?;
    let mom = lqr_moments(lqr, gain, std);
    let (j1, j2) = policy.jacobian(theta);
    let var = std * std;
    Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![
        j1 * j1 * mom.state_energy / var,
        j2 * j2 * 2.0 * lqr.horizon as f64 / var,
    ])))
}

/// One row of the frozen Monte-Carlo gradient reference.
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureRow {
    pub component: usize,
    pub value: f64,
    pub stderr: f64,
    pub seed: u64,
    pub samples: usize,
}

/// Monte-Carlo estimate `mean(R(ξ) u(ξ))` of the LQR gradient with its
/// standard error.
pub fn lqr_mc_reference(
    lqr: &Lqr,
    policy: &LqrGaussian,
    theta: &DVector<f64>,
    samples: usize,
    seed: u64,
) -> Result<Vec<FixtureRow>> {
    let mut rng: SimRng = crate::rng::seeded(seed);
    let n = policy.dim();
    let mut sum = DVector::zeros(n);
    let mut sum_sq = DVector::zeros(n);
    for _ in 0..samples {
        let traj = rollout(lqr, policy, theta, &mut rng)?;
        let g = trajectory_score(policy, theta, &traj)? * traj.discounted_return();
        sum_sq += g.component_mul(&g);
        sum += g;
    }
    let m = samples as f64;
    Ok((0..n)
        .map(|j| {
            let mean = sum[j] / m;
            let var = (sum_sq[j] / m - mean * mean) * m / (m - 1.0).max(1.0);
            FixtureRow {
                component: j,
                value: mean,
                stderr: (var / m).sqrt(),
                seed,
                samples,
            }
        })
        .collect())
}

pub fn write_fixture(path: &Path, rows: &[FixtureRow]) -> Result<()> {
    let mut text = String::from("component,value,stderr,seed,samples\n");
    for r in rows {
        let _ = writeln!(
            text,
            "{},{:.17e},{:.17e},{},{}",
            r.component, r.value, r.stderr, r.seed, r.samples
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_fixture(text: &str) -> Result<Vec<FixtureRow>> {
    let bad = |line: &str| Error::config("fixture", format!("malformed row `{line}`"));
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 5 {
                return Err(bad(line));
            }
            Ok(FixtureRow {
                component: cols[0].parse().map_err(|_| bad(line))?,
                value: cols[1].parse().map_err(|_| bad(line))?,
                stderr: cols[2].parse().map_err(|_| bad(line))?,
                seed: cols[3].parse().map_err(|_| bad(line))?,
                samples: cols[4].parse().map_err(|_| bad(line))?,
            })
        })
        .collect()
}

/// Finite MDP with a designated set of absorbing zero-reward states.
#[derive(Clone, Debug)]
pub struct TabularMdp {
    /// `transitions[s][a]` lists `(next_state, probability)`.
    pub transitions: Vec<Vec<Vec<(usize, f64)>>>,
    /// Mean reward for taking `a` in `s`.
    pub rewards: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    pub terminal: Vec<bool>,
    /// Observation the policy receives in each state.
    pub observations: Vec<Observation>,
}

impl TabularMdp {
    /// Tabular form of the random walk; state `i` is stored at index `i - 1`.
    pub fn random_walk(walk: &RandomWalk) -> Self {
        let n = walk.n_states;
        let mut transitions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for s in 1..=n {
            let row: Vec<Vec<(usize, f64)>> = (0..2)
                .map(|a| {
                    if s == n {
                        vec![(n - 1, 1.0)]
                    } else {
                        vec![(walk.successor(s, a) - 1, 1.0)]
                    }
                })
                .collect();
            transitions.push(row);
            rewards.push(vec![walk.mean_reward(s); 2]);
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        let mut terminal = vec![false; n];
        terminal[n - 1] = true;
        Self {
            transitions,
            rewards,
            initial,
            terminal,
            observations: (1..=n).map(Observation::Index).collect(),
        }
    }

    pub fn n_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.first().map_or(0, Vec::len)
    }
}

/// Exact quantities of a discrete policy on a tabular MDP.
#[derive(Clone, Debug)]
pub struct DiscreteSolution {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// `Q[(s, a)]`.
    pub q: DMatrix<f64>,
    pub v: DVector<f64>,
    /// Discounted state occupancy `Σₜ γᵗ P(xₜ = s)` (not normalized).
    pub occupancy: DVector<f64>,
    /// `μ(a | s)`.
    pub probabilities: DMatrix<f64>,
    /// `scores[s][a] = ∇ log μ(a | s)`.
    pub scores: Vec<Vec<DVector<f64>>>,
}

impl DiscreteSolution {
    /// `Σₛ ν(s) Σₐ ∇μ(a|s) (Q(s,a) - b(s))`.
    pub fn gradient_with_baseline(&self, baseline: &[f64]) -> DVector<f64> {
        let n = self.gradient.len();
        let mut g = DVector::zeros(n);
        for s in 0..self.q.nrows() {
            for a in 0..self.q.ncols() {
                let w =
                    self.occupancy[s] * self.probabilities[(s, a)] * (self.q[(s, a)] - baseline[s]);
                g.axpy(w, &self.scores[s][a], 1.0);
            }
        }
        g
    }

    /// State-action Fisher information `Σₛ ν(s) Σₐ μ(a|s) u uᵀ`, divided by
    /// `Σₛ ν(s)` when `normalized`.
    pub fn fisher(&self, normalized: bool) -> DMatrix<f64> {
        let n = self.gradient.len();
        let mut g = DMatrix::zeros(n, n);
        for s in 0..self.q.nrows() {
            for a in 0..self.q.ncols() {
                let u = &self.scores[s][a];
                g.ger(self.occupancy[s] * self.probabilities[(s, a)], u, u, 1.0);
            }
        }
        if normalized {
            g /= self.occupancy.sum();
        }
        g
    }
}

/// Solves the Bellman and occupancy systems for a discrete policy.
pub fn exact_discrete(
    mdp: &TabularMdp,
    policy: &dyn Policy,
    theta: &DVector<f64>,
    gamma: f64,
) -> Result<DiscreteSolution> {
    let ns = mdp.n_states();
    let na = mdp.n_actions();
    let mut probs = DMatrix::zeros(ns, na);
    let mut scores = Vec::with_capacity(ns);
    for s in 0..ns {
        let obs = &mdp.observations[s];
        let mut row = Vec::with_capacity(na);
        if mdp.terminal[s] {
            row.resize(na, DVector::zeros(policy.dim()));
        } else {
            let p = policy
                .action_probabilities(theta, obs)
                .ok_or_else(|| Error::InvalidParameter("policy is not discrete".into()))?;
            for a in 0..na {
                probs[(s, a)] = p[a];
                row.push(policy.score(theta, obs, &crate::envs::Action::Discrete(a))?);
            }
        }
        scores.push(row);
    }

    // (I - γ Pμ) over non-terminal states
    let mut system = DMatrix::<f64>::identity(ns, ns);
    let mut r_mu = DVector::zeros(ns);
    for s in 0..ns {
        if mdp.terminal[s] {
            continue;
        }
        for a in 0..na {
            let pa = probs[(s, a)];
            r_mu[s] += pa * mdp.rewards[s][a];
            for &(next, p) in &mdp.transitions[s][a] {
                if !mdp.terminal[next] {
                    system[(s, next)] -= gamma * pa * p;
                }
            }
        }
    }
    let lu = system.clone().lu();
    let v = lu.solve(&r_mu).ok_or_else(|| {
        Error::NumericalInconsistency("improper chain: singular Bellman system".into())
    })?;
    let rho = DVector::from_vec(mdp.initial.clone());
    let occupancy_t = system
        .transpose()
        .lu()
        .solve(&rho)
        .ok_or_else(|| Error::NumericalInconsistency("singular occupancy system".into()))?;
    let mut occupancy = occupancy_t;
    for s in 0..ns {
        if mdp.terminal[s] {
            occupancy[s] = 0.0;
        }
    }
    if v.iter().chain(occupancy.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NumericalInconsistency("improper chain".into()));
    }

    let mut q = DMatrix::zeros(ns, na);
    for s in 0..ns {
        if mdp.terminal[s] {
            continue;
        }
        for a in 0..na {
            let future: f64 = mdp.transitions[s][a]
                .iter()
                .filter(|(next, _)| !mdp.terminal[*next])
                .map(|&(next, p)| p * v[next])
                .sum();
            q[(s, a)] = mdp.rewards[s][a] + gamma * future;
        }
    }
    let value = rho.dot(&v);
    let mut solution = DiscreteSolution {
        value,
        gradient: DVector::zeros(policy.dim()),
        q,
        v,
        occupancy,
        probabilities: probs,
        scores,
    };
    solution.gradient = solution.gradient_with_baseline(&vec![0.0; ns]);
    Ok(solution)
}

/// Optimal value from the initial distribution by value iteration.
pub fn optimal_value(mdp: &TabularMdp, gamma: f64, objective: Objective) -> f64 {
    let ns = mdp.n_states();
    let mut v = vec![0.0; ns];
    for _ in 0..100_000 {
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            if mdp.terminal[s] {
                continue;
            }
            let vals = (0..mdp.n_actions()).map(|a| {
                mdp.rewards[s][a]
                    + gamma
                        * mdp.transitions[s][a]
                            .iter()
                            .map(|&(n, p)| if mdp.terminal[n] { 0.0 } else { p * v[n] })
                            .sum::<f64>()
            });
            let best = match objective {
                Objective::Maximize => vals.fold(f64::NEG_INFINITY, f64::max),
                Objective::Minimize => vals.fold(f64::INFINITY, f64::min),
            };
            delta = delta.max((best - v[s]).abs());
            v[s] = best;
        }
        if delta < 1e-13 {
            break;
        }
    }
    mdp.initial.iter().zip(&v).map(|(p, x)| p * x).sum()
}

/// Angle in degrees between two nonzero vectors, in `[0, 180]`.
pub fn angular_error(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "angular error",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let (ne, nt) = (estimate.norm(), truth.norm());
    if ne == 0.0 || nt == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    let cos = (estimate.dot(truth) / (ne * nt)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Squared Euclidean distance.
pub fn mse(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            context: "mse",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    Ok((estimate - truth).norm_squared())
}
