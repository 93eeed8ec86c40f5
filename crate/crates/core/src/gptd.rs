//! Gaussian-process temporal-difference critic.
//!
//! Rewards are modelled as `r = H Q + N` with `N ~ N(0, σ² H Hᵀ)`, where
//! `H` is the banded `(1, -γ)` matrix linking consecutive state-action
//! pairs. Each episode contributes its own block of `H`; an episode that
//! ends in an absorbing state uses the square form, a truncated one the
//! continuing form with its last reward dropped.

use nalgebra::{DMatrix, DVector};

use crate::bq::clamp_variance;
use crate::error::{Error, Result};
use crate::linalg::{PsdFactor, TridiagonalFactor, BASE_JITTER};
use crate::sparse::{projection_matrix, SparseDictionary};

/// Largest number of state-action pairs accepted by the dense fit.
pub const DENSE_FIT_LIMIT: usize = 3000;

/// Positive semi-definite kernel over state-action points.
pub trait Kernel: Sync {
    type Point: Clone + Send + Sync;

    fn eval(&self, a: &Self::Point, b: &Self::Point) -> f64;
}

/// `exp(-‖x - x'‖² / (2 w²))` over real vectors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianKernel {
    pub width: f64,
}

impl GaussianKernel {
    pub fn new(width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "kernel width must be positive, got {width}"
            )));
        }
        Ok(Self { width })
    }

    pub fn eval_slices(&self, a: &[f64], b: &[f64]) -> f64 {
        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        (-d2 / (2.0 * self.width * self.width)).exp()
    }
}

impl Kernel for GaussianKernel {
    type Point = Vec<f64>;

    fn eval(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        self.eval_slices(a, b)
    }
}

/// One episode of state-action points with the reward received after each.
#[derive(Clone, Debug)]
pub struct Episode<P> {
    pub points: Vec<P>,
    pub rewards: Vec<f64>,
    /// The last transition entered an absorbing state.
    pub terminal: bool,
}

impl<P> Episode<P> {
    fn check(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::EmptyInput("episode"));
        }
        if self.points.len() != self.rewards.len() {
            return Err(Error::DimensionMismatch {
                context: "episode rewards",
                expected: self.points.len(),
                found: self.rewards.len(),
            });
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::NumericalInconsistency("non-finite reward".into()));
        }
        Ok(())
    }

    /// Number of reward equations the episode contributes.
    fn equations(&self) -> usize {
        if self.terminal {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }
}

/// `t × (t+1)` banded matrix with rows `(…, 1, -γ, …)`; the episodic form
/// drops the last column and is square.
pub fn build_h(t: usize, gamma: f64, episodic: bool) -> DMatrix<f64> {
    let cols = if episodic { t } else { t + 1 };
    let mut h = DMatrix::zeros(t, cols);
    for i in 0..t {
        h[(i, i)] = 1.0;
        if i + 1 < cols {
            h[(i, i + 1)] = -gamma;
        }
    }
    h
}

/// `σ² H Hᵀ`.
pub fn build_noise_cov(sigma2: f64, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_sigma2(sigma2)?;
    Ok(h * h.transpose() * sigma2)
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise variance {sigma2} must be nonnegative"
        )));
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!("discount {gamma}")));
    }
    Ok(())
}

/// Posterior over `Q` represented on a basis of state-action points:
/// `Q̂(z) = k(z)ᵀα`, `Ŝ(z) = k(z, z) - k(z)ᵀ C k(z)`.
#[derive(Clone, Debug)]
pub struct GptdPosterior<P> {
    pub basis: Vec<P>,
    pub alpha: DVector<f64>,
    pub c: DMatrix<f64>,
    pub gamma: f64,
    pub sigma2: f64,
}

impl<P: Clone> GptdPosterior<P> {
    pub fn prior(gamma: f64, sigma2: f64) -> Self {
        Self {
            basis: Vec::new(),
            alpha: DVector::zeros(0),
            c: DMatrix::zeros(0, 0),
            gamma,
            sigma2,
        }
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
}

/// Posterior mean and variance of `Q(z)`.
pub fn q_posterior<K: Kernel>(
    posterior: &GptdPosterior<K::Point>,
    kernel: &K,
    z: &K::Point,
) -> Result<(f64, f64)> {
    let kv = DVector::from_iterator(
        posterior.basis.len(),
        posterior.basis.iter().map(|b| kernel.eval(b, z)),
    );
    let mean = kv.dot(&posterior.alpha);
    let var = kernel.eval(z, z) - kv.dot(&(&posterior.c * &kv));
    Ok((mean, clamp_variance(var)?))
}

/// Exact batch posterior over every visited state-action pair.
pub fn gptd_fit<K: Kernel>(
    episodes: &[Episode<K::Point>],
    kernel: &K,
    sigma2: f64,
    gamma: f64,
) -> Result<GptdPosterior<K::Point>> {
    check_sigma2(sigma2)?;
    check_gamma(gamma)?;
    for ep in episodes {
        ep.check()?;
    }
    let points: Vec<K::Point> = episodes
        .iter()
        .flat_map(|e| e.points.iter().cloned())
        .collect();
    let n = points.len();
    if n > DENSE_FIT_LIMIT {
        return Err(Error::TooLarge {
            context: "dense GPTD fit",
            dim: n,
            limit: DENSE_FIT_LIMIT,
        });
    }
    let rows: usize = episodes.iter().map(Episode::equations).sum();
    if rows == 0 {
        let mut post = GptdPosterior::prior(gamma, sigma2);
        post.alpha = DVector::zeros(n);
        post.c = DMatrix::zeros(n, n);
        post.basis = points;
        return Ok(post);
    }
    let mut h = DMatrix::zeros(rows, n);
    let mut noise = DMatrix::zeros(rows, rows);
    let mut r = DVector::zeros(rows);
    let (mut row0, mut col0) = (0, 0);
    for ep in episodes {
        let t = ep.points.len();
        let eqs = ep.equations();
        if eqs > 0 {
            let block = build_h(eqs, gamma, ep.terminal);
            h.view_mut((row0, col0), (eqs, block.ncols()))
                .copy_from(&block);
            noise
                .view_mut((row0, row0), (eqs, eqs))
                .copy_from(&build_noise_cov(sigma2, &block)?);
            for i in 0..eqs {
                r[row0 + i] = ep.rewards[i];
            }
        }
        row0 += eqs;
        col0 += t;
    }
    let k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&points[i], &points[j]));
    let system = &h * &k * h.transpose() + noise;
    let factor = PsdFactor::new(&((&system + system.transpose()) * 0.5), "H K Hᵀ + Σ")?;
    let alpha = h.transpose() * factor.solve(&r);
    let half = factor.half_solve_matrix(&h);
    let c = half.transpose() * half;
    Ok(GptdPosterior {
        basis: points,
        alpha,
        c,
        gamma,
        sigma2,
    })
}

/// Sparse posterior over an online dictionary.
///
/// With `H̃ = H A`, `P = H̃ᵀΣ⁻¹H̃`, `q = H̃ᵀΣ⁻¹r`, `K̃ = L Lᵀ` and
/// `S = I + LᵀPL`, the coefficients are `α̃ = L⁻ᵀS⁻¹Lᵀq` and
/// `C̃ = L⁻ᵀ(I - S⁻¹)L⁻¹`. They are evaluated in the equivalent forms
/// `α̃ = q - PL S⁻¹Lᵀq` and `C̃ = P - PL S⁻¹(PL)ᵀ`, which never invert `L`:
/// the dictionary Gram matrix can be badly conditioned even when every
/// member passed the threshold. The diagonal jitter of the dense fit is
/// folded into `Σ` so that both forms describe the same model.
pub fn gptd_fit_sparse<K: Kernel>(
    episodes: &[Episode<K::Point>],
    kernel: &K,
    sigma2: f64,
    gamma: f64,
    tau: f64,
) -> Result<GptdPosterior<K::Point>> {
    check_sigma2(sigma2)?;
    check_gamma(gamma)?;
    for ep in episodes {
        ep.check()?;
    }
    let mut dict = SparseDictionary::new(tau)?;
    let mut rows = Vec::new();
    for ep in episodes {
        for z in &ep.points {
            rows.push(dict.admit_with(z, |a, b| kernel.eval(a, b)).row);
        }
    }
    let m = dict.len();
    let mut p = DMatrix::zeros(m, m);
    let mut q = DVector::zeros(m);
    let mut offset = 0;
    for ep in episodes {
        let t = ep.points.len();
        let eqs = ep.equations();
        if eqs > 0 {
            let a = projection_matrix(&rows[offset..offset + t], m);
            let mut ht = DMatrix::zeros(eqs, m);
            for i in 0..eqs {
                let mut row = ht.row_mut(i);
                row += a.row(i);
                if i + 1 < t {
                    row -= a.row(i + 1) * gamma;
                }
            }
            let factor = block_noise(sigma2, gamma, eqs, ep.terminal)?;
            let mut x = ht.clone();
            factor.solve_matrix_in_place(&mut x);
            p += ht.transpose() * &x;
            q += x.transpose() * DVector::from_row_slice(&ep.rewards[..eqs]);
        }
        offset += t;
    }
    let l = dict.factor();
    let pl = &p * &l;
    let s = DMatrix::identity(m, m) + l.transpose() * &pl;
    let s_factor = PsdFactor::identity_dominated(&s, "GPTD inner system")?;
    let alpha = &q - &pl * s_factor.solve(&(l.transpose() * &q));
    let c = &p - &pl * s_factor.solve_matrix(&pl.transpose());
    Ok(GptdPosterior {
        basis: dict.members().to_vec(),
        alpha,
        c: (&c + c.transpose()) * 0.5,
        gamma,
        sigma2,
    })
}

/// Tridiagonal `σ² H Hᵀ + jitter · I` for one episode block.
fn block_noise(sigma2: f64, gamma: f64, eqs: usize, episodic: bool) -> Result<TridiagonalFactor> {
    let mut diag = vec![sigma2 * (1.0 + gamma * gamma) + BASE_JITTER; eqs];
    if episodic {
        diag[eqs - 1] = sigma2 + BASE_JITTER;
    }
    let off = vec![-sigma2 * gamma; eqs - 1];
    TridiagonalFactor::new(&diag, &off)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_shapes() {
        let cont = build_h(2, 0.5, false);
        assert_eq!(
            cont,
            DMatrix::from_row_slice(2, 3, &[1.0, -0.5, 0.0, 0.0, 1.0, -0.5])
        );
        let epi = build_h(2, 0.5, true);
        assert_eq!(epi, DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.0, 1.0]));
        assert_eq!(build_h(3, 0.0, true), DMatrix::identity(3, 3));
    }

    #[test]
    fn noise_cov_entries() {
        let cont = build_noise_cov(1.0, &build_h(2, 0.5, false)).unwrap();
        assert_eq!(
            cont,
            DMatrix::from_row_slice(2, 2, &[1.25, -0.5, -0.5, 1.25])
        );
        let epi = build_noise_cov(1.0, &build_h(2, 0.5, true)).unwrap();
        assert_eq!(epi, DMatrix::from_row_slice(2, 2, &[1.25, -0.5, -0.5, 1.0]));
        assert_eq!(
            build_noise_cov(0.0, &build_h(2, 0.5, true)).unwrap(),
            DMatrix::zeros(2, 2)
        );
        assert!(build_noise_cov(-1.0, &build_h(2, 0.5, true)).is_err());
    }

    fn chain_episode(xs: &[f64], rewards: &[f64], terminal: bool) -> Episode<Vec<f64>> {
        Episode {
            points: xs.iter().map(|&x| vec![x]).collect(),
            rewards: rewards.to_vec(),
            terminal,
        }
    }

    #[test]
    fn noiseless_fit_interpolates_returns() {
        let kernel = GaussianKernel::new(0.3).unwrap();
        let ep = chain_episode(&[0.0, 1.0], &[2.0, 3.0], true);
        let post = gptd_fit(&[ep], &kernel, 1e-8, 0.9).unwrap();
        let (q0, _) = q_posterior(&post, &kernel, &vec![0.0]).unwrap();
        let (q1, _) = q_posterior(&post, &kernel, &vec![1.0]).unwrap();
        assert!((q0 - (2.0 + 0.9 * 3.0)).abs() < 1e-3, "{q0}");
        assert!((q1 - 3.0).abs() < 1e-3, "{q1}");
    }

    #[test]
    fn zero_rewards_give_zero_mean() {
        let kernel = GaussianKernel::new(1.0).unwrap();
        let ep = chain_episode(&[0.0, 0.5, 1.0], &[0.0; 3], true);
        let post = gptd_fit(std::slice::from_ref(&ep), &kernel, 1.0, 0.9).unwrap();
        assert!(post.alpha.amax() == 0.0);
        let sparse = gptd_fit_sparse(&[ep], &kernel, 1.0, 0.9, 1e-3).unwrap();
        assert!(sparse.alpha.amax() == 0.0);
    }

    #[test]
    fn prior_without_data() {
        let kernel = GaussianKernel::new(1.0).unwrap();
        let post = GptdPosterior::<Vec<f64>>::prior(0.9, 1.0);
        assert_eq!(q_posterior(&post, &kernel, &vec![0.3]).unwrap(), (0.0, 1.0));
    }

    #[test]
    fn repeated_point_forms_one_member() {
        let kernel = GaussianKernel::new(1.0).unwrap();
        let ep = chain_episode(&[0.2; 8], &[1.0; 8], true);
        let post = gptd_fit_sparse(&[ep], &kernel, 1.0, 0.9, 1e-4).unwrap();
        assert_eq!(post.len(), 1);
    }

    #[test]
    fn sparse_matches_dense() {
        let kernel = GaussianKernel::new(0.7).unwrap();
        let eps = vec![
            chain_episode(&[0.0, 0.4, 1.1, 1.9], &[1.0, -0.5, 0.3, 2.0], true),
            chain_episode(&[2.5, 0.8, -0.6], &[0.7, 0.1, 1.4], false),
        ];
        let dense = gptd_fit(&eps, &kernel, 0.5, 0.8).unwrap();
        let sparse = gptd_fit_sparse(&eps, &kernel, 0.5, 0.8, 1e-12).unwrap();
        for i in 0..40 {
            let z = vec![-1.0 + 0.1 * i as f64];
            let (md, vd) = q_posterior(&dense, &kernel, &z).unwrap();
            let (ms, vs) = q_posterior(&sparse, &kernel, &z).unwrap();
            assert!((md - ms).abs() < 1e-6, "{md} vs {ms}");
            assert!((vd - vs).abs() < 1e-6, "{vd} vs {vs}");
        }
    }
}
