//! Bayesian quadrature: GP conditioning and posterior moments of linear
//! functionals of the GP.
//!
//! `C = (K + Σ)⁻¹` is never formed. Conditioning stores the jittered
//! Cholesky factor of `K + Σ` and applies solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{clamp_psd, min_eigenvalue, PsdFactor};

/// Tolerance below zero at which a posterior variance is clamped instead of
/// reported as an inconsistency.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;

/// Kernel matrix, noise covariance, observations and prior means at the
/// sample points.
#[derive(Clone, Debug)]
pub struct GpDataset {
    pub kernel: DMatrix<f64>,
    pub noise: DMatrix<f64>,
    pub y: DVector<f64>,
    pub prior_mean: DVector<f64>,
}

impl GpDataset {
    /// Dataset with zero prior mean.
    pub fn new(kernel: DMatrix<f64>, noise: DMatrix<f64>, y: DVector<f64>) -> Self {
        let m = y.len();
        Self {
            kernel,
            noise,
            y,
            prior_mean: DVector::zeros(m),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn check(&self) -> Result<()> {
        let m = self.y.len();
        for (context, found) in [
            ("kernel rows", self.kernel.nrows()),
            ("kernel cols", self.kernel.ncols()),
            ("noise rows", self.noise.nrows()),
            ("noise cols", self.noise.ncols()),
            ("prior mean", self.prior_mean.len()),
        ] {
            if found != m {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: m,
                    found,
                });
            }
        }
        Ok(())
    }
}

/// A dataset conditioned once and queried many times.
#[derive(Clone, Debug)]
pub struct Conditioned {
    factor: PsdFactor,
    /// `C (y - f̄)`.
    weights: DVector<f64>,
}

impl Conditioned {
    pub fn new(data: &GpDataset) -> Result<Self> {
        data.check()?;
        let factor = PsdFactor::new(&(&data.kernel + &data.noise), "K + noise")?;
        let weights = factor.solve(&(&data.y - &data.prior_mean));
        Ok(Self { factor, weights })
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn factor(&self) -> &PsdFactor {
        &self.factor
    }

    /// `C v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.factor.solve(v)
    }

    /// `aᵀ C b`.
    pub fn bilinear(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(&self.factor.solve(b))
    }

    /// Posterior mean and covariance of `f` at two query points.
    pub fn predict(
        &self,
        k_x: &DVector<f64>,
        prior_at_x: f64,
        k_x2: &DVector<f64>,
        k_x_x2: f64,
    ) -> (f64, f64) {
        let mean = prior_at_x + k_x.dot(&self.weights);
        let cov = k_x_x2 - self.bilinear(k_x, k_x2);
        (mean, cov)
    }
}

/// Posterior mean at `x` and covariance between `x` and `x'`.
pub fn gp_condition(
    data: &GpDataset,
    k_x: &DVector<f64>,
    prior_at_x: f64,
    k_x2: &DVector<f64>,
    k_x_x2: f64,
) -> Result<(f64, f64)> {
    Ok(Conditioned::new(data)?.predict(k_x, prior_at_x, k_x2, k_x_x2))
}

/// Prior of a scalar integral: mean `ρ₀`, kernel-weight integrals `b` and
/// prior variance `b₀`.
#[derive(Clone, Debug)]
pub struct IntegralPrior {
    pub rho0: f64,
    pub b: DVector<f64>,
    pub b0: f64,
}

/// Clamps a posterior variance that is negative only by round-off.
pub fn clamp_variance(var: f64) -> Result<f64> {
    if var < -VARIANCE_TOLERANCE {
        return Err(Error::NumericalInconsistency(format!(
            "posterior variance {var:e} is negative"
        )));
    }
    Ok(var.max(0.0))
}

/// `(ρ₀ + bᵀC(y - f̄), b₀ - bᵀCb)`.
pub fn integral_posterior(prior: &IntegralPrior, data: &GpDataset) -> Result<(f64, f64)> {
    if prior.b.len() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "integral weights",
            expected: data.len(),
            found: prior.b.len(),
        });
    }
    let cond = Conditioned::new(data)?;
    let mean = prior.rho0 + prior.b.dot(cond.weights());
    let var = clamp_variance(prior.b0 - cond.bilinear(&prior.b, &prior.b))?;
    Ok((mean, var))
}

/// Matrix-valued prior: `B` has one row per integral component and one
/// column per sample.
#[derive(Clone, Debug)]
pub struct MatrixIntegralPrior {
    pub rho0: DVector<f64>,
    pub b: DMatrix<f64>,
    pub b0: DMatrix<f64>,
}

/// `(ρ₀ + B C (y - f̄), B₀ - B C Bᵀ)` with the covariance clamped PSD.
pub fn matrix_integral_posterior(
    prior: &MatrixIntegralPrior,
    data: &GpDataset,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if prior.b.ncols() != data.len() {
        return Err(Error::DimensionMismatch {
            context: "integral weight columns",
            expected: data.len(),
            found: prior.b.ncols(),
        });
    }
    let cond = Conditioned::new(data)?;
    let mean = &prior.rho0 + &prior.b * cond.weights();
    let cb = cond.factor().solve_matrix(&prior.b.transpose());
    let cov = &prior.b0 - &prior.b * cb;
    Ok((mean, checked_psd(cov)?))
}

/// Clamps a covariance matrix to PSD, failing if it is indefinite beyond
/// round-off relative to its scale.
pub fn checked_psd(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cov.nrows() == 0 {
        return Ok(cov);
    }
    let scale = cov.diagonal().iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    let min = min_eigenvalue(&cov);
    if min < -1e-6 * scale {
        return Err(Error::NumericalInconsistency(format!(
            "posterior covariance has eigenvalue {min:e}"
        )));
    }
    Ok(clamp_psd(&cov))
}

/// Component-wise moments when all `n` components share one kernel and
/// noise covariance: row `j` of `ys` holds the observations of component `j`.
/// Returns the means and the shared posterior variance (cross-component
/// covariance is zero).
pub fn decoupled_vector_posterior(
    kernel: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    ys: &DMatrix<f64>,
    b: &DVector<f64>,
    b0: f64,
) -> Result<(DVector<f64>, f64)> {
    let m = b.len();
    if ys.ncols() != m {
        return Err(Error::DimensionMismatch {
            context: "component observations",
            expected: m,
            found: ys.ncols(),
        });
    }
    let data = GpDataset::new(kernel.clone(), noise.clone(), DVector::zeros(m));
    data.check()?;
    let factor = PsdFactor::new(&(kernel + noise), "K + noise")?;
    let cb = factor.solve(b);
    let mean = ys * &cb;
    let var = clamp_variance(b0 - b.dot(&cb))?;
    Ok((mean, var))
}
