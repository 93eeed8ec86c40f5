//! Dense linear-algebra helpers shared by the estimators.
//!
//! Every inversion of a kernel or Fisher matrix goes through [`PsdFactor`],
//! which applies one jitter policy: `1e-6` is added to the diagonal, the
//! jitter grows tenfold on each failed Cholesky attempt, and factorization
//! gives up once it would exceed `1e-2`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter added before every factorization.
pub const BASE_JITTER: f64 = 1e-6;
/// Largest jitter tried before giving up.
pub const MAX_JITTER: f64 = 1e-2;

/// Cholesky factorization of a symmetric PSD matrix plus the jitter it needed.
#[derive(Clone, Debug)]
pub struct PsdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl PsdFactor {
    pub fn new(matrix: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        Self::with_base_jitter(matrix, BASE_JITTER, context)
    }

    /// Factorizes `matrix + jitter * I`, starting from `base` (which may be 0).
    pub fn with_base_jitter(
        matrix: &DMatrix<f64>,
        base: f64,
        context: &'static str,
    ) -> Result<Self> {
        Self::with_jitter_range(matrix, base, MAX_JITTER, context)
    }

    /// Jitter policy measured in units of `scale`: starts at
    /// `BASE_JITTER * scale` and stops past `MAX_JITTER * scale`.
    pub fn scaled(matrix: &DMatrix<f64>, scale: f64, context: &'static str) -> Result<Self> {
        let scale = if scale > 0.0 && scale.is_finite() {
            scale
        } else {
            1.0
        };
        Self::with_jitter_range(matrix, BASE_JITTER * scale, MAX_JITTER * scale, context)
    }

    /// For matrices of the form `I + PSD`, where a failed factorization can
    /// only be round-off: tries no jitter, then escalates in units of the
    /// mean diagonal.
    pub fn identity_dominated(matrix: &DMatrix<f64>, context: &'static str) -> Result<Self> {
        let sym = symmetrize(matrix);
        if let Some(chol) = sym.clone().cholesky() {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let scale = if sym.nrows() == 0 {
            1.0
        } else {
            sym.diagonal().mean()
        };
        Self::scaled(&sym, scale, context)
    }

    fn with_jitter_range(
        matrix: &DMatrix<f64>,
        base: f64,
        max: f64,
        context: &'static str,
    ) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                context,
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalInconsistency(format!(
                "non-finite entry in {context}"
            )));
        }
        let mut jitter = base;
        loop {
            let mut shifted = matrix.clone();
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += jitter;
            }
            if let Some(chol) = shifted.cholesky() {
                return Ok(Self { chol, jitter });
            }
            jitter = if jitter == 0.0 {
                BASE_JITTER.min(max)
            } else {
                jitter * 10.0
            };
            if jitter > max * (1.0 + 1e-9) {
                return Err(Error::NotPositiveDefinite {
                    context,
                    jitter: jitter / 10.0,
                });
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor `L` with `L Lᵀ = matrix + jitter I`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    /// `L⁻¹ v`.
    pub fn half_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(rhs)
            .expect("cholesky factor has a nonzero diagonal")
    }

    /// `L⁻¹ M`.
    pub fn half_solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol
            .l_dirty()
            .solve_lower_triangular(rhs)
            .expect("cholesky factor has a nonzero diagonal")
    }

    /// `L⁻ᵀ v`.
    pub fn half_solve_transpose(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .tr_solve_lower_triangular(rhs)
            .expect("cholesky factor has a nonzero diagonal")
    }

    /// `vᵀ (matrix + jitter I)⁻¹ v`.
    pub fn inv_quad(&self, v: &DVector<f64>) -> f64 {
        self.half_solve(v).norm_squared()
    }

    /// Determinant of the jittered matrix.
    pub fn determinant(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).product()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Symmetrizes `m` and sets negative eigenvalues to zero.
pub fn clamp_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = symmetrize(m);
    if sym.nrows() == 0 {
        return sym;
    }
    let eig = SymmetricEigen::new(sym.clone());
    if eig.eigenvalues.iter().all(|&v| v >= 0.0) {
        return sym;
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&clamped) * q.transpose()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// LDLᵀ factorization of a symmetric positive definite tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagonalFactor {
    /// `diag` has length t, `off` has length t-1 (both sub- and super-diagonal).
    pub fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let t = diag.len();
        if t > 0 && off.len() + 1 != t {
            return Err(Error::DimensionMismatch {
                context: "tridiagonal factor",
                expected: t.saturating_sub(1),
                found: off.len(),
            });
        }
        let mut d = vec![0.0; t];
        let mut l = vec![0.0; t.saturating_sub(1)];
        for i in 0..t {
            d[i] = diag[i];
            if i > 0 {
                d[i] -= l[i - 1] * l[i - 1] * d[i - 1];
            }
            if !(d[i] > 0.0) {
                return Err(Error::NotPositiveDefinite {
                    context: "tridiagonal noise covariance",
                    jitter: 0.0,
                });
            }
            if i + 1 < t {
                l[i] = off[i] / d[i];
            }
        }
        Ok(Self { d, l })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let t = self.d.len();
        for i in 1..t {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..t {
            x[i] /= self.d[i];
        }
        for i in (0..t.saturating_sub(1)).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }

    /// Solves column by column.
    pub fn solve_matrix_in_place(&self, m: &mut DMatrix<f64>) {
        for mut col in m.column_iter_mut() {
            self.solve_in_place(col.as_mut_slice());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jitter_escalates_for_singular_matrix() {
        // rank one: factorizes with the base jitter
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = PsdFactor::new(&m, "test").unwrap();
        assert_eq!(f.jitter(), BASE_JITTER);

        // indefinite by 1e-4: needs 1e-3 or more
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-4]);
        let f = PsdFactor::new(&m, "test").unwrap();
        assert!(f.jitter() >= 1e-4 && f.jitter() <= 1e-3 * 1.0001);
    }

    #[test]
    fn jitter_aborts_above_limit() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            PsdFactor::new(&m, "test"),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn half_solves_are_consistent() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = PsdFactor::with_base_jitter(&m, 0.0, "test").unwrap();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let direct = v.dot(&f.solve(&v));
        assert!((f.inv_quad(&v) - direct).abs() < 1e-12);
        let x = f.half_solve_transpose(&f.half_solve(&v));
        assert!((x - f.solve(&v)).norm() < 1e-12);
        assert!((f.determinant() - m.determinant()).abs() < 1e-10);
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let diag = [4.0, 4.0, 4.0, 2.0];
        let off = [-1.5, -1.5, -1.5];
        let f = TridiagonalFactor::new(&diag, &off).unwrap();
        let mut dense = DMatrix::zeros(4, 4);
        for i in 0..4 {
            dense[(i, i)] = diag[i];
            if i < 3 {
                dense[(i, i + 1)] = off[i];
                dense[(i + 1, i)] = off[i];
            }
        }
        let b = DVector::from_vec(vec![1.0, 2.0, -1.0, 0.5]);
        let mut x = b.clone();
        f.solve_in_place(x.as_mut_slice());
        let expected = dense.lu().solve(&b).unwrap();
        assert!((x - expected).norm() < 1e-12);
    }

    #[test]
    fn clamp_removes_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let c = clamp_psd(&m);
        assert!(min_eigenvalue(&c) >= 0.0);
        assert!((c[(0, 0)] - 1.0).abs() < 1e-15);
    }
}
