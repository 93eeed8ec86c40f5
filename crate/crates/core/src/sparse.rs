//! Online kernel sparsification.
//!
//! A candidate is admitted to the dictionary when its squared feature-space
//! distance to the span of the current members,
//! `δ = k(z, z) - k̃ᵀ K̃⁻¹ k̃`, exceeds `τ`. The Cholesky factor of the
//! dictionary kernel matrix is grown in place; since every admitted member
//! has `δ > τ > 0`, no jitter is needed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Result of presenting one candidate to the dictionary.
#[derive(Clone, Debug, PartialEq)]
pub struct Admission {
    pub admitted: bool,
    /// Squared distance to the span of the dictionary before the candidate.
    pub residual: f64,
    /// Row of the projection matrix: an indicator of the new member when
    /// admitted, `K̃⁻¹k̃` otherwise. Its length is the dictionary size after
    /// the call.
    pub row: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SparseDictionary<P> {
    members: Vec<P>,
    /// Packed rows of the lower Cholesky factor: row `i` has `i + 1` entries.
    chol: Vec<Vec<f64>>,
    kernel: Vec<Vec<f64>>,
    tau: f64,
}

impl<P: Clone> SparseDictionary<P> {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sparsification threshold must be positive, got {tau}"
            )));
        }
        Ok(Self {
            members: Vec::new(),
            chol: Vec::new(),
            kernel: Vec::new(),
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn members(&self) -> &[P] {
        &self.members
    }

    /// Kernel values between `point` and every member.
    pub fn kernel_vector(&self, point: &P, kernel: impl Fn(&P, &P) -> f64) -> Vec<f64> {
        self.members.iter().map(|m| kernel(m, point)).collect()
    }

    /// Presents a candidate given its self-similarity and its kernel vector
    /// against the current members.
    pub fn admit(&mut self, point: &P, k_self: f64, k_vec: &[f64]) -> Admission {
        let m = self.members.len();
        debug_assert_eq!(k_vec.len(), m);
        let l = self.forward(k_vec);
        let residual = k_self - l.iter().map(|v| v * v).sum::<f64>();
        if residual > self.tau {
            let mut row = l;
            row.push(residual.sqrt());
            self.chol.push(row);
            let mut krow = k_vec.to_vec();
            krow.push(k_self);
            self.kernel.push(krow);
            self.members.push(point.clone());
            let mut indicator = vec![0.0; m + 1];
            indicator[m] = 1.0;
            Admission {
                admitted: true,
                residual,
                row: indicator,
            }
        } else {
            Admission {
                admitted: false,
                residual,
                row: self.backward(l),
            }
        }
    }

    /// Computes the kernel vector and presents the candidate.
    pub fn admit_with(&mut self, point: &P, kernel: impl Fn(&P, &P) -> f64) -> Admission {
        let k_vec = self.kernel_vector(point, &kernel);
        let k_self = kernel(point, point);
        self.admit(point, k_self, &k_vec)
    }

    /// `L⁻¹ v`.
    fn forward(&self, v: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(v.len());
        for (i, row) in self.chol.iter().enumerate() {
            let mut s = v[i];
            for (j, o) in out.iter().enumerate() {
                s -= row[j] * o;
            }
            out.push(s / row[i]);
        }
        out
    }

    /// `L⁻ᵀ v`, consuming `v`.
    fn backward(&self, mut v: Vec<f64>) -> Vec<f64> {
        let m = v.len();
        for i in (0..m).rev() {
            let mut s = v[i];
            for j in i + 1..m {
                s -= self.chol[j][i] * v[j];
            }
            v[i] = s / self.chol[i][i];
        }
        v
    }

    pub fn half_solve(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.forward(v.as_slice()))
    }

    pub fn half_solve_transpose(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.backward(v.as_slice().to_vec()))
    }

    /// `L⁻¹ M` column by column.
    pub fn half_solve_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            let solved = self.forward(col.as_slice());
            col.copy_from_slice(&solved);
        }
        out
    }

    /// `K̃⁻¹ v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(self.backward(self.forward(v.as_slice())))
    }

    /// Lower Cholesky factor of the dictionary kernel matrix.
    pub fn factor(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| if j <= i { self.chol[i][j] } else { 0.0 })
    }

    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |i, j| {
            if j <= i {
                self.kernel[i][j]
            } else {
                self.kernel[j][i]
            }
        })
    }
}

/// Stacks projection rows of varying length into an `rows × m` matrix,
/// padding with zeros.
pub fn projection_matrix(rows: &[Vec<f64>], m: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rows.len(), m);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    a
}
