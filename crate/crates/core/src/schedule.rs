//! Learning-rate schedules with optional per-component base rates.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decay {
    Constant,
    /// `β₀ · h / (h + j)`
    Harmonic {
        horizon: f64,
    },
    /// `β₀ · c / (c + j)`; an infinite `c` is constant.
    Hyperbolic {
        c: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    /// One rate, or one per parameter component.
    pub base: Vec<f64>,
    pub decay: Decay,
}

impl Schedule {
    pub fn constant(rate: f64) -> Self {
        Self {
            base: vec![rate],
            decay: Decay::Constant,
        }
    }

    /// `β₀ · 20 / (20 + j)` per component.
    pub fn lqr(base: Vec<f64>) -> Self {
        Self {
            base,
            decay: Decay::Harmonic { horizon: 20.0 },
        }
    }

    pub fn hyperbolic(rate: f64, c: f64) -> Self {
        Self {
            base: vec![rate],
            decay: if c.is_infinite() {
                Decay::Constant
            } else {
                Decay::Hyperbolic { c }
            },
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.base.len() != 1 && self.base.len() != dim {
            return Err(Error::config(
                "beta",
                format!(
                    "expected 1 or {dim} learning rates, got {}",
                    self.base.len()
                ),
            ));
        }
        if self.base.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::config(
                "beta",
                "learning rates must be finite and nonnegative",
            ));
        }
        match self.decay {
            Decay::Harmonic { horizon: c } | Decay::Hyperbolic { c } if !(c > 0.0) => Err(
                Error::config("beta_c", format!("decay constant {c} must be positive")),
            ),
            _ => Ok(()),
        }
    }

    fn factor(&self, update: usize) -> f64 {
        let j = update as f64;
        match self.decay {
            Decay::Constant => 1.0,
            Decay::Harmonic { horizon: c } | Decay::Hyperbolic { c } => c / (c + j),
        }
    }

    /// Per-component rates for update `j` (counting from 0).
    pub fn rates(&self, update: usize, dim: usize) -> DVector<f64> {
        let f = self.factor(update);
        if self.base.len() == 1 {
            DVector::from_element(dim, self.base[0] * f)
        } else {
            DVector::from_iterator(dim, self.base.iter().map(|b| b * f))
        }
    }
}
