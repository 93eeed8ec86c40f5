use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};

use super::{check_dim, Policy};
use crate::envs::{Action, Observation};
use crate::error::{Error, Result};
use crate::rng::SimRng;

const HALF_LOG_TAU: f64 = 0.918_938_533_204_672_7;

/// Tile-coding layout over a box of state dimensions.
///
/// Tiling `k` is shifted by `k / tilings` of a tile width along every
/// dimension. Circular dimensions wrap; the others clamp to the edge tiles.
#[derive(Clone, Debug)]
pub struct CmacLayout {
    pub tilings: usize,
    pub tiles: Vec<usize>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub circular: Vec<bool>,
}

impl CmacLayout {
    /// Ship layout: `(x, y, heading, turn rate)` with the given tiles per
    /// dimension.
    pub fn ship(tilings: usize, tiles: [usize; 4]) -> Self {
        Self {
            tilings,
            tiles: tiles.to_vec(),
            lower: vec![0.0, 0.0, -180.0, -15.0],
            upper: vec![150.0, 150.0, 180.0, 15.0],
            circular: vec![false, false, true, false],
        }
    }

    pub fn tiles_per_tiling(&self) -> usize {
        self.tiles.iter().product()
    }

    pub fn dim(&self) -> usize {
        self.tilings * self.tiles_per_tiling()
    }

    /// Index of the active tile in every tiling.
    pub fn active(&self, point: &[f64]) -> Result<Vec<usize>> {
        if point.len() != self.tiles.len() {
            return Err(Error::DimensionMismatch {
                context: "cmac observation",
                expected: self.tiles.len(),
                found: point.len(),
            });
        }
        let per = self.tiles_per_tiling();
        let mut out = Vec::with_capacity(self.tilings);
        for k in 0..self.tilings {
            let shift = k as f64 / self.tilings as f64;
            let mut index = 0;
            for d in 0..self.tiles.len() {
                let n = self.tiles[d];
                let width = (self.upper[d] - self.lower[d]) / n as f64;
                let pos = ((point[d] - self.lower[d]) / width + shift).floor() as i64;
                let cell = if self.circular[d] {
                    pos.rem_euclid(n as i64) as usize
                } else {
                    pos.clamp(0, n as i64 - 1) as usize
                };
                index = index * n + cell;
            }
            out.push(k * per + index);
        }
        Ok(out)
    }
}

/// Gaussian over a latent action whose mean is the average weight of the
/// active tiles; the applied action is `limit · (2/π) · atan(π/2 · latent)`.
///
/// Scores and densities refer to the latent action.
#[derive(Clone, Debug)]
pub struct CmacGaussian {
    pub layout: CmacLayout,
    pub limit: f64,
    pub latent_std: f64,
}

impl Default for CmacGaussian {
    fn default() -> Self {
        Self {
            layout: CmacLayout::ship(9, [5, 5, 36, 5]),
            limit: 15.0,
            latent_std: 1.0,
        }
    }
}

impl CmacGaussian {
    pub fn squash(&self, latent: f64) -> f64 {
        self.limit * std::f64::consts::FRAC_2_PI * (std::f64::consts::FRAC_PI_2 * latent).atan()
    }

    fn mean(&self, theta: &DVector<f64>, active: &[usize]) -> f64 {
        active.iter().map(|&i| theta[i]).sum::<f64>() / active.len() as f64
    }

    fn latent(action: &Action) -> Result<f64> {
        match action {
            Action::Squashed { latent, .. } if latent.is_finite() => Ok(*latent),
            _ => Err(Error::ZeroDensity),
        }
    }
}

impl Policy for CmacGaussian {
    fn name(&self) -> &'static str {
        "ship-cmac-gauss"
    }

    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn initial_params(&self, _rng: &mut SimRng) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    fn sample(&self, theta: &DVector<f64>, obs: &Observation, rng: &mut SimRng) -> Result<Action> {
        check_dim(self.dim(), theta)?;
        let active = self.layout.active(obs.point()?)?;
        let z: f64 = StandardNormal.sample(rng);
        let latent = self.mean(theta, &active) + self.latent_std * z;
        Ok(Action::Squashed {
            latent,
            value: self.squash(latent),
        })
    }

    fn log_density(&self, theta: &DVector<f64>, obs: &Observation, action: &Action) -> Result<f64> {
        check_dim(self.dim(), theta)?;
        let active = self.layout.active(obs.point()?)?;
        let z = (Self::latent(action)? - self.mean(theta, &active)) / self.latent_std;
        Ok(-0.5 * z * z - self.latent_std.ln() - HALF_LOG_TAU)
    }

    fn score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
    ) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        self.accumulate_score(theta, obs, action, 1.0, &mut out)?;
        Ok(out)
    }

    fn accumulate_score(
        &self,
        theta: &DVector<f64>,
        obs: &Observation,
        action: &Action,
        scale: f64,
        out: &mut DVector<f64>,
    ) -> Result<()> {
        check_dim(self.dim(), theta)?;
        let active = self.layout.active(obs.point()?)?;
        let resid = (Self::latent(action)? - self.mean(theta, &active))
            / (self.latent_std * self.latent_std);
        let share = scale * resid / active.len() as f64;
        for i in active {
            out[i] += share;
        }
        Ok(())
    }
}
