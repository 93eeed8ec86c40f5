use nalgebra::DVector;

use super::{check_dim, sample_categorical, softmax, Policy};
use crate::envs::{Action, Observation};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Softmax over actions with Gaussian radial features on the unit square.
///
/// Action `i` has logit `φ(x)ᵀθᵢ` where `θᵢ` is the `i`-th block of
/// `n_features` parameters.
#[derive(Clone, Debug)]
pub struct SoftmaxRbf {
    pub centers: Vec<[f64; 2]>,
    pub width: f64,
    pub n_actions: usize,
}

impl Default for SoftmaxRbf {
    fn default() -> Self {
        let grid = [0.0, 0.25, 0.5, 1.0];
        let centers = grid
            .iter()
            .flat_map(|&a| grid.iter().map(move |&b| [a, b]))
            .collect();
        Self {
            centers,
            width: 1.3 * 0.25,
            n_actions: 3,
        }
    }
}

impl SoftmaxRbf {
    pub fn features(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != 2 {
            return Err(Error::DimensionMismatch {
                context: "rbf observation",
                expected: 2,
                found: point.len(),
            });
        }
        let denom = 2.0 * self.width * self.width;
        Ok(self
            .centers
            .iter()
            .map(|c| {
                let d0 = point[0] - c[0];
                let d1 = point[1] - c[1];
                (-(d0 * d0 + d1 * d1) / denom).exp()
            })
            .collect())
    }

    fn probabilities(&self, theta: &DVector<f64>, features: &[f64]) -> Vec<f64> {
        let nf = self.centers.len();
        let logits: Vec<f64> = (0..self.n_actions)
            .map(|a| {
                features
                    .iter()
                    .zip(theta.as_slice()[a * nf..(a + 1) * nf].iter())
                    .map(|(f, w)| f * w)
                    .sum()
            })
            .collect();
        softmax(&logits)
    }

    fn prepare(&self, theta: &DVector<f64>, obs: &Observation) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.dim(), theta)?;
        let features = self.features(obs.point()?)?;
        let probs = self.probabilities(theta, &features);
        Ok((features, probs))
    }

    fn action_index(&self, action: &Action) -> Result<usize> {
        match action {
            Action::Discrete(a) if *a < self.n_actions => Ok(*a),
            _ => Err(Error::ZeroDensity),
        }
    }
}

impl Policy for SoftmaxRbf {
    fn name(&self) -> &'static str {
        "mc-softmax-rbf"
    }

    fn dim(&self) -> usize {
        self.centers.len() * self.n_actions
    }

    fn initial_params(&self, _rng: &mut SimRng) -> DVector<f64> {
        DVector::zeros(self.dim())
    }

    fn sample(&self, theta: &DVector<f64>, obs: &Observation, rng: &mut SimRng) -> Result<Action> {
        let (_, probs) = self.prepare(theta, obs)?;
        Ok(Action::Discrete(sample_categorical(&probs, rng)))
    }

    fn log_density(&self, theta: &DVector<f64>, obs: &Observation, action: &Action) -> Result<f64> {
        let (_, probs) = self.prepare(theta, obs)?;
        let p = probs[self.action_index(action)?];
        if p <= 0.0 {
            return Err(Error::ZeroDensity);
        }
        Ok(p.ln())
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
        let (features, probs) = self.prepare(theta, obs)?;
        let chosen = self.action_index(action)?;
        let nf = self.centers.len();
        for (b, p) in probs.iter().enumerate() {
            let coef = scale * (f64::from(u8::from(b == chosen)) - p);
            for (k, f) in features.iter().enumerate() {
                out[b * nf + k] += coef * f;
            }
        }
        Ok(())
    }

    fn action_probabilities(&self, theta: &DVector<f64>, obs: &Observation) -> Option<Vec<f64>> {
        self.prepare(theta, obs).ok().map(|(_, p)| p)
    }
}
