use serde::{Deserialize, Serialize};

use super::Target;
use crate::density::{Component, Family};
use crate::error::Result;
use crate::mixture::Mixture;

/// Fully normalized mixture of mean-field Gaussians.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianMixtureTarget {
    mixture: Mixture,
}

impl GaussianMixtureTarget {
    pub fn new(means: Vec<Vec<f64>>, scales: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if means.len() != scales.len() {
            return crate::error::invalid("means and scales differ in length");
        }
        let components = means
            .into_iter()
            .zip(scales)
            .map(|(m, s)| Component::new(Family::Gaussian, m, s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mixture: Mixture::new(components, weights)? })
    }

    /// Equal-weight pair of unit Gaussians at `-offset` and `+offset` in
    /// every coordinate.
    pub fn bimodal(dim: usize, offset: f64) -> Self {
        Self::new(
            vec![vec![-offset; dim], vec![offset; dim]],
            vec![vec![1.0; dim], vec![1.0; dim]],
            vec![0.5, 0.5],
        )
        .expect("valid bimodal target")
    }

    pub fn from_mixture(mixture: Mixture) -> Self {
        Self { mixture }
    }

    pub fn as_mixture(&self) -> &Mixture {
        &self.mixture
    }
}

impl Target for GaussianMixtureTarget {
    fn dim(&self) -> usize {
        self.mixture.dim()
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        self.mixture.log_density_unchecked(z)
    }

    fn log_normalizer(&self) -> Option<f64> {
        Some(0.0)
    }

    fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        self.mixture.score_into(z, out)
    }
}
