//! Mean-field location-scale base densities.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{invalid, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Base family of a mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Laplace,
    Gaussian,
}

impl Family {
    /// Draws one coordinate from the standard member of the family.
    ///
    /// Laplace noise uses the inverse CDF of `u ~ U(-1/2, 1/2)`:
    /// `xi = -sign(u) ln(1 - 2|u|)`.
    pub fn standard_noise<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            Family::Gaussian => rng.sample(StandardNormal),
            Family::Laplace => loop {
                let u: f64 = rng.random::<f64>() - 0.5;
                let tail = 1.0 - 2.0 * u.abs();
                if tail > 0.0 {
                    break -u.signum() * tail.ln();
                }
            },
        }
    }

    /// Log-density of the standard member at `x`.
    #[inline]
    pub fn standard_log_density(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => -HALF_LN_2PI - 0.5 * x * x,
            Family::Laplace => -LN_2 - x.abs(),
        }
    }

    /// Derivative of the standard log-density (subgradient 0 at the Laplace kink).
    #[inline]
    pub fn standard_score(self, x: f64) -> f64 {
        match self {
            Family::Gaussian => -x,
            Family::Laplace => -x.signum() * f64::from(u8::from(x != 0.0)),
        }
    }

    /// Entropy of the standard member.
    pub fn standard_entropy(self) -> f64 {
        match self {
            Family::Gaussian => 0.5 * (2.0 * PI * std::f64::consts::E).ln(),
            Family::Laplace => 1.0 + LN_2,
        }
    }
}

/// A mean-field member of a location-scale family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    family: Family,
    location: Vec<f64>,
    scale: Vec<f64>,
}

impl Component {
    pub fn new(family: Family, location: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        if location.is_empty() {
            return invalid("component dimension must be positive");
        }
        if location.len() != scale.len() {
            return invalid(format!(
                "location has length {} but scale has length {}",
                location.len(),
                scale.len()
            ));
        }
        if let Some(b) = scale.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return invalid(format!("scale entries must be positive and finite, got {b}"));
        }
        if location.iter().any(|m| !m.is_finite()) {
            return invalid("location entries must be finite");
        }
        Ok(Self { family, location, scale })
    }

    /// Isotropic component with every scale entry equal to `scale`.
    pub fn isotropic(family: Family, location: Vec<f64>, scale: f64) -> Result<Self> {
        let d = location.len();
        Self::new(family, location, vec![scale; d])
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return invalid(format!("expected dimension {}, got {len}", self.dim()));
        }
        Ok(())
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z.len())?;
        Ok(self.log_density_unchecked(z))
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, z: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((zi, mu), b) in z.iter().zip(&self.location).zip(&self.scale) {
            acc += self.family.standard_log_density((zi - mu) / b) - b.ln();
        }
        acc
    }

    /// Gradient of the log-density with respect to `z`, written into `out`.
    pub(crate) fn score_into(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let b = self.scale[i];
            *o = self.family.standard_score((z[i] - self.location[i]) / b) / b;
        }
    }

    /// Exact differential entropy.
    pub fn entropy(&self) -> f64 {
        let base = self.family.standard_entropy();
        self.scale.iter().map(|b| base + b.ln()).sum()
    }

    /// Reparameterized draw: `location + scale * noise`.
    pub fn transform(&self, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(noise.len())?;
        Ok(self.transform_unchecked(noise))
    }

    pub(crate) fn transform_unchecked(&self, noise: &[f64]) -> Vec<f64> {
        noise
            .iter()
            .zip(&self.location)
            .zip(&self.scale)
            .map(|((e, m), b)| m + b * e)
            .collect()
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|_| self.family.standard_noise(rng)).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let noise = self.draw_noise(rng);
        self.transform_unchecked(&noise)
    }

    /// Number of variational parameters (location and scale).
    pub fn param_count(&self) -> usize {
        2 * self.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn log_density_known_values() {
        let g = Component::new(Family::Gaussian, vec![0.0], vec![1.0]).unwrap();
        assert!(close(g.log_density(&[0.0]).unwrap(), -0.918_939, 1e-6));
        let l = Component::new(Family::Laplace, vec![0.0], vec![1.0]).unwrap();
        assert!(close(l.log_density(&[0.0]).unwrap(), -std::f64::consts::LN_2, 1e-12));
        let l2 = Component::new(Family::Laplace, vec![2.0], vec![0.5]).unwrap();
        assert!(close(l2.log_density(&[3.0]).unwrap(), -2.0, 1e-12));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = Component::new(Family::Gaussian, vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(g.log_density(&[0.0]).is_err());
        assert!(g.transform(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn invalid_components_rejected() {
        assert!(Component::new(Family::Gaussian, vec![0.0], vec![0.0]).is_err());
        assert!(Component::new(Family::Gaussian, vec![0.0], vec![-1.0]).is_err());
        assert!(Component::new(Family::Gaussian, vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Component::new(Family::Gaussian, vec![], vec![]).is_err());
    }

    #[test]
    fn entropy_known_values() {
        let l = Component::new(Family::Laplace, vec![0.0], vec![0.5]).unwrap();
        assert!(close(l.entropy(), 1.0, 1e-12));
        let g = Component::new(Family::Gaussian, vec![0.0], vec![1.0]).unwrap();
        assert!(close(g.entropy(), 1.418_939, 1e-6));
        let l2 = Component::new(Family::Laplace, vec![0.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert!(close(l2.entropy(), 2.0, 1e-12));
    }

    #[test]
    fn transform_is_affine() {
        let c = Component::new(Family::Laplace, vec![1.0, 2.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(c.transform(&[0.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let c = Component::new(Family::Gaussian, vec![0.0], vec![2.0]).unwrap();
        assert_eq!(c.transform(&[1.5]).unwrap(), vec![3.0]);
    }

    #[test]
    fn gaussian_sample_mean() {
        let c = Component::new(Family::Gaussian, vec![1.0], vec![1.0]).unwrap();
        let mut rng = SeedTree::new(7).stream("test", &[]);
        let n = 100_000;
        let m: f64 = (0..n).map(|_| c.sample(&mut rng)[0]).sum::<f64>() / n as f64;
        assert!(close(m, 1.0, 0.02), "mean {m}");
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn samples_pass_ks_against_density() {
        let n = 100_000;
        // critical value of the one-sample KS statistic at alpha = 0.001
        let crit = 1.949 / (n as f64).sqrt();
        let mut rng = SeedTree::new(11).stream("ks", &[]);

        let g = Component::new(Family::Gaussian, vec![0.5], vec![2.0]).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)[0]).collect();
        let normal = Normal::new(0.5, 2.0).unwrap();
        let d = ks_statistic(xs, |x| normal.cdf(x));
        assert!(d < crit, "gaussian KS {d} >= {crit}");

        let l = Component::new(Family::Laplace, vec![-1.0], vec![0.7]).unwrap();
        let xs: Vec<f64> = (0..n).map(|_| l.sample(&mut rng)[0]).collect();
        let laplace_cdf = |x: f64| {
            let u = (x + 1.0) / 0.7;
            if u < 0.0 { 0.5 * u.exp() } else { 1.0 - 0.5 * (-u).exp() }
        };
        let d = ks_statistic(xs, laplace_cdf);
        assert!(d < crit, "laplace KS {d} >= {crit}");
    }

    #[test]
    fn score_matches_finite_difference() {
        for fam in [Family::Gaussian, Family::Laplace] {
            let c = Component::new(fam, vec![0.3, -1.0], vec![0.8, 2.0]).unwrap();
            let z = [1.1, -0.2];
            let mut g = [0.0; 2];
            c.score_into(&z, &mut g);
            for i in 0..2 {
                let h = 1e-6;
                let mut zp = z;
                let mut zm = z;
                zp[i] += h;
                zm[i] -= h;
                let fd = (c.log_density(&zp).unwrap() - c.log_density(&zm).unwrap()) / (2.0 * h);
                assert!(close(g[i], fd, 1e-6));
            }
        }
    }
}
