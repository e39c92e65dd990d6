//! Monte-Carlo estimates of the functional inner products used by the
//! boosting loop.
//!
//! All estimates are of `E_a[ln q(z) - ln p~(z)]` for some sampleable `a`.
//! This equals `<a, grad KL(q)>` up to a constant that does not depend on
//! `a`, so every difference of two such estimates is free of the unknown
//! log-normalizer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corrective::{DirectionChoice, DirectionKind};
use crate::density::Component;
use crate::error::{invalid, BviError, Result};
use crate::exec::{mean, variance, Exec};
use crate::mixture::Mixture;
use crate::targets::Target;

/// Something we can draw samples from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    Component(&'a Component),
    Mixture(&'a Mixture),
}

impl<'a> From<&'a Component> for Source<'a> {
    fn from(c: &'a Component) -> Self {
        Source::Component(c)
    }
}

impl<'a> From<&'a Mixture> for Source<'a> {
    fn from(m: &'a Mixture) -> Self {
        Source::Mixture(m)
    }
}

impl Source<'_> {
    pub fn dim(&self) -> usize {
        match self {
            Source::Component(c) => c.dim(),
            Source::Mixture(m) => m.dim(),
        }
    }

    /// Draws `n` samples. Mixtures are sampled with stratified allocation,
    /// component by component in index order.
    pub fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        match self {
            Source::Component(c) => (0..n).map(|_| c.sample(rng)).collect(),
            Source::Mixture(m) => {
                let counts = m.stratified_allocation(n);
                let mut out = Vec::with_capacity(n);
                for (c, k) in m.components().iter().zip(counts) {
                    out.extend((0..k).map(|_| c.sample(rng)));
                }
                out
            }
        }
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        match self {
            Source::Component(c) => c.log_density_unchecked(z),
            Source::Mixture(m) => m.log_density_unchecked(z),
        }
    }
}

/// A Monte-Carlo mean with its per-sample values retained for reuse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossEstimate {
    pub value: f64,
    pub std_err: f64,
    pub values: Vec<f64>,
}

impl CrossEstimate {
    pub fn from_values(values: Vec<f64>) -> Self {
        let value = mean(&values);
        let std_err = (variance(&values) / values.len() as f64).sqrt();
        Self { value, std_err, values }
    }

    pub fn samples(&self) -> usize {
        self.values.len()
    }
}

/// Sample-size and error-budget schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Fixed,
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McBudget {
    pub base_samples: usize,
    pub epsilon0: f64,
    pub growth: Growth,
}

impl Default for McBudget {
    fn default() -> Self {
        Self { base_samples: 100, epsilon0: 0.01, growth: Growth::Fixed }
    }
}

impl McBudget {
    /// `(samples, epsilon)` at iteration `t`; negative `t` is treated as 0.
    pub fn at(&self, t: i64) -> (usize, f64) {
        let t = t.max(0) as usize;
        let n = match self.growth {
            Growth::Fixed => self.base_samples,
            Growth::Quadratic => self.base_samples * (t + 1) * (t + 1),
        };
        (n, epsilon_at(self.epsilon0, t))
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_samples < 2 {
            return invalid("base_samples must be at least 2");
        }
        if !(self.epsilon0.is_finite() && self.epsilon0 >= 0.0) {
            return invalid("epsilon0 must be non-negative");
        }
        Ok(())
    }
}

/// `epsilon0 / t^2` for `t >= 1`, `epsilon0` at `t = 0`.
pub fn epsilon_at(epsilon0: f64, t: usize) -> f64 {
    if t == 0 {
        epsilon0
    } else {
        epsilon0 / (t * t) as f64
    }
}

pub fn mc_budget_at(b: &McBudget, t: i64) -> (usize, f64) {
    b.at(t)
}

/// `ln q(z) - ln p~(z)` at each sample (`ln q` omitted when `q` is `None`).
pub fn residual_values(
    q: Option<&Mixture>,
    target: &dyn Target,
    samples: &[Vec<f64>],
    exec: Exec,
) -> Result<Vec<f64>> {
    let values = exec.map(samples, |z| {
        let lq = q.map_or(0.0, |m| m.log_density_unchecked(z));
        lq - target.log_density(z)
    });
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(BviError::EstimatorFailure { z: samples[i].clone(), value: values[i] });
    }
    Ok(values)
}

fn check_n(n: usize) -> Result<()> {
    if n < 2 {
        return invalid(format!("need at least 2 samples, got {n}"));
    }
    Ok(())
}

/// `(1/n) sum_j [ln q(z_j) - ln p~(z_j)]`, `z_j ~ a`.
pub fn estimate_cross<R: Rng + ?Sized>(
    a: Source<'_>,
    q: &Mixture,
    target: &dyn Target,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<CrossEstimate> {
    check_n(n)?;
    if a.dim() != q.dim() || q.dim() != target.dim() {
        return invalid("source, mixture and target dimensions differ");
    }
    let samples = a.draw(n, rng);
    Ok(CrossEstimate::from_values(residual_values(Some(q), target, &samples, exec)?))
}

/// `E_q[ln q - ln p~]`: the KL divergence to the posterior minus `ln p(X)`.
pub fn estimate_kl_up_to_const<R: Rng + ?Sized>(
    q: &Mixture,
    target: &dyn Target,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<CrossEstimate> {
    estimate_cross(Source::Mixture(q), q, target, n, rng, exec)
}

/// `E_a[ln a - ln b]`; the entropy of a component source is analytic.
pub fn estimate_kl_between<R: Rng + ?Sized>(
    a: Source<'_>,
    b: Source<'_>,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<f64> {
    check_n(n)?;
    let samples = a.draw(n, rng);
    let vals = exec.map(&samples, |z| match a {
        Source::Component(_) => -b.log_density(z),
        Source::Mixture(_) => a.log_density(z) - b.log_density(z),
    });
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(BviError::EstimatorFailure { z: samples[i].clone(), value: vals[i] });
    }
    let cross = mean(&vals);
    Ok(match a {
        Source::Component(c) => cross - c.entropy(),
        Source::Mixture(_) => cross,
    })
}

/// The two ends of an update direction `d = plus - minus`.
#[derive(Debug, Clone, Copy)]
pub struct DirectionEnds<'a> {
    pub plus: Source<'a>,
    pub minus: Source<'a>,
}

/// Resolves `d_t = s_t - v_t` into densities for a direction choice.
///
/// * vanilla / away-add: `s - q`
/// * away-drop: `q - v_bar`
/// * pairwise: `s - v_bar`
pub fn direction_ends<'a>(
    s: &'a Component,
    q: &'a Mixture,
    dir: &DirectionChoice,
) -> Result<DirectionEnds<'a>> {
    let worst = || -> Result<&'a Component> {
        match dir.worst_index {
            Some(v) if v < q.len() => Ok(&q.components()[v]),
            _ => invalid(format!("{:?} needs a valid worst index", dir.kind)),
        }
    };
    Ok(match dir.kind {
        DirectionKind::VanillaFW | DirectionKind::AwayAdd => {
            DirectionEnds { plus: Source::Component(s), minus: Source::Mixture(q) }
        }
        DirectionKind::AwayDrop => DirectionEnds { plus: Source::Mixture(q), minus: Source::Component(worst()?) },
        DirectionKind::Pairwise => DirectionEnds { plus: Source::Component(s), minus: Source::Component(worst()?) },
    })
}

/// Estimated Frank-Wolfe gap `g = -<grad KL(q), d>` with the cross terms
/// that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapEstimate {
    pub value: f64,
    pub std_err: f64,
    pub samples_used: usize,
    /// `E_minus[ln q - ln p~]`.
    pub minus: CrossEstimate,
    /// `E_plus[ln q - ln p~]`.
    pub plus: CrossEstimate,
}

/// `g = E_minus[ln q - ln p~] - E_plus[ln q - ln p~]`; positive means `d` is a
/// descent direction. The minus side is drawn first, then the plus side.
pub fn estimate_gap<R: Rng + ?Sized>(
    s: &Component,
    dir: &DirectionChoice,
    q: &Mixture,
    target: &dyn Target,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<GapEstimate> {
    let ends = direction_ends(s, q, dir)?;
    let minus = estimate_cross(ends.minus, q, target, n, rng, exec)?;
    let plus = estimate_cross(ends.plus, q, target, n, rng, exec)?;
    Ok(GapEstimate {
        value: minus.value - plus.value,
        std_err: (minus.std_err.powi(2) + plus.std_err.powi(2)).sqrt(),
        samples_used: minus.samples() + plus.samples(),
        minus,
        plus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::Family;
    use crate::rng::SeedTree;
    use crate::targets::{GaussianMixtureTarget, Shifted};

    fn gauss(mu: f64) -> Component {
        Component::new(Family::Gaussian, vec![mu], vec![1.0]).unwrap()
    }

    fn normal_target(mu: f64) -> GaussianMixtureTarget {
        GaussianMixtureTarget::new(vec![vec![mu]], vec![vec![1.0]], vec![1.0]).unwrap()
    }

    #[test]
    fn budget_schedule() {
        let b = McBudget { base_samples: 100, epsilon0: 0.9, growth: Growth::Quadratic };
        assert_eq!(b.at(0), (100, 0.9));
        let (n, e) = b.at(3);
        assert_eq!(n, 1600);
        assert!((e - 0.1).abs() < 1e-15);
        let f = McBudget { growth: Growth::Fixed, ..b };
        let (n, e) = f.at(9);
        assert_eq!(n, 100);
        assert!((e - 0.9 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn self_cross_is_zero() {
        let t = normal_target(0.0);
        let q = Mixture::single(gauss(0.0));
        let mut rng = SeedTree::new(1).stream("x", &[]);
        let e = estimate_cross(Source::Component(&gauss(0.0)), &q, &t, 1000, &mut rng, Exec::Parallel).unwrap();
        assert!(e.value.abs() < 1e-12);
    }

    #[test]
    fn analytic_gaussian_pair() {
        let t = normal_target(1.0);
        let q = Mixture::single(gauss(0.0));
        let mut rng = SeedTree::new(2).stream("x", &[]);
        let e = estimate_kl_up_to_const(&q, &t, 100_000, &mut rng, Exec::Parallel).unwrap();
        assert!((e.value - 0.5).abs() < 0.02, "{}", e.value);
    }

    #[test]
    fn bimodal_self_kl() {
        let t = GaussianMixtureTarget::bimodal(1, 2.0);
        let q = t.as_mixture().clone();
        let mut rng = SeedTree::new(3).stream("x", &[]);
        let e = estimate_kl_up_to_const(&q, &t, 100_000, &mut rng, Exec::Parallel).unwrap();
        assert!(e.value.abs() < 0.02);
    }

    #[test]
    fn shift_moves_cross_estimate() {
        let t = normal_target(1.0);
        let shifted = Shifted { inner: &t, shift: 7.3 };
        let q = Mixture::single(gauss(0.0));
        let tree = SeedTree::new(4);
        let a = estimate_cross(Source::Component(&gauss(0.5)), &q, &t, 500, &mut tree.stream("x", &[]), Exec::Parallel).unwrap();
        let b = estimate_cross(Source::Component(&gauss(0.5)), &q, &shifted, 500, &mut tree.stream("x", &[]), Exec::Parallel)
            .unwrap();
        assert!((a.value - b.value - 7.3).abs() < 1e-12);
    }

    #[test]
    fn gap_far_component_is_large() {
        // E_q[ln q - ln p] = 12.5, E_s[ln q - ln p] = -12.5
        let t = normal_target(0.0);
        let q = Mixture::single(gauss(5.0));
        let dir = DirectionChoice::vanilla();
        let mut rng = SeedTree::new(5).stream("x", &[]);
        let g = estimate_gap(&gauss(0.0), &dir, &q, &t, 10_000, &mut rng, Exec::Parallel).unwrap();
        assert!(g.value > 5.0);
        assert!((g.value - 25.0).abs() < 0.5, "{}", g.value);
    }

    #[test]
    fn gap_of_identical_component_is_noise() {
        let t = normal_target(1.0);
        let q = Mixture::single(gauss(0.0));
        let mut rng = SeedTree::new(6).stream("x", &[]);
        let g = estimate_gap(&gauss(0.0), &DirectionChoice::vanilla(), &q, &t, 20_000, &mut rng, Exec::Parallel).unwrap();
        assert!(g.value.abs() < 4.0 * g.std_err.max(1e-3));
    }

    #[test]
    fn non_finite_target_aborts() {
        let t = crate::targets::FnTarget::new(1, |z: &[f64]| if z[0] > 0.0 { f64::NEG_INFINITY } else { 0.0 });
        let q = Mixture::single(gauss(0.0));
        let mut rng = SeedTree::new(7).stream("x", &[]);
        let err = estimate_kl_up_to_const(&q, &t, 100, &mut rng, Exec::Sequential).unwrap_err();
        match err {
            BviError::EstimatorFailure { z, .. } => assert!(z[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let t = normal_target(0.0);
        let q = Mixture::single(gauss(0.0));
        let mut rng = SeedTree::new(7).stream("x", &[]);
        assert!(estimate_kl_up_to_const(&q, &t, 1, &mut rng, Exec::Sequential).is_err());
    }

    #[test]
    fn kl_between_gaussians() {
        // KL(N(0,1) || N(1,1)) = 0.5
        let mut rng = SeedTree::new(8).stream("x", &[]);
        let v = estimate_kl_between(Source::Component(&gauss(0.0)), Source::Component(&gauss(1.0)), 50_000, &mut rng, Exec::Parallel)
            .unwrap();
        assert!((v - 0.5).abs() < 0.02);
    }
}
