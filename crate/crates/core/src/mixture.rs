//! Finite mixtures of base components: the iterate of the boosting loop.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corrective::{DirectionChoice, DirectionKind};
use crate::density::Component;
use crate::error::{invalid, BviError, Result};

/// Weights below this value are removed after every update.
pub const PRUNE_FLOOR: f64 = 1e-10;

/// Slack allowed when checking a step against its upper bound.
const GAMMA_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    components: Vec<Component>,
    weights: Vec<f64>,
}

/// Numerically stable `ln sum exp(xs)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Mixture {
    /// Builds a mixture; weights must be positive and sum to one within 1e-9
    /// (they are renormalized exactly).
    pub fn new(components: Vec<Component>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return invalid("mixture needs at least one component");
        }
        if components.len() != weights.len() {
            return invalid("components and weights differ in length");
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return invalid("mixture components differ in dimension");
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return invalid("mixture weights must be positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return invalid(format!("mixture weights sum to {total}, not 1"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { components, weights })
    }

    pub fn single(component: Component) -> Self {
        Self { components: vec![component], weights: vec![1.0] }
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn param_count(&self) -> usize {
        self.components.iter().map(Component::param_count).sum()
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim() {
            return invalid(format!("expected dimension {}, got {}", self.dim(), z.len()));
        }
        Ok(self.log_density_unchecked(z))
    }

    pub(crate) fn log_density_unchecked(&self, z: &[f64]) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].log_density_unchecked(z);
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.log_density_unchecked(z))
            .collect();
        log_sum_exp(&terms)
    }

    /// Gradient of `ln q(z)` with respect to `z`.
    pub(crate) fn score_into(&self, z: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        if self.components.len() == 1 {
            self.components[0].score_into(z, out);
            return;
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.log_density_unchecked(z))
            .collect();
        let lse = log_sum_exp(&terms);
        let mut buf = vec![0.0; z.len()];
        for (c, t) in self.components.iter().zip(&terms) {
            let r = (t - lse).exp();
            if r == 0.0 {
                continue;
            }
            c.score_into(z, &mut buf);
            for (o, g) in out.iter_mut().zip(&buf) {
                *o += r * g;
            }
        }
    }

    /// Categorical-then-component sampling.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| {
                let i = self.pick(rng);
                self.components[i].sample(rng)
            })
            .collect()
    }

    /// Picks a component index with probability equal to its weight.
    pub fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }

    /// Per-component sample counts `round(w_i n)` by largest remainder;
    /// counts sum to exactly `n`.
    pub fn stratified_allocation(&self, n: usize) -> Vec<usize> {
        let raw: Vec<f64> = self.weights.iter().map(|w| w * n as f64).collect();
        let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..raw.len()).collect();
        // stable: ties go to the lower index
        order.sort_by(|&a, &b| {
            let ra = raw[a] - raw[a].floor();
            let rb = raw[b] - raw[b].floor();
            rb.total_cmp(&ra)
        });
        for &i in order.iter().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }

    /// Applies `q + gamma * (s - v)` for the given direction, then prunes
    /// weights below [`PRUNE_FLOOR`] and renormalizes.
    pub fn update(&self, s_new: &Component, direction: &DirectionChoice, gamma: f64) -> Result<Mixture> {
        if !(gamma.is_finite() && gamma >= 0.0 && gamma <= direction.gamma_max + GAMMA_SLACK) {
            return invalid(format!(
                "step {gamma} outside [0, {}] for {:?}",
                direction.gamma_max, direction.kind
            ));
        }
        if direction.kind != DirectionKind::AwayDrop && s_new.dim() != self.dim() {
            return invalid("new component dimension differs from the mixture");
        }
        let mut components = self.components.clone();
        let mut weights = self.weights.clone();
        match direction.kind {
            DirectionKind::VanillaFW | DirectionKind::AwayAdd => {
                weights.iter_mut().for_each(|w| *w *= 1.0 - gamma);
                components.push(s_new.clone());
                weights.push(gamma);
            }
            DirectionKind::AwayDrop => {
                let v = self.worst_index(direction)?;
                weights.iter_mut().for_each(|w| *w *= 1.0 + gamma);
                weights[v] -= gamma;
            }
            DirectionKind::Pairwise => {
                let v = self.worst_index(direction)?;
                weights[v] -= gamma;
                components.push(s_new.clone());
                weights.push(gamma);
            }
        }
        if let Some(w) = weights.iter().find(|w| **w < -PRUNE_FLOOR) {
            return Err(BviError::Internal(format!(
                "update produced negative weight {w} (step bound violated)"
            )));
        }
        let (components, weights): (Vec<_>, Vec<_>) = components
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w >= PRUNE_FLOOR)
            .unzip();
        if components.is_empty() {
            return Err(BviError::Internal("update removed every component".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Mixture { components, weights })
    }

    fn worst_index(&self, direction: &DirectionChoice) -> Result<usize> {
        match direction.worst_index {
            Some(v) if v < self.len() => Ok(v),
            Some(v) => invalid(format!("worst index {v} out of range for {} components", self.len())),
            None => invalid(format!("{:?} requires a worst component", direction.kind)),
        }
    }

    /// Merges exactly identical components, summing their weights. The
    /// first occurrence keeps its position.
    pub fn merge_duplicates(&self) -> Mixture {
        let mut components: Vec<Component> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (c, w) in self.components.iter().zip(&self.weights) {
            match components.iter().position(|e| e == c) {
                Some(i) => weights[i] += w,
                None => {
                    components.push(c.clone());
                    weights.push(*w);
                }
            }
        }
        Mixture { components, weights }
    }
}
