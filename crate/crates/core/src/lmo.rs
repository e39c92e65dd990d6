//! The greedy subproblem: fit the next component to the residual `p~ / q`
//! by minimizing `-H(s) + E_s[ln q - ln p~]` with reparameterized SGD.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::density::{Component, Family};
use crate::error::{invalid, BviError, Result};
use crate::exec::{mean, pairwise_sum, Exec};
use crate::mixture::Mixture;
use crate::rng::SeedTree;
use crate::targets::Target;

pub const MIN_SCALE: f64 = 1e-6;
pub const MAX_SCALE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmoConfig {
    pub steps: usize,
    pub learning_rate: f64,
    /// Per-step geometric decay of the learning rate.
    pub lr_decay: f64,
    pub restarts: usize,
    pub init_scale: f64,
    pub samples_per_step: usize,
    /// Each gradient coordinate is clipped to `[-grad_clip, grad_clip]`.
    pub grad_clip: f64,
}

impl Default for LmoConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 0.05,
            lr_decay: 0.995,
            restarts: 3,
            init_scale: 1.0,
            samples_per_step: 20,
            grad_clip: 100.0,
        }
    }
}

impl LmoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return invalid("lmo restarts must be positive");
        }
        if self.samples_per_step < 2 {
            return invalid("lmo samples_per_step must be at least 2");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return invalid("lmo learning_rate must be positive");
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return invalid("lmo lr_decay must lie in (0, 1]");
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return invalid("lmo init_scale must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return invalid("lmo grad_clip must be positive");
        }
        Ok(())
    }
}

/// Unconstrained variational parameters: location and log-scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarParams {
    pub location: Vec<f64>,
    pub log_scale: Vec<f64>,
}

impl VarParams {
    pub fn from_component(c: &Component) -> Self {
        Self { location: c.location().to_vec(), log_scale: c.scale().iter().map(|b| b.ln()).collect() }
    }

    pub fn to_component(&self, family: Family) -> Result<Component> {
        Component::new(family, self.location.clone(), self.log_scale.iter().map(|r| r.exp()).collect())
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    fn is_finite(&self) -> bool {
        self.location.iter().chain(&self.log_scale).all(|v| v.is_finite())
    }

    fn transform(&self, noise: &[f64]) -> Vec<f64> {
        noise
            .iter()
            .zip(&self.location)
            .zip(&self.log_scale)
            .map(|((e, m), r)| m + r.exp() * e)
            .collect()
    }

    /// Clamps scales into `[MIN_SCALE, MAX_SCALE]`; returns whether anything moved.
    fn clamp_scales(&mut self) -> bool {
        let (lo, hi) = (MIN_SCALE.ln(), MAX_SCALE.ln());
        let mut clamped = false;
        for r in &mut self.log_scale {
            let c = r.clamp(lo, hi);
            clamped |= c != *r;
            *r = c;
        }
        clamped
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelboGradient {
    pub location: Vec<f64>,
    pub log_scale: Vec<f64>,
}

fn entropy_of(family: Family, params: &VarParams) -> f64 {
    params.log_scale.iter().map(|r| family.standard_entropy() + r).sum()
}

fn draw_noise<R: Rng + ?Sized>(family: Family, d: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| family.standard_noise(rng)).collect()).collect()
}

fn residual_at(q: Option<&Mixture>, target: &dyn Target, z: &[f64]) -> f64 {
    q.map_or(0.0, |m| m.log_density_unchecked(z)) - target.log_density(z)
}

fn check_dims(d: usize, q: Option<&Mixture>, target: &dyn Target) -> Result<()> {
    if target.dim() != d || q.is_some_and(|m| m.dim() != d) {
        return invalid("component, mixture and target dimensions differ");
    }
    Ok(())
}

/// RELBO objective on fixed noise (common random numbers).
pub fn relbo_value_at(
    family: Family,
    params: &VarParams,
    noise: &[Vec<f64>],
    q: Option<&Mixture>,
    target: &dyn Target,
    exec: Exec,
) -> Result<f64> {
    check_dims(params.dim(), q, target)?;
    let samples: Vec<Vec<f64>> = noise.iter().map(|e| params.transform(e)).collect();
    let vals = exec.map(&samples, |z| residual_at(q, target, z));
    if let Some(i) = vals.iter().position(|v| !v.is_finite()) {
        return Err(BviError::EstimatorFailure { z: samples[i].clone(), value: vals[i] });
    }
    Ok(-entropy_of(family, params) + mean(&vals))
}

/// `-H(s) + (1/n) sum_j [ln q(z_j) - ln p~(z_j)]`, `z_j ~ s`. A `None`
/// mixture drops the `ln q` term (plain VI objective).
pub fn relbo_value<R: Rng + ?Sized>(
    s: &Component,
    q: Option<&Mixture>,
    target: &dyn Target,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<f64> {
    if n < 2 {
        return invalid("need at least 2 samples");
    }
    let noise = draw_noise(s.family(), s.dim(), n, rng);
    relbo_value_at(s.family(), &VarParams::from_component(s), &noise, q, target, exec)
}

/// Pathwise gradient on fixed noise. The entropy part is analytic
/// (`dH / d log b_i = 1`); the residual is differentiated through
/// `z = mu + exp(rho) * xi` with the analytic mixture score and the
/// target's gradient.
pub fn relbo_gradient_at(
    params: &VarParams,
    noise: &[Vec<f64>],
    q: Option<&Mixture>,
    target: &dyn Target,
    exec: Exec,
) -> Result<RelboGradient> {
    let d = params.dim();
    check_dims(d, q, target)?;
    let per_sample: Vec<(Vec<f64>, Vec<f64>)> = exec.map(noise, |xi| {
        let z = params.transform(xi);
        let mut gp = vec![0.0; d];
        target.grad_log_density(&z, &mut gp);
        let mut gq = vec![0.0; d];
        if let Some(m) = q {
            m.score_into(&z, &mut gq);
        }
        let g: Vec<f64> = gq.iter().zip(&gp).map(|(a, b)| a - b).collect();
        let gr: Vec<f64> = (0..d).map(|i| g[i] * params.log_scale[i].exp() * xi[i]).collect();
        (g, gr)
    });
    let n = noise.len() as f64;
    let column = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| -> f64 {
        let col: Vec<f64> = per_sample.iter().map(pick).collect();
        pairwise_sum(&col) / n
    };
    let location: Vec<f64> = (0..d).map(|i| column(&|s| s.0[i])).collect();
    let log_scale: Vec<f64> = (0..d).map(|i| column(&|s| s.1[i]) - 1.0).collect();
    if location.iter().chain(&log_scale).any(|v| !v.is_finite()) {
        return Err(BviError::EstimatorFailure { z: params.location.clone(), value: f64::NAN });
    }
    Ok(RelboGradient { location, log_scale })
}

pub fn relbo_gradient<R: Rng + ?Sized>(
    family: Family,
    params: &VarParams,
    q: Option<&Mixture>,
    target: &dyn Target,
    n: usize,
    rng: &mut R,
    exec: Exec,
) -> Result<RelboGradient> {
    if n < 2 {
        return invalid("need at least 2 samples");
    }
    let noise = draw_noise(family, params.dim(), n, rng);
    relbo_gradient_at(params, &noise, q, target, exec)
}

#[derive(Debug, Clone)]
pub struct LmoOutcome {
    pub component: Component,
    /// RELBO of the returned component on the shared selection sample.
    pub relbo: f64,
    /// Selection-sample RELBO of each restart's starting point.
    pub init_relbo: Vec<f64>,
    pub clamp_events: usize,
    pub samples_spent: usize,
}

struct Chain {
    init: VarParams,
    params: Option<VarParams>,
    clamps: usize,
}

fn run_chain(
    family: Family,
    q: Option<&Mixture>,
    target: &dyn Target,
    cfg: &LmoConfig,
    seeds: &SeedTree,
    t: i64,
    k: usize,
    exec: Exec,
) -> Chain {
    let d = target.dim();
    let mut rng = seeds.stream("lmo", &[t, k as i64]);
    let anchor = match q {
        Some(m) => m.sample(1, &mut rng).remove(0),
        None => vec![0.0; d],
    };
    let location = anchor
        .iter()
        .map(|a| a + cfg.init_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let init = VarParams { location, log_scale: vec![cfg.init_scale.ln(); d] };
    let mut params = init.clone();
    let mut clamps = usize::from(params.clamp_scales());
    let mut lr = cfg.learning_rate;
    for step in 0..cfg.steps {
        let grad = match relbo_gradient(family, &params, q, target, cfg.samples_per_step, &mut rng, exec) {
            Ok(g) => g,
            Err(e) => {
                log::debug!("lmo t={t} restart {k} diverged at step {step}: {e}");
                return Chain { init, params: None, clamps };
            }
        };
        let clip = |g: f64| g.clamp(-cfg.grad_clip, cfg.grad_clip);
        for (p, g) in params.location.iter_mut().zip(&grad.location) {
            *p -= lr * clip(*g);
        }
        for (p, g) in params.log_scale.iter_mut().zip(&grad.log_scale) {
            *p -= lr * clip(*g);
        }
        if params.clamp_scales() {
            clamps += 1;
        }
        if !params.is_finite() {
            return Chain { init, params: None, clamps };
        }
        lr *= cfg.lr_decay;
    }
    Chain { init, params: Some(params), clamps }
}

/// Runs `restarts` SGD chains and returns the final point with the lowest
/// RELBO on a shared fresh sample of `4 * samples_per_step` draws. Ties go
/// to the lowest restart index.
pub fn solve_lmo(
    q: Option<&Mixture>,
    target: &dyn Target,
    family: Family,
    cfg: &LmoConfig,
    seeds: &SeedTree,
    t: i64,
    exec: Exec,
) -> Result<LmoOutcome> {
    cfg.validate()?;
    let d = target.dim();
    check_dims(d, q, target)?;
    let chains = exec.map_range(cfg.restarts, |k| run_chain(family, q, target, cfg, seeds, t, k, exec));

    let n_select = 4 * cfg.samples_per_step;
    let noise = draw_noise(family, d, n_select, &mut seeds.stream("lmo-select", &[t]));
    let mut best: Option<(f64, VarParams)> = None;
    let mut init_relbo = Vec::with_capacity(chains.len());
    for chain in &chains {
        init_relbo.push(relbo_value_at(family, &chain.init, &noise, q, target, exec).unwrap_or(f64::INFINITY));
        let Some(p) = &chain.params else { continue };
        let Ok(v) = relbo_value_at(family, p, &noise, q, target, exec) else { continue };
        if best.as_ref().is_none_or(|(b, _)| v < *b) {
            best = Some((v, p.clone()));
        }
    }
    let clamp_events: usize = chains.iter().map(|c| c.clamps).sum();
    if clamp_events > 0 {
        log::info!("lmo t={t}: {clamp_events} scale clamp events");
    }
    let (relbo, params) =
        best.ok_or_else(|| BviError::LmoFailure(format!("all {} restarts diverged at t={t}", cfg.restarts)))?;
    Ok(LmoOutcome {
        component: params.to_component(family)?,
        relbo,
        init_relbo,
        clamp_events,
        samples_spent: cfg.restarts * cfg.steps * cfg.samples_per_step + n_select * (cfg.restarts + 1),
    })
}
