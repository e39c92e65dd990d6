//! Step-size engines: the predefined `2/(t+2)` schedule, a projected
//! stochastic-gradient line search, and approximate backtracking on a local
//! curvature estimate.
//!
//! The backtracking loop only needs the objective along the segment,
//! `gamma -> KL^(q + gamma d)`, so it is written against a closure. The
//! Monte-Carlo driver [`backtracking_find_step`] plugs in fresh estimates;
//! tests plug in exact quadratics.

use serde::{Deserialize, Serialize};

use crate::density::Component;
use crate::error::{invalid, Result};
use crate::estimators::{direction_ends, estimate_kl_up_to_const, residual_values, McBudget};
use crate::exec::{mean, Exec};
use crate::mixture::Mixture;
use crate::rng::SeedTree;
use crate::targets::Target;
use crate::corrective::DirectionChoice;

/// Quadratic term of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateMode {
    /// `(C/2) gamma^2`.
    Curvature,
    /// `(L/2) gamma^2 KL(s || q)`: a Lipschitz estimate scaled by the
    /// divergence between the new component and the iterate.
    LipschitzKl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Adaptive,
    FallbackPredefined,
    Predefined,
    LineSearch,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Adaptive => "adaptive",
            StepKind::FallbackPredefined => "fallback_predefined",
            StepKind::Predefined => "predefined",
            StepKind::LineSearch => "line_search",
        }
    }
}

/// Curvature estimate carried across iterations plus the backtracking
/// hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktrackState {
    pub curvature: f64,
    /// Growth factor applied after each failed proposal; `> 1`.
    pub tau: f64,
    /// Warm-start factor applied to the carried estimate before the first
    /// proposal; `0 < eta <= 1`.
    pub eta: f64,
    pub imax: usize,
    pub mode: SurrogateMode,
}

impl Default for BacktrackState {
    fn default() -> Self {
        Self { curvature: 1.0, tau: 2.0, eta: 0.1, imax: 10, mode: SurrogateMode::Curvature }
    }
}

impl BacktrackState {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0 && self.tau.is_finite()) {
            return invalid(format!("tau must exceed 1, got {}", self.tau));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return invalid(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.curvature > 0.0 && self.curvature.is_finite()) {
            return invalid(format!("curvature must be positive, got {}", self.curvature));
        }
        Ok(())
    }
}

/// One evaluated `(C, gamma)` proposal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub curvature: f64,
    pub gamma: f64,
    pub objective: f64,
    pub surrogate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub gamma: f64,
    pub curvature: f64,
    pub kind: StepKind,
    /// Number of rejected proposals.
    pub proposals_tried: usize,
    pub samples_spent: usize,
    pub proposals: Vec<Proposal>,
}

impl StepResult {
    /// The accepted proposal for an adaptive step with `gamma > 0`.
    pub fn certificate(&self) -> Option<&Proposal> {
        match self.kind {
            StepKind::Adaptive if self.gamma > 0.0 => self.proposals.last(),
            _ => None,
        }
    }
}

pub fn predefined_step(t: usize) -> f64 {
    2.0 / (t as f64 + 2.0)
}

/// `kl + gamma * neg_gap + (C/2) gamma^2 quad_scale + 2 eps`.
pub fn surrogate_value(gamma: f64, c: f64, kl_at_qt: f64, neg_gap: f64, eps_t: f64, quad_scale: f64) -> f64 {
    kl_at_qt + gamma * neg_gap + 0.5 * c * gamma * gamma * quad_scale + 2.0 * eps_t
}

/// Minimizer of the surrogate over `[0, gamma_max]`: `min(g / C, gamma_max)`,
/// or 0 when `g <= 0`.
pub fn closed_form_gamma(g: f64, c: f64, gamma_max: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    (g / c).min(gamma_max)
}

/// Estimates that stay fixed across the proposals of one backtracking call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateInputs {
    pub kl_at_q: f64,
    pub gap: f64,
    pub eps: f64,
    /// 1 for [`SurrogateMode::Curvature`].
    pub quad_scale: f64,
    pub gamma_max: f64,
    pub t: usize,
}

/// Approximate backtracking on the curvature estimate.
///
/// `objective(i, gamma)` returns the estimated KL at `q + gamma d` for the
/// `i`-th proposal. The carried estimate is first multiplied by `eta`; each
/// failed sufficient-decrease check multiplies it by `tau`. After `imax`
/// failed bumps the call gives up and returns the predefined step (clipped
/// to `gamma_max`) together with the last curvature.
pub fn backtrack<F>(state: &BacktrackState, inputs: &SurrogateInputs, mut objective: F) -> Result<(StepResult, BacktrackState)>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    state.validate()?;
    // away-drop steps allow gamma_max = alpha / (1 - alpha) > 1
    if !(inputs.gamma_max > 0.0 && inputs.gamma_max.is_finite()) {
        return invalid(format!("gamma_max must be positive and finite, got {}", inputs.gamma_max));
    }
    if inputs.gap <= 0.0 {
        log::warn!("t={}: non-positive gap {:.3e}, not a descent direction", inputs.t, inputs.gap);
        let result = StepResult {
            gamma: 0.0,
            curvature: state.curvature,
            kind: StepKind::Adaptive,
            proposals_tried: 0,
            samples_spent: 0,
            proposals: Vec::new(),
        };
        return Ok((result, *state));
    }
    let quad = inputs.quad_scale.max(f64::MIN_POSITIVE);
    let mut c = state.curvature * state.eta;
    let mut proposals = Vec::new();
    let mut i = 0;
    loop {
        let gamma = closed_form_gamma(inputs.gap, c * quad, inputs.gamma_max);
        let objective_value = objective(i, gamma)?;
        let surrogate = surrogate_value(gamma, c, inputs.kl_at_q, -inputs.gap, inputs.eps, quad);
        proposals.push(Proposal { curvature: c, gamma, objective: objective_value, surrogate });
        if objective_value <= surrogate {
            let result = StepResult {
                gamma,
                curvature: c,
                kind: StepKind::Adaptive,
                proposals_tried: i,
                samples_spent: 0,
                proposals,
            };
            return Ok((result, BacktrackState { curvature: c, ..*state }));
        }
        c *= state.tau;
        i += 1;
        if i > state.imax {
            let result = StepResult {
                gamma: predefined_step(inputs.t).min(inputs.gamma_max),
                curvature: c,
                kind: StepKind::FallbackPredefined,
                proposals_tried: i,
                samples_spent: 0,
                proposals,
            };
            return Ok((result, BacktrackState { curvature: c, ..*state }));
        }
    }
}

/// Monte-Carlo backtracking for the boosting loop.
///
/// `kl_at_q` and `gap` are the cached estimates for the current iterate; the
/// KL at every proposed candidate is re-estimated on a fresh stream
/// `("backtrack", [t, i])`.
#[allow(clippy::too_many_arguments)]
pub fn backtracking_find_step(
    state: &BacktrackState,
    q: &Mixture,
    s: &Component,
    direction: &DirectionChoice,
    kl_at_q: f64,
    gap: f64,
    quad_scale: f64,
    target: &dyn Target,
    t: usize,
    budget: &McBudget,
    seeds: &SeedTree,
    exec: Exec,
) -> Result<(StepResult, BacktrackState)> {
    let (n, eps) = budget.at(t as i64);
    let inputs = SurrogateInputs { kl_at_q, gap, eps, quad_scale, gamma_max: direction.gamma_max, t };
    let mut spent = 0;
    let (mut result, next) = backtrack(state, &inputs, |i, gamma| {
        let candidate = q.update(s, direction, gamma)?;
        let mut rng = seeds.stream("backtrack", &[t as i64, i as i64]);
        spent += n;
        Ok(estimate_kl_up_to_const(&candidate, target, n, &mut rng, exec)?.value)
    })?;
    result.samples_spent = spent;
    Ok((result, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearchConfig {
    /// Gradient step on gamma.
    pub b0: f64,
    pub steps: usize,
}

impl Default for LineSearchConfig {
    fn default() -> Self {
        Self { b0: 0.1, steps: 20 }
    }
}

/// Projected gradient descent on `gamma` over `[0, gamma_max]`, started at
/// `min(0.5, gamma_max)`. `derivative(k, gamma)` estimates
/// `d/dgamma KL(q + gamma d)` at step `k`.
pub fn projected_gradient_search<F>(b0: f64, steps: usize, gamma_max: f64, mut derivative: F) -> Result<f64>
where
    F: FnMut(usize, f64) -> Result<f64>,
{
    if !(b0 >= 0.0 && b0.is_finite()) {
        return invalid(format!("b0 must be non-negative, got {b0}"));
    }
    let mut gamma = 0.5f64.min(gamma_max);
    for k in 0..steps {
        if b0 == 0.0 {
            break;
        }
        let grad = derivative(k, gamma)?;
        gamma = (gamma - b0 * grad).clamp(0.0, gamma_max);
    }
    Ok(gamma)
}

/// Line-search baseline. The derivative of the KL along `d = plus - minus`
/// is `E_plus[ln q_g - ln p~] - E_minus[ln q_g - ln p~]`, both sides sampled
/// fresh from stream `("linesearch", [t, k])`.
#[allow(clippy::too_many_arguments)]
pub fn line_search_baseline(
    q: &Mixture,
    s: &Component,
    direction: &DirectionChoice,
    t: usize,
    cfg: &LineSearchConfig,
    target: &dyn Target,
    budget: &McBudget,
    seeds: &SeedTree,
    exec: Exec,
) -> Result<StepResult> {
    let (n, _) = budget.at(t as i64);
    let ends = direction_ends(s, q, direction)?;
    let mut spent = 0;
    let gamma = projected_gradient_search(cfg.b0, cfg.steps, direction.gamma_max, |k, gamma| {
        let q_gamma = q.update(s, direction, gamma)?;
        let mut rng = seeds.stream("linesearch", &[t as i64, k as i64]);
        let plus = ends.plus.draw(n, &mut rng);
        let minus = ends.minus.draw(n, &mut rng);
        spent += 2 * n;
        let plus = mean(&residual_values(Some(&q_gamma), target, &plus, exec)?);
        let minus = mean(&residual_values(Some(&q_gamma), target, &minus, exec)?);
        Ok(plus - minus)
    })?;
    Ok(StepResult {
        gamma,
        curvature: f64::NAN,
        kind: StepKind::LineSearch,
        proposals_tried: cfg.steps,
        samples_spent: spent,
        proposals: Vec::new(),
    })
}
