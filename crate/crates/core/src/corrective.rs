//! Update-direction selection: vanilla Frank-Wolfe, away steps and pairwise
//! steps, each with its bound on the step size.

use serde::{Deserialize, Serialize};

use crate::density::Component;
use crate::error::{invalid, Result};
use crate::estimators::{estimate_cross, residual_values, Source};
use crate::exec::{mean, Exec};
use crate::mixture::Mixture;
use crate::rng::SeedTree;
use crate::targets::Target;

/// Which corrective scheme the boosting loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fw,
    Away,
    Pairwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionKind {
    #[serde(rename = "vanilla_fw")]
    VanillaFW,
    AwayAdd,
    AwayDrop,
    Pairwise,
}

impl DirectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DirectionKind::VanillaFW => "vanilla_fw",
            DirectionKind::AwayAdd => "away_add",
            DirectionKind::AwayDrop => "away_drop",
            DirectionKind::Pairwise => "pairwise",
        }
    }
}

/// The direction `d_t = s_t - v_t` together with its largest admissible step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionChoice {
    pub kind: DirectionKind,
    pub worst_index: Option<usize>,
    pub gamma_max: f64,
}

impl DirectionChoice {
    pub fn vanilla() -> Self {
        Self { kind: DirectionKind::VanillaFW, worst_index: None, gamma_max: 1.0 }
    }

    pub fn away_add() -> Self {
        Self { kind: DirectionKind::AwayAdd, worst_index: None, gamma_max: 1.0 }
    }

    /// Downweights component `index` (weight `alpha`); `gamma_max = alpha / (1 - alpha)`.
    pub fn away_drop(index: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return invalid(format!("away drop needs 0 < alpha < 1, got {alpha}"));
        }
        Ok(Self { kind: DirectionKind::AwayDrop, worst_index: Some(index), gamma_max: alpha / (1.0 - alpha) })
    }

    /// Moves weight from component `index` (weight `alpha`); `gamma_max = alpha`.
    pub fn pairwise(index: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return invalid(format!("pairwise needs 0 < alpha <= 1, got {alpha}"));
        }
        Ok(Self { kind: DirectionKind::Pairwise, worst_index: Some(index), gamma_max: alpha })
    }
}

/// Index and score of the active component most aligned with the positive
/// gradient, `argmax_i E_{c_i}[ln q - ln p~]`. All components are scored on
/// common random numbers (the same stream), so identical components tie and
/// the lowest index wins.
pub fn find_worst_component(
    q: &Mixture,
    target: &dyn Target,
    n: usize,
    seeds: &SeedTree,
    t: i64,
    exec: Exec,
) -> Result<(usize, f64)> {
    let scores = component_scores(q, target, n, seeds, t, exec)?;
    let mut best = (0, scores[0]);
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > best.1 {
            best = (i, *s);
        }
    }
    Ok(best)
}

fn component_scores(
    q: &Mixture,
    target: &dyn Target,
    n: usize,
    seeds: &SeedTree,
    t: i64,
    exec: Exec,
) -> Result<Vec<f64>> {
    if n < 2 {
        return invalid("need at least 2 samples per component");
    }
    q.components()
        .iter()
        .map(|c| {
            let mut rng = seeds.stream("worst", &[t]);
            let samples = Source::Component(c).draw(n, &mut rng);
            Ok(mean(&residual_values(Some(q), target, &samples, exec)?))
        })
        .collect()
}

/// Picks `v_t` for the given variant.
///
/// The away test compares `g_fw = E_q - E_s` with `g_away = E_vbar - E_q`
/// using one shared estimate of `E_q`; ties go to the Frank-Wolfe step.
pub fn choose_direction(
    variant: Variant,
    q: &Mixture,
    s: &Component,
    target: &dyn Target,
    n: usize,
    seeds: &SeedTree,
    t: i64,
    exec: Exec,
) -> Result<DirectionChoice> {
    match variant {
        Variant::Fw => Ok(DirectionChoice::vanilla()),
        Variant::Pairwise => {
            let (v, _) = find_worst_component(q, target, n, seeds, t, exec)?;
            DirectionChoice::pairwise(v, q.weights()[v])
        }
        Variant::Away => {
            if q.len() == 1 {
                // v_bar is the whole mixture, so q - v_bar = 0
                return Ok(DirectionChoice::away_add());
            }
            let (v, e_worst) = find_worst_component(q, target, n, seeds, t, exec)?;
            let e_q = estimate_cross(Source::Mixture(q), q, target, n, &mut seeds.stream("direction-q", &[t]), exec)?;
            let e_s = estimate_cross(Source::Component(s), q, target, n, &mut seeds.stream("direction-s", &[t]), exec)?;
            let fw_gap = e_q.value - e_s.value;
            let away_gap = e_worst - e_q.value;
            log::debug!("t={t} fw gap {fw_gap:.4} away gap {away_gap:.4} (worst {v})");
            if fw_gap >= away_gap {
                Ok(DirectionChoice::away_add())
            } else {
                DirectionChoice::away_drop(v, q.weights()[v])
            }
        }
    }
}
