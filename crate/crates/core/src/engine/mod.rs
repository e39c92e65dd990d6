//! The boosting loop: LMO, direction, step size, update, with one trace row
//! per iteration.

mod eval;
mod trace;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use eval::{BlrEvaluator, Evaluator, Metrics, NoMetrics, SyntheticEvaluator};
pub use trace::{read_trace_jsonl, IterationTrace, TraceWriter};

use crate::corrective::{choose_direction, DirectionChoice, DirectionKind, Variant};
use crate::density::{Component, Family};
use crate::error::{invalid, BviError, Result};
use crate::estimators::{direction_ends, estimate_cross, estimate_gap, estimate_kl_between, estimate_kl_up_to_const, McBudget, Source};
use crate::exec::Exec;
use crate::lmo::{relbo_value, solve_lmo, LmoConfig};
use crate::mixture::Mixture;
use crate::rng::SeedTree;
use crate::stepsize::{
    backtracking_find_step, line_search_baseline, predefined_step, BacktrackState, LineSearchConfig, StepKind,
    StepResult, SurrogateMode,
};
use crate::targets::Target;

/// Floor for the Lipschitz-mode quadratic scale.
const QUAD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEngine {
    Predefined,
    LineSearch,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub family: Family,
    pub variant: Variant,
    pub step_engine: StepEngine,
    pub backtrack: BacktrackState,
    pub line_search: LineSearchConfig,
    pub lmo: LmoConfig,
    /// LMO settings for the plain-VI fit of `q_0`; `lmo` when absent.
    #[serde(default)]
    pub init_lmo: Option<LmoConfig>,
    pub mc: McBudget,
    pub iterations: usize,
    pub seed: u64,
    /// Starts from this component instead of fitting `q_0` by plain VI.
    #[serde(default)]
    pub initial: Option<Component>,
    /// When false, `wall_seconds` is written as 0 so traces are byte-stable.
    pub wall_clock: bool,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            family: Family::Gaussian,
            variant: Variant::Fw,
            step_engine: StepEngine::Adaptive,
            backtrack: BacktrackState::default(),
            line_search: LineSearchConfig::default(),
            lmo: LmoConfig::default(),
            init_lmo: None,
            mc: McBudget::default(),
            iterations: 10,
            seed: 0,
            initial: None,
            wall_clock: true,
            exec: Exec::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.backtrack.validate()?;
        self.lmo.validate()?;
        if let Some(l) = &self.init_lmo {
            l.validate()?;
        }
        self.mc.validate()?;
        if !(self.line_search.b0 >= 0.0 && self.line_search.b0.is_finite()) {
            return invalid("line_search b0 must be non-negative");
        }
        Ok(())
    }
}

/// Final iterate and the full trace of a run.
#[derive(Debug, Clone)]
pub struct BoostOutcome {
    pub mixture: Mixture,
    pub trace: Vec<IterationTrace>,
    /// Step results of iterations `0..iterations`, in order.
    pub steps: Vec<StepResult>,
    pub directions: Vec<DirectionChoice>,
}

/// Called after every row with the iterate it describes.
pub type Observer<'a> = dyn FnMut(&IterationTrace, &Mixture) -> Result<()> + 'a;

trait Oracle {
    /// Returns the next component and the samples spent finding it.
    fn propose(&self, q: Option<&Mixture>, t: i64) -> Result<(Component, usize)>;

    fn merge_duplicates(&self) -> bool {
        false
    }
}

struct SgdOracle<'a> {
    target: &'a dyn Target,
    cfg: &'a RunConfig,
    seeds: &'a SeedTree,
}

impl Oracle for SgdOracle<'_> {
    fn propose(&self, q: Option<&Mixture>, t: i64) -> Result<(Component, usize)> {
        let lmo = match (q, &self.cfg.init_lmo) {
            (None, Some(init)) => init,
            _ => &self.cfg.lmo,
        };
        let out = solve_lmo(q, self.target, self.cfg.family, lmo, self.seeds, t, self.cfg.exec)?;
        Ok((out.component, out.samples_spent))
    }
}

/// Exact argmin over a fixed dictionary. All atoms are scored on the same
/// stream; ties go to the lowest index.
struct AtomOracle<'a> {
    atoms: &'a [Component],
    target: &'a dyn Target,
    cfg: &'a RunConfig,
    seeds: &'a SeedTree,
}

impl Oracle for AtomOracle<'_> {
    fn propose(&self, q: Option<&Mixture>, t: i64) -> Result<(Component, usize)> {
        let (n, _) = self.cfg.mc.at(t);
        let mut best: Option<(f64, usize)> = None;
        for (i, atom) in self.atoms.iter().enumerate() {
            let mut rng = self.seeds.stream("atoms", &[t]);
            let score = match q {
                // the linearized objective <grad KL(q), s>
                Some(m) => estimate_cross(Source::Component(atom), m, self.target, n, &mut rng, self.cfg.exec)?.value,
                None => relbo_value(atom, None, self.target, n, &mut rng, self.cfg.exec)?,
            };
            if best.is_none_or(|(b, _)| score < b) {
                best = Some((score, i));
            }
        }
        let (_, i) = best.ok_or_else(|| BviError::InvalidArgument("empty atom dictionary".into()))?;
        Ok((self.atoms[i].clone(), n * self.atoms.len()))
    }

    fn merge_duplicates(&self) -> bool {
        true
    }
}

/// Runs boosting VI on `target`.
///
/// Emits a `t = -1` row for the plain-VI initialization `q_0` and then one
/// row per iteration. On failure the rows already passed to `observer`
/// remain the partial trace.
pub fn boost(
    target: &dyn Target,
    cfg: &RunConfig,
    evaluator: &dyn Evaluator,
    observer: &mut Observer<'_>,
) -> Result<BoostOutcome> {
    let seeds = SeedTree::new(cfg.seed);
    let oracle = SgdOracle { target, cfg, seeds: &seeds };
    run(target, cfg, &oracle, &seeds, evaluator, observer)
}

/// Boosting with the LMO replaced by an exact search over `atoms`.
/// Duplicate components are merged after every update.
pub fn finite_atom_boost(
    atoms: &[Component],
    target: &dyn Target,
    cfg: &RunConfig,
    evaluator: &dyn Evaluator,
    observer: &mut Observer<'_>,
) -> Result<BoostOutcome> {
    if atoms.is_empty() {
        return invalid("atom dictionary is empty");
    }
    if atoms.iter().any(|a| a.dim() != target.dim()) {
        return invalid("atom and target dimensions differ");
    }
    let seeds = SeedTree::new(cfg.seed);
    let oracle = AtomOracle { atoms, target, cfg, seeds: &seeds };
    run(target, cfg, &oracle, &seeds, evaluator, observer)
}

struct Clock {
    start: Instant,
    paused: f64,
    enabled: bool,
}

impl Clock {
    fn elapsed(&self) -> f64 {
        if self.enabled {
            self.start.elapsed().as_secs_f64() - self.paused
        } else {
            0.0
        }
    }

    /// Runs `f` without charging its time to the run.
    fn excluding<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.paused += t0.elapsed().as_secs_f64();
        out
    }
}

fn direction_samples(variant: Variant, q: &Mixture, n: usize) -> usize {
    match variant {
        Variant::Fw => 0,
        Variant::Pairwise => q.len() * n,
        Variant::Away if q.len() == 1 => 0,
        Variant::Away => (q.len() + 2) * n,
    }
}

fn run(
    target: &dyn Target,
    cfg: &RunConfig,
    oracle: &dyn Oracle,
    seeds: &SeedTree,
    evaluator: &dyn Evaluator,
    observer: &mut Observer<'_>,
) -> Result<BoostOutcome> {
    cfg.validate()?;
    let exec = cfg.exec;
    let mut clock = Clock { start: Instant::now(), paused: 0.0, enabled: cfg.wall_clock };
    // KL(q_k) always uses stream ("kl", [k]) and the budget at k, so the
    // value reported for q_{t+1} is reused as the reference at iteration t+1.
    let kl_of = |q: &Mixture, k: i64| {
        let (n, _) = cfg.mc.at(k);
        estimate_kl_up_to_const(q, target, n, &mut seeds.stream("kl", &[k]), exec)
    };

    let (first, lmo_spent) = match &cfg.initial {
        Some(c) if c.dim() != target.dim() => return invalid("initial component dimension differs from the target"),
        Some(c) => (c.clone(), 0),
        None => oracle.propose(None, -1)?,
    };
    let mut q = Mixture::single(first);
    let mut kl = kl_of(&q, 0)?;
    let mut state = cfg.backtrack;
    let mut total_samples = lmo_spent + kl.samples();

    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut steps = Vec::with_capacity(cfg.iterations);
    let mut directions = Vec::with_capacity(cfg.iterations);
    let init_row = IterationTrace {
        t: -1,
        step_kind: None,
        direction: None,
        gamma: None,
        curvature: (cfg.step_engine == StepEngine::Adaptive).then_some(state.curvature),
        gap: None,
        kl: kl.value,
        kl_std_err: kl.std_err,
        components: q.len(),
        params: q.param_count(),
        samples_spent: total_samples,
        proposals_tried: 0,
        wall_seconds: clock.elapsed(),
        ..Default::default()
    }
    .with_metrics(clock.excluding(|| evaluator.evaluate(&q, -1, seeds, exec))?);
    observer(&init_row, &q)?;
    trace.push(init_row);

    for t in 0..cfg.iterations {
        let ti = t as i64;
        let (n, _) = cfg.mc.at(ti);
        let (s, lmo_spent) = oracle.propose(Some(&q), ti)?;
        let direction = choose_direction(cfg.variant, &q, &s, target, n, seeds, ti, exec)?;
        let gap = estimate_gap(&s, &direction, &q, target, n, &mut seeds.stream("gap", &[ti]), exec)?;
        let mut spent = lmo_spent + direction_samples(cfg.variant, &q, n) + gap.samples_used;

        let step = match cfg.step_engine {
            StepEngine::Predefined => StepResult {
                gamma: predefined_step(t).min(direction.gamma_max),
                curvature: f64::NAN,
                kind: StepKind::Predefined,
                proposals_tried: 0,
                samples_spent: 0,
                proposals: Vec::new(),
            },
            StepEngine::LineSearch => {
                line_search_baseline(&q, &s, &direction, t, &cfg.line_search, target, &cfg.mc, seeds, exec)?
            }
            StepEngine::Adaptive => {
                let quad_scale = match state.mode {
                    SurrogateMode::Curvature => 1.0,
                    SurrogateMode::LipschitzKl => {
                        let ends = direction_ends(&s, &q, &direction)?;
                        spent += n;
                        let d = estimate_kl_between(ends.plus, ends.minus, n, &mut seeds.stream("quad", &[ti]), exec)?;
                        d.max(QUAD_FLOOR)
                    }
                };
                let (step, next) = backtracking_find_step(
                    &state, &q, &s, &direction, kl.value, gap.value, quad_scale, target, t, &cfg.mc, seeds, exec,
                )?;
                state = next;
                step
            }
        };
        spent += step.samples_spent;

        if step.gamma > 0.0 {
            q = q.update(&s, &direction, step.gamma)?;
            if oracle.merge_duplicates() {
                q = q.merge_duplicates();
            }
        } else {
            log::info!("t={t}: no update (gap {:.3e})", gap.value);
        }
        kl = kl_of(&q, ti + 1)?;
        spent += kl.samples();
        total_samples += spent;

        let row = IterationTrace {
            t: ti,
            step_kind: Some(step.kind),
            direction: Some(direction.kind),
            gamma: Some(step.gamma),
            curvature: step.curvature.is_finite().then_some(step.curvature),
            gap: Some(gap.value),
            kl: kl.value,
            kl_std_err: kl.std_err,
            components: q.len(),
            params: q.param_count(),
            samples_spent: total_samples,
            proposals_tried: step.proposals_tried,
            wall_seconds: clock.elapsed(),
            ..Default::default()
        }
        .with_metrics(clock.excluding(|| evaluator.evaluate(&q, ti, seeds, exec))?);
        log::debug!(
            "t={t} {} {} gamma={:.4} kl={:.4} k={}",
            step.kind.as_str(),
            direction.kind.as_str(),
            step.gamma,
            kl.value,
            q.len()
        );
        observer(&row, &q)?;
        trace.push(row);
        steps.push(step);
        directions.push(direction);
    }
    Ok(BoostOutcome { mixture: q, trace, steps, directions })
}

/// Whether a step removed (or emptied) the worst component.
pub fn is_drop_step(kind: DirectionKind, gamma: f64, gamma_max: f64) -> bool {
    match kind {
        DirectionKind::AwayDrop => true,
        DirectionKind::Pairwise => gamma >= gamma_max,
        _ => false,
    }
}
