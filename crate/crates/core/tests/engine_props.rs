use boostvi::density::{Component, Family};
use boostvi::engine::{boost, finite_atom_boost, NoMetrics};
use boostvi::exec::{mean, variance, Exec};
use boostvi::lmo::{relbo_value_at, solve_lmo, LmoConfig, VarParams};
use boostvi::mixture::Mixture;
use boostvi::rng::SeedTree;
use boostvi::stepsize::{BacktrackState, StepKind, SurrogateMode};
use boostvi::targets::GaussianMixtureTarget;
use boostvi::{DirectionKind, Growth, IterationTrace, McBudget, RunConfig, StepEngine, Variant};
use proptest::prelude::*;

fn quiet(_: &IterationTrace, _: &Mixture) -> boostvi::Result<()> {
    Ok(())
}

fn small_config(variant: Variant, engine: StepEngine, seed: u64) -> RunConfig {
    RunConfig {
        family: Family::Laplace,
        variant,
        step_engine: engine,
        backtrack: BacktrackState { curvature: 10.0, mode: SurrogateMode::LipschitzKl, ..Default::default() },
        lmo: LmoConfig { steps: 60, learning_rate: 0.05, restarts: 2, samples_per_step: 16, ..Default::default() },
        mc: McBudget { base_samples: 300, epsilon0: 0.1, growth: Growth::Fixed },
        iterations: 8,
        seed,
        wall_clock: false,
        ..Default::default()
    }
}

fn all_variants() -> [Variant; 3] {
    [Variant::Fw, Variant::Away, Variant::Pairwise]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn identical_config_gives_identical_trace(seed in any::<u64>(), pick in 0usize..3) {
        let target = GaussianMixtureTarget::bimodal(1, 2.0);
        let cfg = RunConfig { iterations: 4, ..small_config(all_variants()[pick], StepEngine::Adaptive, seed) };
        let a = boost(&target, &cfg, &NoMetrics, &mut quiet).unwrap();
        let b = boost(&target, &cfg, &NoMetrics, &mut quiet).unwrap();
        prop_assert_eq!(&a.trace, &b.trace);
        prop_assert_eq!(&a.mixture, &b.mixture);
        let seq = RunConfig { exec: Exec::Sequential, ..cfg };
        let c = boost(&target, &seq, &NoMetrics, &mut quiet).unwrap();
        prop_assert_eq!(&a.trace, &c.trace);
    }
}

#[test]
fn component_count_is_bounded_by_iterations() {
    let target = GaussianMixtureTarget::bimodal(1, 2.0);
    for variant in all_variants() {
        for engine in [StepEngine::Adaptive, StepEngine::Predefined] {
            let out = boost(&target, &small_config(variant, engine, 31), &NoMetrics, &mut quiet).unwrap();
            let mut shrank = false;
            for (row, pair) in out.trace.iter().skip(1).zip(out.steps.iter().zip(&out.directions)) {
                let (step, dir) = pair;
                assert!(row.components as i64 <= row.t + 2, "{variant:?}: {} components at t={}", row.components, row.t);
                assert_eq!(row.params, row.components * 2);
                shrank |= dir.kind == DirectionKind::AwayDrop && step.gamma > 0.0
                    || dir.kind == DirectionKind::Pairwise && step.gamma == dir.gamma_max;
                if shrank {
                    assert!((row.components as i64) < row.t + 2);
                }
            }
        }
    }
}

#[test]
fn curvature_growth_is_bounded_per_call() {
    let target = GaussianMixtureTarget::bimodal(2, 2.0);
    for variant in all_variants() {
        let cfg = small_config(variant, StepEngine::Adaptive, 32);
        let bt = cfg.backtrack;
        let out = boost(&target, &cfg, &NoMetrics, &mut quiet).unwrap();
        let mut carried = bt.curvature;
        let factor = bt.tau.powi(bt.imax as i32 + 1);
        for step in &out.steps {
            assert!(step.curvature <= factor * carried * (1.0 + 1e-12), "{variant:?}: C {} after {}", step.curvature, carried);
            carried = carried.max(step.curvature);
        }
    }
}

#[test]
fn kl_trend_is_non_increasing_over_windows() {
    let target = GaussianMixtureTarget::bimodal(1, 2.0);
    for engine in [StepEngine::Adaptive, StepEngine::Predefined] {
        for seed in [41, 42] {
            let cfg = RunConfig { iterations: 12, ..small_config(Variant::Fw, engine, seed) };
            let out = boost(&target, &cfg, &NoMetrics, &mut quiet).unwrap();
            for w in out.trace.windows(6) {
                let (a, b) = (&w[0], &w[5]);
                let tol = 3.0 * (a.kl_std_err.powi(2) + b.kl_std_err.powi(2)).sqrt();
                assert!(b.kl <= a.kl + tol, "{engine:?} seed {seed}: kl {} at t={} vs {} at t={}", b.kl, b.t, a.kl, a.t);
            }
        }
    }
}

#[test]
fn adaptive_steps_satisfy_their_certificate() {
    let target = GaussianMixtureTarget::bimodal(1, 2.0);
    let out = boost(&target, &small_config(Variant::Away, StepEngine::Adaptive, 43), &NoMetrics, &mut quiet).unwrap();
    for step in &out.steps {
        if let Some(cert) = step.certificate() {
            assert_eq!(step.kind, StepKind::Adaptive);
            assert!(cert.objective <= cert.surrogate);
        }
    }
}

#[test]
fn lmo_result_beats_every_restart_start() {
    let target = GaussianMixtureTarget::bimodal(1, 2.0);
    let q = Mixture::single(Component::new(Family::Laplace, vec![-2.0], vec![1.0]).unwrap());
    let cfg = LmoConfig { steps: 100, restarts: 4, samples_per_step: 16, ..Default::default() };
    let seeds = SeedTree::new(44);
    for t in 0..5 {
        let out = solve_lmo(Some(&q), &target, Family::Laplace, &cfg, &seeds, t, Exec::Parallel).unwrap();
        // per-draw values on the shared selection sample give the standard error
        let mut rng = seeds.stream("lmo-select", &[t]);
        let noise: Vec<Vec<f64>> = (0..4 * cfg.samples_per_step).map(|_| vec![Family::Laplace.standard_noise(&mut rng)]).collect();
        let params = VarParams::from_component(&out.component);
        let per_draw: Vec<f64> = noise
            .iter()
            .map(|e| relbo_value_at(Family::Laplace, &params, std::slice::from_ref(e), Some(&q), &target, Exec::Sequential).unwrap())
            .collect();
        assert!((mean(&per_draw) - out.relbo).abs() < 1e-9);
        let se = (variance(&per_draw) / per_draw.len() as f64).sqrt();
        for init in &out.init_relbo {
            assert!(out.relbo <= init + 2.0 * se, "t={t}: {} vs start {init}", out.relbo);
        }
        let scale = out.component.scale()[0];
        assert!((1e-6..=1e6).contains(&scale));
    }
}

#[test]
fn predefined_weights_follow_the_scalar_recursion() {
    let target = GaussianMixtureTarget::bimodal(1, 2.0);
    let cfg = RunConfig { iterations: 3, ..small_config(Variant::Fw, StepEngine::Predefined, 50) };
    let out = boost(&target, &cfg, &NoMetrics, &mut quiet).unwrap();
    let mut weights = vec![1.0];
    for row in &out.trace[1..] {
        let gamma = row.gamma.unwrap();
        weights.iter_mut().for_each(|w| *w *= 1.0 - gamma);
        weights.push(gamma);
        weights.retain(|w| *w > 0.0);
    }
    let expected = [1.0 / 6.0, 1.0 / 3.0, 0.5];
    assert_eq!(weights.len(), 3);
    for ((got, sim), want) in out.mixture.weights().iter().zip(&weights).zip(expected) {
        assert!((got - sim).abs() <= 1e-12, "{:?} vs {weights:?}", out.mixture.weights());
        assert!((sim - want).abs() <= 1e-12);
    }
}

#[test]
fn two_atoms_reach_their_equal_mixture() {
    let atoms = vec![
        Component::new(Family::Gaussian, vec![-2.0], vec![1.0]).unwrap(),
        Component::new(Family::Gaussian, vec![2.0], vec![1.0]).unwrap(),
    ];
    let target = GaussianMixtureTarget::from_mixture(Mixture::new(atoms.clone(), vec![0.5, 0.5]).unwrap());
    for engine in [StepEngine::Predefined, StepEngine::Adaptive] {
        let cfg = RunConfig {
            family: Family::Gaussian,
            step_engine: engine,
            mc: McBudget { base_samples: 1000, epsilon0: 0.01, growth: Growth::Fixed },
            iterations: 50,
            seed: 51,
            wall_clock: false,
            ..Default::default()
        };
        let out = finite_atom_boost(&atoms, &target, &cfg, &NoMetrics, &mut quiet).unwrap();
        let q = &out.mixture;
        assert_eq!(q.len(), 2, "{engine:?}: {q:?}");
        let w_left = q.components().iter().zip(q.weights()).find(|(c, _)| c.location()[0] < 0.0).unwrap().1;
        assert!((w_left - 0.5).abs() <= 0.05, "{engine:?}: left weight {w_left}");
    }
}
