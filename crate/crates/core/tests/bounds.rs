mod common;

use common::Fixture;
use merchant_po::basis::{penalty_increments, BasisFamily, BasisFunction, BasisSpec, ConditionalMoments};
use merchant_po::bounds::{
    dual_bound, fit_intercepts, greedy_action, hindsight_value, lower_bound, static_value,
};
use merchant_po::lsm::{lsm_fit, VfaWeights};
use merchant_po::market::{
    cond_moment, simulate, ForwardCurveScenario, InitialCurves, SyntheticCalibration,
};
use merchant_po::mdp::{
    feasible_actions, mode_transition, reduced_transition, reward, stage_transition, Action,
    DecisionGraph, OperatingMode, PlantParams, ReducedMode,
};
use merchant_po::pathlp::eval_objective;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Perfect-foresight value on the full mode chain.
fn full_chain_value(path: &ForwardCurveScenario, params: &PlantParams, i: usize, mode: OperatingMode) -> f64 {
    if i == params.stages {
        return 0.0;
    }
    let spot = path.spot(i);
    feasible_actions(i, mode, params)
        .unwrap()
        .iter()
        .map(|&a| {
            let next = mode_transition(mode, a, params).unwrap();
            reward(mode, &spot, a, params).unwrap()
                + params.discount * full_chain_value(path, params, i + 1, next)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best total over every feasible action sequence, listed explicitly.
fn enumerate_sequences(path: &ForwardCurveScenario, params: &PlantParams) -> f64 {
    let mut stack = vec![(0usize, OperatingMode::Operational, 0.0f64)];
    let mut best = f64::NEG_INFINITY;
    while let Some((i, mode, value)) = stack.pop() {
        if i == params.stages {
            best = best.max(value);
            continue;
        }
        let spot = path.spot(i);
        for &a in feasible_actions(i, mode, params).unwrap().iter() {
            let r = reward(mode, &spot, a, params).unwrap();
            let next = mode_transition(mode, a, params).unwrap();
            stack.push((i + 1, next, value + params.discount_pow(i) * r));
        }
    }
    best
}

fn random_curves(stages: usize, rng: &mut ChaCha8Rng) -> InitialCurves {
    InitialCurves {
        corn: (0..stages).map(|_| rng.random_range(4.5..7.5)).collect(),
        ethanol: (0..stages).map(|_| rng.random_range(2.0..3.2)).collect(),
        gas: (0..stages).map(|_| rng.random_range(2.5..6.0)).collect(),
    }
}

fn random_weights(spec: &BasisSpec, scale: f64, rng: &mut ChaCha8Rng) -> VfaWeights {
    let mut w = VfaWeights::zeros(spec);
    for k in 0..w.block_count() {
        for v in w.block_mut(k) {
            *v = scale * rng.random_range(-1.0..1.0);
        }
    }
    w
}

struct World {
    params: PlantParams,
    graph: DecisionGraph,
    spec: BasisSpec,
    moments: ConditionalMoments,
    train: merchant_po::market::ScenarioSet,
    fresh: merchant_po::market::ScenarioSet,
}

fn world(stages: usize, initial: &InitialCurves, cal: SyntheticCalibration, family: BasisFamily, paths: usize) -> World {
    let params = PlantParams::ethanol(stages);
    let graph = DecisionGraph::new(&params).unwrap();
    let spec = BasisSpec::new(stages, family).unwrap();
    let loadings = cal.loadings(stages).unwrap();
    let moments = ConditionalMoments::new(&spec, &loadings).unwrap();
    let train = simulate(initial, &loadings, paths, 1).unwrap();
    let fresh = simulate(initial, &loadings, paths, 2).unwrap();
    World { params, graph, spec, moments, train, fresh }
}

#[test]
fn zero_penalty_dual_is_full_chain_hindsight() {
    let w = world(6, &InitialCurves::flat(6, 6.0, 2.6, 4.0), SyntheticCalibration::default(), BasisFamily::Full, 300);
    let zero = VfaWeights::zeros(&w.spec);
    let x0 = ReducedMode::Operational;
    let dual = dual_bound(&zero, &w.fresh, 1, &w.spec, &w.moments, &w.graph, x0).unwrap();
    let hind = hindsight_value(&w.fresh, &w.graph, x0).unwrap();
    let oracle: f64 = w
        .fresh
        .scenarios
        .iter()
        .map(|p| full_chain_value(p, &w.params, 0, OperatingMode::Operational))
        .sum::<f64>()
        / w.fresh.len() as f64;
    assert!((dual.mean - oracle).abs() <= 1e-9 * oracle.abs());
    assert!((hind.mean - oracle).abs() <= 1e-9 * oracle.abs());
    assert_eq!(dual.path_count, 300);
    assert_eq!(dual.seed, 2);
}

#[test]
fn evaluation_seed_must_differ_from_training_seed() {
    let w = world(4, &InitialCurves::flat(4, 6.0, 2.6, 4.0), SyntheticCalibration::default(), BasisFamily::Linear, 10);
    let zero = VfaWeights::zeros(&w.spec);
    let x0 = ReducedMode::Operational;
    assert!(dual_bound(&zero, &w.fresh, 2, &w.spec, &w.moments, &w.graph, x0).is_err());
    assert!(lower_bound(&zero, &w.fresh, 2, &w.spec, &w.moments, &w.graph, x0).is_err());
}

#[test]
fn deterministic_world_values_coincide() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cal = SyntheticCalibration {
        level: 0.0,
        ..Default::default()
    };
    for stages in 2..=5 {
        for _ in 0..8 {
            let initial = random_curves(stages, &mut rng);
            let w = world(stages, &initial, cal.clone(), BasisFamily::Full, 2);
            let x0 = ReducedMode::Operational;
            let frozen = ForwardCurveScenario::frozen(&initial);
            let enumerated = enumerate_sequences(&frozen, &w.params);
            let st = static_value(&initial, &w.graph, x0).unwrap();
            assert!((st - enumerated).abs() <= 1e-12 * enumerated.abs().max(1.0), "{st} vs {enumerated}");

            // Any weights: the penalty vanishes and the dual equals the static value.
            let beta = random_weights(&w.spec, 1.0, &mut rng);
            let dual = dual_bound(&beta, &w.fresh, 1, &w.spec, &w.moments, &w.graph, x0).unwrap();
            assert!((dual.mean - st).abs() <= 1e-12 * st.abs().max(1.0));
            assert_eq!(dual.std_error, 0.0);

            // Intercepts fitted to the hindsight values make the greedy policy optimal.
            let inc = penalty_increments(&w.spec, &w.moments, &w.train, &w.graph).unwrap();
            let table = eval_objective(&VfaWeights::zeros(&w.spec), &w.train, &w.spec, &inc, &w.graph, x0).unwrap();
            let fitted = fit_intercepts(&table, &w.spec, &w.train).unwrap();
            let lower = lower_bound(&fitted, &w.fresh, 1, &w.spec, &w.moments, &w.graph, x0).unwrap();
            assert!((lower.estimate.mean - st).abs() <= 1e-9 * st.abs().max(1.0), "{} vs {st}", lower.estimate.mean);
        }
    }
}

#[test]
fn myopic_policy_is_optimal_on_flat_deterministic_curves() {
    let cal = SyntheticCalibration {
        level: 0.0,
        ..Default::default()
    };
    for (stages, ethanol) in [(3, 2.9), (4, 2.4), (5, 3.1), (5, 2.55)] {
        let initial = InitialCurves::flat(stages, 6.0, ethanol, 4.0);
        let w = world(stages, &initial, cal.clone(), BasisFamily::Linear, 2);
        let x0 = ReducedMode::Operational;
        let zero = VfaWeights::zeros(&w.spec);
        let lower = lower_bound(&zero, &w.fresh, 1, &w.spec, &w.moments, &w.graph, x0).unwrap();
        let st = static_value(&initial, &w.graph, x0).unwrap();
        let enumerated = enumerate_sequences(&ForwardCurveScenario::frozen(&initial), &w.params);
        assert_eq!(lower.estimate.std_error, 0.0);
        assert!((lower.estimate.mean - st).abs() <= 1e-12 * st.abs().max(1.0));
        assert!((enumerated - st).abs() <= 1e-12 * st.abs().max(1.0));
    }
}

/// Score of every feasible action, with continuation expectations computed
/// moment by moment.
fn greedy_oracle(
    i: usize,
    mode: ReducedMode,
    path: &ForwardCurveScenario,
    beta: &VfaWeights,
    spec: &BasisSpec,
    cal: &SyntheticCalibration,
    params: &PlantParams,
) -> Vec<(Action, f64)> {
    let loadings = cal.loadings(params.stages).unwrap();
    let full = mode.to_mode(params);
    let curves = path.curves(i);
    feasible_actions(i, full, params)
        .unwrap()
        .iter()
        .map(|&a| {
            let r = reward(full, &curves.spot(), a, params).unwrap();
            let g = stage_transition(i, full, a, params).unwrap();
            let next = ReducedMode::from_mode(reduced_transition(full, a, params).unwrap(), params).unwrap();
            let cont = if !next.has_choice() || g >= params.stages {
                0.0
            } else if g == params.last_stage() {
                params.salvage
            } else {
                spec.functions(g)
                    .iter()
                    .zip(beta.get(g, next))
                    .map(|(f, b)| {
                        let e = match f {
                            BasisFunction::Constant => 1.0,
                            BasisFunction::Moment(m) => cond_moment(m, g, &curves, &loadings).unwrap(),
                        };
                        b * e
                    })
                    .sum()
            };
            (a, r + params.discount_pow(g - i) * cont)
        })
        .collect()
}

#[test]
fn greedy_action_maximizes_reward_plus_continuation() {
    let cal = SyntheticCalibration::default();
    let stages = 6;
    let w = world(stages, &InitialCurves::flat(stages, 6.0, 2.55, 4.0), cal.clone(), BasisFamily::Full, 30);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for trial in 0..10 {
        let beta = random_weights(&w.spec, 0.5, &mut rng);
        let path = &w.fresh.scenarios[trial];
        for i in 0..stages - 1 {
            for mode in ReducedMode::CHOICE {
                let scores = greedy_oracle(i, mode, path, &beta, &w.spec, &cal, &w.params);
                let best = scores.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.1));
                let got = greedy_action(i, mode, &path.curves(i), &beta, &w.spec, &w.moments, &w.graph);
                let score = scores.iter().find(|s| s.0 == got).expect("feasible").1;
                assert!(score >= best - 1e-9 * best.abs().max(1.0), "stage {i} {mode}: {got} scores {score} < {best}");
            }
        }
    }
}

#[test]
fn greedy_value_never_exceeds_hindsight() {
    let w = world(6, &InitialCurves::flat(6, 6.0, 2.55, 4.0), SyntheticCalibration::default(), BasisFamily::Full, 400);
    let beta = lsm_fit(&w.train, &w.spec, &w.graph).unwrap();
    let x0 = ReducedMode::Operational;
    let lower = lower_bound(&beta, &w.fresh, 1, &w.spec, &w.moments, &w.graph, x0).unwrap();
    let hind = hindsight_value(&w.fresh, &w.graph, x0).unwrap();
    assert!(lower.estimate.mean <= hind.mean + 1e-12);
    let abandoned: usize = lower.abandonment.iter().sum();
    assert!(abandoned <= w.fresh.len());
    // Every path takes exactly one action per stage until it abandons.
    let stage0: usize = lower.actions.iter().filter(|c| c.stage == 0).map(|c| c.count).sum();
    assert_eq!(stage0, w.fresh.len());
}

#[test]
fn intercept_regression_residuals_are_orthogonal_to_the_basis() {
    let f = Fixture::new(5, 200, BasisFamily::Linear, SyntheticCalibration::default(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let beta = random_weights(&f.spec, 0.1, &mut rng);
    let table = eval_objective(&beta, &f.scenarios, &f.spec, &f.increments, &f.graph, ReducedMode::Operational).unwrap();
    let fitted = fit_intercepts(&table, &f.spec, &f.scenarios).unwrap();
    for i in 1..f.params.stages - 1 {
        for mode in ReducedMode::CHOICE {
            let n = f.spec.len(i);
            let mut cross = vec![0.0; n];
            let mut scale = vec![0.0; n];
            for (l, path) in f.scenarios.scenarios.iter().enumerate() {
                let phi = f.spec.evaluate(i, &path.curves(i)).unwrap();
                let fit: f64 = phi.iter().zip(fitted.get(i, mode)).map(|(a, b)| a * b).sum();
                let fit_abs: f64 = phi.iter().zip(fitted.get(i, mode)).map(|(a, b)| (a * b).abs()).sum();
                let resid = table.value(l, i, mode) - fit;
                for b in 0..n {
                    cross[b] += resid * phi[b];
                    scale[b] += phi[b].abs() * (table.value(l, i, mode).abs() + fit_abs);
                }
            }
            for b in 0..n {
                assert!(cross[b].abs() <= 1e-10 * scale[b], "stage {i} {mode} basis {b}: {}", cross[b]);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_is_convex(seed in 0u64..1_000, t in 0.0f64..=1.0, scale in 0.01f64..2.0) {
        let f = Fixture::new(4, 40, BasisFamily::Full, SyntheticCalibration::default(), 8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b1 = random_weights(&f.spec, scale, &mut rng);
        let b2 = random_weights(&f.spec, scale, &mut rng);
        let mut mix = b1.clone();
        for k in 0..mix.block_count() {
            for (m, (x, y)) in mix.block_mut(k).iter_mut().zip(b1.block(k).iter().zip(b2.block(k))) {
                *m = t * x + (1.0 - t) * y;
            }
        }
        let obj = |b: &VfaWeights| {
            eval_objective(b, &f.scenarios, &f.spec, &f.increments, &f.graph, ReducedMode::Operational).unwrap().obj
        };
        let (o1, o2, om) = (obj(&b1), obj(&b2), obj(&mix));
        let rhs = t * o1 + (1.0 - t) * o2;
        prop_assert!(om <= rhs + 1e-8 * rhs.abs().max(1.0), "{om} > {rhs}");
    }
}
