//! Out-of-sample bound estimates: the penalized dual bound, the greedy
//! policy and its lower bound, the intercept regression and the static
//! deterministic benchmark.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{penalty_increments, BasisSpec, ConditionalMoments};
use crate::error::{Error, Result};
use crate::lsm::{design_matrix, dot, regression_solve, VfaWeights};
use crate::market::{ForwardCurveScenario, InitialCurves, ScenarioSet, StageCurves};
use crate::mdp::{
    feasible_actions, mode_transition, reward, Action, DecisionGraph, OperatingMode, ReducedMode,
};
use crate::pathlp::{eval_objective, solve_path, PathDpResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimateKind {
    Lower,
    Dual,
    Hindsight,
    Static,
}

impl EstimateKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateKind::Lower => "lower",
            EstimateKind::Dual => "dual",
            EstimateKind::Hindsight => "hindsight",
            EstimateKind::Static => "static",
        }
    }
}

/// Sample mean of a value estimator ($M) and its standard error.
///
/// Deterministic values (the static benchmark) carry `path_count = 0` and a
/// zero standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyValueEstimate {
    pub kind: EstimateKind,
    pub mean: f64,
    pub std_error: f64,
    pub path_count: usize,
    pub seed: u64,
}

impl PolicyValueEstimate {
    /// Mean and `sample std / sqrt(n)` of per-path values.
    pub fn from_samples(kind: EstimateKind, samples: &[f64], seed: u64) -> Result<Self> {
        let n = samples.len();
        if n < 2 {
            return Err(Error::domain(format!("an estimate needs at least 2 paths, got {n}")));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        Ok(PolicyValueEstimate {
            kind,
            mean,
            std_error: (var / n as f64).sqrt(),
            path_count: n,
            seed,
        })
    }

    pub fn deterministic(kind: EstimateKind, value: f64) -> Self {
        PolicyValueEstimate {
            kind,
            mean: value,
            std_error: 0.0,
            path_count: 0,
            seed: 0,
        }
    }
}

fn check_seeds(fresh: &ScenarioSet, training_seed: u64) -> Result<()> {
    if fresh.seed == training_seed {
        return Err(Error::config(format!(
            "evaluation seed {} overlaps the training seed",
            fresh.seed
        )));
    }
    Ok(())
}

/// Dual bound of `beta` on fresh paths, using exact conditional expectations
/// in the penalty.
pub fn dual_bound(
    beta: &VfaWeights,
    fresh: &ScenarioSet,
    training_seed: u64,
    spec: &BasisSpec,
    moments: &ConditionalMoments,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Result<PolicyValueEstimate> {
    check_seeds(fresh, training_seed)?;
    let increments = penalty_increments(spec, moments, fresh, graph)?;
    let dp = eval_objective(beta, fresh, spec, &increments, graph, x0)?;
    PolicyValueEstimate::from_samples(EstimateKind::Dual, &dp.initial_values(), fresh.seed)
}

/// Mean perfect-foresight value of `scenarios`.
pub fn hindsight_value(
    scenarios: &ScenarioSet,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Result<PolicyValueEstimate> {
    if scenarios.stages() != graph.stages() {
        return Err(Error::domain("scenarios and plant disagree on the stage count"));
    }
    let stages = graph.stages();
    let values: Vec<f64> = scenarios
        .scenarios
        .par_iter()
        .map(|path| {
            let mut u = vec![0.0; stages * 3];
            solve_path(graph, path, |_, _, _| 0.0, &mut u, None);
            u[x0.index()]
        })
        .collect();
    PolicyValueEstimate::from_samples(EstimateKind::Hindsight, &values, scenarios.seed)
}

/// Greedy action at stage `i` in a choice mode, given the stage-`i` curves.
///
/// Each arc scores its reward plus the discounted conditional expectation of
/// the successor approximation. Successors without an approximation count as
/// zero, except an operating or mothballed plant reaching the last stage,
/// which is worth the salvage value there. Ties go to the first arc.
pub fn greedy_action(
    i: usize,
    mode: ReducedMode,
    curves: &StageCurves<'_>,
    beta: &VfaWeights,
    spec: &BasisSpec,
    moments: &ConditionalMoments,
    graph: &DecisionGraph,
) -> Action {
    let params = graph.params();
    let spot = curves.spot();
    let mut expect = Vec::new();
    let mut best = f64::NEG_INFINITY;
    let mut best_action = Action::Abandon;
    for arc in graph.arcs(i, mode) {
        let cont = if arc.has_vfa_successor(params) {
            let g = arc.next_stage;
            expect.resize(spec.len(g), 0.0);
            moments.expectation_into(spec, g, curves, &mut expect);
            dot(beta.get(g, arc.next_mode), &expect)
        } else if arc.next_mode.has_choice() && arc.next_stage == params.last_stage() {
            params.salvage
        } else {
            0.0
        };
        let v = arc.reward(&spot, params) + arc.continuation_discount * cont;
        if v > best {
            best = v;
            best_action = arc.action;
        }
    }
    best_action
}

/// Counts of one action taken at one stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ActionCount {
    pub stage: usize,
    pub action: Action,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundResult {
    pub estimate: PolicyValueEstimate,
    /// Actions taken in any mode, sorted by stage then first occurrence.
    pub actions: Vec<ActionCount>,
    /// Number of paths abandoning at each stage.
    pub abandonment: Vec<usize>,
}

struct Trajectory {
    value: f64,
    actions: Vec<Action>,
}

fn simulate_greedy(
    path: &ForwardCurveScenario,
    beta: &VfaWeights,
    spec: &BasisSpec,
    moments: &ConditionalMoments,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Trajectory {
    let params = graph.params();
    let mut mode = x0.to_mode(params);
    let mut value = 0.0;
    let mut actions = Vec::with_capacity(params.stages);
    for i in 0..params.stages {
        if mode == OperatingMode::Abandoned {
            break;
        }
        let curves = path.curves(i);
        let action = match ReducedMode::from_mode(mode, params) {
            Some(m) if m.has_choice() => greedy_action(i, m, &curves, beta, spec, moments, graph),
            _ => feasible_actions(i, mode, params).expect("valid stage and mode")[0],
        };
        let r = reward(mode, &curves.spot(), action, params).expect("feasible action");
        value += params.discount_pow(i) * r;
        mode = mode_transition(mode, action, params).expect("feasible action");
        actions.push(action);
    }
    Trajectory { value, actions }
}

/// Value of the greedy policy simulated on the full mode chain over fresh
/// paths, plus action-frequency diagnostics.
pub fn lower_bound(
    beta: &VfaWeights,
    fresh: &ScenarioSet,
    training_seed: u64,
    spec: &BasisSpec,
    moments: &ConditionalMoments,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Result<LowerBoundResult> {
    check_seeds(fresh, training_seed)?;
    let stages = spec.stages();
    if fresh.stages() != stages || graph.stages() != stages {
        return Err(Error::domain("scenarios, basis and plant disagree on the stage count"));
    }
    if !x0.has_choice() {
        return Err(Error::domain("the initial mode must be operational or fully mothballed"));
    }
    beta.check_shape(spec)?;
    if !beta.is_finite() {
        return Err(Error::domain("weights must be finite"));
    }
    let runs: Vec<Trajectory> = fresh
        .scenarios
        .par_iter()
        .map(|p| simulate_greedy(p, beta, spec, moments, graph, x0))
        .collect();
    let values: Vec<f64> = runs.iter().map(|t| t.value).collect();
    let estimate = PolicyValueEstimate::from_samples(EstimateKind::Lower, &values, fresh.seed)?;
    let mut actions: Vec<ActionCount> = Vec::new();
    let mut abandonment = vec![0; stages];
    for run in &runs {
        for (i, a) in run.actions.iter().enumerate() {
            match actions.iter_mut().find(|c| c.stage == i && c.action == *a) {
                Some(c) => c.count += 1,
                None => actions.push(ActionCount {
                    stage: i,
                    action: *a,
                    count: 1,
                }),
            }
        }
        if let Some(i) = run.actions.iter().position(|a| *a == Action::Abandon) {
            abandonment[i] += 1;
        }
    }
    actions.sort_by_key(|c| c.stage);
    Ok(LowerBoundResult {
        estimate,
        actions,
        abandonment,
    })
}

/// Regresses the pathwise values `U_i(x)` on the stage-`i` basis of the same
/// paths, recovering weights with intercepts.
pub fn fit_intercepts(
    table: &PathDpResult,
    spec: &BasisSpec,
    scenarios: &ScenarioSet,
) -> Result<VfaWeights> {
    if table.paths() != scenarios.len() {
        return Err(Error::domain(format!(
            "value table has {} paths, scenarios {}",
            table.paths(),
            scenarios.len()
        )));
    }
    if scenarios.stages() != spec.stages() {
        return Err(Error::domain("scenarios and basis disagree on the stage count"));
    }
    let mut beta = VfaWeights::zeros(spec);
    for i in 1..spec.stages().saturating_sub(1) {
        let design = design_matrix(spec, scenarios, i);
        for mode in ReducedMode::CHOICE {
            let targets = DVector::from_fn(scenarios.len(), |l, _| table.value(l, i, mode));
            let coef = regression_solve(&design, &targets)?;
            beta.get_mut(i, mode).copy_from_slice(coef.as_slice());
        }
    }
    Ok(beta)
}

/// Optimal value when spot prices are replaced by the stage-0 futures prices.
pub fn static_value(initial: &InitialCurves, graph: &DecisionGraph, x0: ReducedMode) -> Result<f64> {
    let stages = graph.stages();
    initial.validate(stages)?;
    let path = ForwardCurveScenario::frozen(initial);
    let mut u = vec![0.0; stages * 3];
    solve_path(graph, &path, |_, _, _| 0.0, &mut u, None);
    Ok(u[x0.index()])
}
