//! Pipeline orchestration: shared scenarios, per-method training and bound
//! estimation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use merchant_po::basis::{penalty_increments, BasisSpec, ConditionalMoments};
use merchant_po::bounds::{
    dual_bound, fit_intercepts, lower_bound, static_value, EstimateKind,
    LowerBoundResult, PolicyValueEstimate,
};
use merchant_po::lsm::{lsm_fit, VfaWeights};
use merchant_po::market::{simulate, FactorLoadings, ScenarioSet};
use merchant_po::mdp::{DecisionGraph, ReducedMode};
use merchant_po::pathlp::{build_plp, eval_objective};
use merchant_po::solve::{bpca, cbcd, BlockPartition, CbcdOptions, CbcdResult, LpBackend};
use merchant_po::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::instance::InstanceSpec;
use crate::report::{
    AbandonRow, ActionRow, BoundRow, GapRow, RatioRow, RunReport, SweepLogRow, TimingRow,
    TrainingRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lsm,
    Po,
    ZeroPenalty,
    Static,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Lsm, Method::Po, Method::ZeroPenalty, Method::Static];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Lsm => "lsm",
            Method::Po => "po",
            Method::ZeroPenalty => "zero_penalty",
            Method::Static => "static",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Tags an error with the instance and phase it came from.
pub fn tag<T>(instance: &str, phase: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Phase {
        instance: instance.to_string(),
        phase,
        source: Box::new(e),
    })
}

/// Objects shared by every method of one instance.
#[derive(Debug, Clone)]
pub struct Context {
    pub instance: InstanceSpec,
    pub graph: DecisionGraph,
    pub loadings: FactorLoadings,
    pub spec: BasisSpec,
    pub moments: ConditionalMoments,
}

impl Context {
    pub fn new(instance: &InstanceSpec) -> Result<Self> {
        let id = instance.id.as_str();
        tag(id, "setup", instance.validate())?;
        let graph = tag(id, "setup", DecisionGraph::new(&instance.plant))?;
        let loadings = tag(id, "setup", instance.loadings())?;
        let spec = tag(id, "setup", BasisSpec::new(instance.stages(), instance.basis))?;
        let moments = tag(id, "setup", ConditionalMoments::new(&spec, &loadings))?;
        Ok(Context {
            instance: instance.clone(),
            graph,
            loadings,
            spec,
            moments,
        })
    }

    fn id(&self) -> &str {
        &self.instance.id
    }

    pub fn x0(&self) -> ReducedMode {
        self.instance.initial_mode
    }

    pub fn training(&self) -> Result<ScenarioSet> {
        let i = &self.instance;
        tag(self.id(), "simulate", simulate(&i.initial, &self.loadings, i.train_paths, i.train_seed))
    }

    pub fn evaluation(&self) -> Result<ScenarioSet> {
        let i = &self.instance;
        tag(self.id(), "simulate", simulate(&i.initial, &self.loadings, i.eval_paths, i.eval_seed))
    }

    /// `OBJ(beta)` on `scenarios`.
    pub fn objective(&self, beta: &VfaWeights, scenarios: &ScenarioSet) -> Result<f64> {
        let incr = penalty_increments(&self.spec, &self.moments, scenarios, &self.graph)?;
        Ok(eval_objective(beta, scenarios, &self.spec, &incr, &self.graph, self.x0())?.obj)
    }
}

/// Output of the pathwise optimization method on the training paths.
#[derive(Debug, Clone)]
pub struct PoFit {
    /// Weights of the dual penalty.
    pub plp: VfaWeights,
    /// Weights with intercepts, for the greedy policy.
    pub policy: VfaWeights,
    pub cbcd: CbcdResult,
    pub ranks: Vec<usize>,
    pub timing: Vec<(&'static str, f64)>,
}

/// PLP assembly, block PCA, CBCD from zero weights and the intercept regression.
pub fn fit_po(ctx: &Context, train: &ScenarioSet, backend: &dyn LpBackend) -> Result<PoFit> {
    let id = ctx.id();
    let s = &ctx.instance.solver;
    let mut timing = Vec::new();
    let t = Instant::now();
    let incr = tag(id, "plp", penalty_increments(&ctx.spec, &ctx.moments, train, &ctx.graph))?;
    let model = tag(id, "plp", build_plp(train, &ctx.spec, &incr, &ctx.graph, ctx.x0()))?;
    timing.push(("plp", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let (pre, transform) = tag(id, "bpca", bpca(&model))?;
    timing.push(("bpca", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let partition = tag(id, "cbcd", BlockPartition::contiguous(ctx.instance.stages(), s.blocks))?;
    let options = CbcdOptions {
        epsilon: s.epsilon,
        max_sweeps: s.max_sweeps,
        beta_bound: s.beta_bound,
    };
    let zero = VfaWeights::zeros(&ctx.spec);
    let result = tag(id, "cbcd", cbcd(&pre, &transform, &partition, &zero, &options, backend))?;
    timing.push(("cbcd", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let table = tag(
        id,
        "regression",
        eval_objective(&result.beta, train, &ctx.spec, &incr, &ctx.graph, ctx.x0()),
    )?;
    let policy = tag(id, "regression", fit_intercepts(&table, &ctx.spec, train))?;
    timing.push(("regression", t.elapsed().as_secs_f64()));
    Ok(PoFit {
        plp: result.beta.clone(),
        policy,
        ranks: transform.ranks.clone(),
        cbcd: result,
        timing,
    })
}

pub fn fit_lsm(ctx: &Context, train: &ScenarioSet) -> Result<VfaWeights> {
    tag(ctx.id(), "lsm", lsm_fit(train, &ctx.spec, &ctx.graph))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub dual: PolicyValueEstimate,
    pub lower: LowerBoundResult,
    pub dual_seconds: f64,
    pub lower_seconds: f64,
}

/// Dual bound under `dual_beta` and greedy lower bound under `policy_beta`,
/// both on the evaluation paths.
pub fn evaluate(
    ctx: &Context,
    eval: &ScenarioSet,
    dual_beta: &VfaWeights,
    policy_beta: &VfaWeights,
) -> Result<Evaluation> {
    let id = ctx.id();
    let train_seed = ctx.instance.train_seed;
    let t = Instant::now();
    let dual = tag(
        id,
        "dual_bound",
        dual_bound(dual_beta, eval, train_seed, &ctx.spec, &ctx.moments, &ctx.graph, ctx.x0()),
    )?;
    let dual_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let lower = tag(
        id,
        "lower_bound",
        lower_bound(policy_beta, eval, train_seed, &ctx.spec, &ctx.moments, &ctx.graph, ctx.x0()),
    )?;
    Ok(Evaluation {
        dual,
        lower,
        dual_seconds,
        lower_seconds: t.elapsed().as_secs_f64(),
    })
}

/// Runs `methods` (in canonical order, duplicates ignored) on shared training
/// and evaluation paths.
pub fn run_pipeline(
    instance: &InstanceSpec,
    methods: &[Method],
    backend: &dyn LpBackend,
) -> Result<RunReport> {
    let ctx = Context::new(instance)?;
    let id = instance.id.clone();
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let mut report = RunReport::new(&id);
    let needs_paths = methods.iter().any(|m| *m != Method::Static);
    let train_needed = methods.iter().any(|m| matches!(m, Method::Lsm | Method::Po));
    let train = if train_needed { Some(ctx.training()?) } else { None };
    let eval = if needs_paths { Some(ctx.evaluation()?) } else { None };
    for method in methods {
        let fitted = match method {
            Method::Lsm => {
                let train = train.as_ref().expect("training paths");
                let t = Instant::now();
                let beta = fit_lsm(&ctx, train)?;
                report.timing.push(TimingRow::new(&id, method, "lsm", t.elapsed().as_secs_f64()));
                let obj = tag(&id, "lsm", ctx.objective(&beta, train))?;
                report.training.push(TrainingRow::new(&id, method, "train_objective", obj));
                Some((beta.clone(), beta))
            }
            Method::Po => {
                let train = train.as_ref().expect("training paths");
                let fit = fit_po(&ctx, train, backend)?;
                for (phase, secs) in &fit.timing {
                    report.timing.push(TimingRow::new(&id, method, phase, *secs));
                }
                let c = &fit.cbcd;
                let rank: usize = fit.ranks.iter().sum();
                for (quantity, value) in [
                    ("initial_objective", c.initial_objective),
                    ("train_objective", c.objective),
                    ("sweeps", c.sweep_objectives.len() as f64),
                    ("converged", if c.converged { 1.0 } else { 0.0 }),
                    ("transformed_rank", rank as f64),
                ] {
                    report.training.push(TrainingRow::new(&id, method, quantity, value));
                }
                for row in &c.log {
                    report.sweeps.push(SweepLogRow {
                        instance: id.clone(),
                        sweep: row.sweep,
                        block: row.block,
                        sub_lp_objective: row.sub_lp_objective,
                        objective: row.objective,
                    });
                    report.timing.push(TimingRow {
                        instance: id.clone(),
                        method: method.to_string(),
                        phase: format!("cbcd_sweep{}_block{}", row.sweep, row.block),
                        seconds: row.wall_seconds,
                    });
                }
                Some((fit.plp, fit.policy))
            }
            Method::ZeroPenalty => {
                let zero = VfaWeights::zeros(&ctx.spec);
                Some((zero.clone(), zero))
            }
            Method::Static => {
                let t = Instant::now();
                let v = tag(&id, "static", static_value(&instance.initial, &ctx.graph, ctx.x0()))?;
                report.timing.push(TimingRow::new(&id, method, "static", t.elapsed().as_secs_f64()));
                report.bounds.push(BoundRow::new(
                    &id,
                    method,
                    &PolicyValueEstimate::deterministic(EstimateKind::Static, v),
                ));
                None
            }
        };
        if let Some((dual_beta, policy_beta)) = fitted {
            let eval = eval.as_ref().expect("evaluation paths");
            let ev = evaluate(&ctx, eval, &dual_beta, &policy_beta)?;
            report.timing.push(TimingRow::new(&id, method, "dual_bound", ev.dual_seconds));
            report.timing.push(TimingRow::new(&id, method, "lower_bound", ev.lower_seconds));
            report.bounds.push(BoundRow::new(&id, method, &ev.dual));
            report.bounds.push(BoundRow::new(&id, method, &ev.lower.estimate));
            for c in &ev.lower.actions {
                report.actions.push(ActionRow {
                    instance: id.clone(),
                    method: method.to_string(),
                    stage: c.stage,
                    action: c.action.to_string(),
                    count: c.count,
                });
            }
            for (stage, count) in ev.lower.abandonment.iter().enumerate() {
                report.abandonment.push(AbandonRow {
                    instance: id.clone(),
                    method: method.to_string(),
                    stage,
                    count: *count,
                });
            }
            report.gaps.push(GapRow::new(&id, method, ev.dual.mean, ev.lower.estimate.mean));
        }
    }
    if let (Some(po), Some(lsm)) = (report.dual(Method::Po), report.dual(Method::Lsm)) {
        report.ratios.push(RatioRow {
            instance: id.clone(),
            po_dual: po.mean,
            lsm_dual: lsm.mean,
            ratio_percent: 100.0 * po.mean / lsm.mean,
        });
    }
    Ok(report)
}
