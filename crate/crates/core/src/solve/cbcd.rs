//! Cyclic block coordinate descent over the weight blocks of the
//! preconditioned pathwise LP.

use std::time::Instant;

use serde::Serialize;

use super::bpca::BpcaTransform;
use super::lp::{lp_backend_solve, LpBackend, LpStatus};
use crate::error::{Error, Result};
use crate::lsm::VfaWeights;
use crate::mdp::ReducedMode;
use crate::pathlp::PathLpModel;

/// Partition of the weight blocks `{1..I-2} x {O, M}` into the sets solved
/// together in one sub-LP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    stages: usize,
    /// Weight block indices of each part.
    parts: Vec<Vec<usize>>,
}

impl BlockPartition {
    /// Validates that `parts` are disjoint and cover every block.
    pub fn new(stages: usize, parts: Vec<Vec<(usize, ReducedMode)>>) -> Result<Self> {
        let count = 2 * stages.saturating_sub(2);
        let mut seen = vec![false; count];
        let mut out = Vec::with_capacity(parts.len());
        for part in parts {
            if part.is_empty() {
                return Err(Error::config("partition contains an empty part"));
            }
            let mut idx = Vec::with_capacity(part.len());
            for (i, mode) in part {
                if !(1..stages.saturating_sub(1)).contains(&i) || !mode.has_choice() {
                    return Err(Error::config(format!("({i}, {mode:?}) carries no weights")));
                }
                let k = VfaWeights::block_index(i, mode);
                if std::mem::replace(&mut seen[k], true) {
                    return Err(Error::config(format!("({i}, {mode:?}) appears twice")));
                }
                idx.push(k);
            }
            idx.sort_unstable();
            out.push(idx);
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            let (i, mode) = VfaWeights::block_key(k);
            return Err(Error::config(format!("({i}, {mode:?}) is not covered")));
        }
        Ok(BlockPartition { stages, parts: out })
    }

    /// `parts` contiguous stage ranges over the interior stages (fewer if
    /// there are fewer interior stages), both modes of a stage together.
    pub fn contiguous(stages: usize, parts: usize) -> Result<Self> {
        if parts == 0 {
            return Err(Error::config("partition needs at least one part"));
        }
        let interior = stages.saturating_sub(2);
        let p = parts.min(interior);
        let mut out = Vec::with_capacity(p);
        let mut start = 1;
        for k in 0..p {
            let len = interior / p + usize::from(k < interior % p);
            out.push(
                (start..start + len)
                    .flat_map(|i| ReducedMode::CHOICE.map(|m| (i, m)))
                    .collect(),
            );
            start += len;
        }
        Self::new(stages, out)
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn part(&self, p: usize) -> &[usize] {
        &self.parts[p]
    }

    fn free_mask(&self, p: usize) -> Vec<bool> {
        let mut mask = vec![false; 2 * self.stages.saturating_sub(2)];
        for &k in &self.parts[p] {
            mask[k] = true;
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbcdOptions {
    pub epsilon: f64,
    pub max_sweeps: usize,
    /// Optional box `|beta'| <= bound` on the transformed weights.
    pub beta_bound: Option<f64>,
}

impl Default for CbcdOptions {
    fn default() -> Self {
        CbcdOptions {
            epsilon: 1e-3,
            max_sweeps: 50,
            beta_bound: None,
        }
    }
}

/// One sub-LP of the sweep log. `objective` is `OBJ` after the update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep: usize,
    pub block: usize,
    pub sub_lp_objective: f64,
    pub objective: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CbcdResult {
    /// Weights in the original (unrotated) coordinates.
    pub beta: VfaWeights,
    pub beta_transformed: VfaWeights,
    pub initial_objective: f64,
    pub objective: f64,
    /// `OBJ` at the end of each sweep.
    pub sweep_objectives: Vec<f64>,
    pub converged: bool,
    pub log: Vec<SweepRow>,
}

/// Allowed increase of `OBJ` between sweeps before descent is deemed broken.
fn descent_slack(obj: f64) -> f64 {
    1e-9 * obj.abs().max(1.0)
}

/// Runs CBCD on the preconditioned `model` starting from `beta0` (original
/// coordinates). `OBJ` is evaluated by the per-path recursion on the model.
pub fn cbcd(
    model: &PathLpModel,
    transform: &BpcaTransform,
    partition: &BlockPartition,
    beta0: &VfaWeights,
    options: &CbcdOptions,
    backend: &dyn LpBackend,
) -> Result<CbcdResult> {
    if !(options.epsilon > 0.0) {
        return Err(Error::config("epsilon must be positive"));
    }
    if partition.stages() != model.stages {
        return Err(Error::domain("partition and model disagree on the stage count"));
    }
    if beta0.stages() != model.stages || !beta0.is_finite() {
        return Err(Error::domain("initial weights must be finite and match the model"));
    }
    let mut beta = transform.to_transformed(beta0);
    let mut u = model.tightest_u(&beta);
    let initial = model.objective(&u);
    let mut prev = initial;
    let mut log = Vec::new();
    let mut sweep_objectives = Vec::new();
    let mut converged = false;
    for sweep in 1..=options.max_sweeps {
        for p in 0..partition.len() {
            let started = Instant::now();
            let mask = partition.free_mask(p);
            let mut lp = model.to_lp(&mask, &beta, options.beta_bound);
            let mut start = u.clone();
            for &k in partition.part(p) {
                start.extend_from_slice(beta.block(k));
            }
            lp.start = Some(start);
            let sol = match lp_backend_solve(&lp, backend) {
                Ok(s) if s.status == LpStatus::Optimal => s,
                Ok(s) => {
                    return Err(Error::Aborted {
                        log,
                        source: Box::new(Error::Solver(format!(
                            "sub-problem {p} of sweep {sweep} ended with status {:?}",
                            s.status
                        ))),
                    })
                }
                Err(e) => {
                    return Err(Error::Aborted {
                        log,
                        source: Box::new(e),
                    })
                }
            };
            let mut col = model.u_columns();
            for &k in partition.part(p) {
                let block = beta.block_mut(k);
                block.copy_from_slice(&sol.primal[col..col + block.len()]);
                col += block.len();
            }
            u = model.tightest_u(&beta);
            let objective = model.objective(&u);
            log.push(SweepRow {
                sweep,
                block: p,
                sub_lp_objective: sol.objective,
                objective,
                wall_seconds: started.elapsed().as_secs_f64(),
            });
        }
        let obj = model.objective(&u);
        if obj > prev + descent_slack(prev) {
            return Err(Error::Aborted {
                log,
                source: Box::new(Error::numeric(format!(
                    "objective rose from {prev} to {obj} in sweep {sweep}"
                ))),
            });
        }
        sweep_objectives.push(obj);
        let done = (obj - prev).abs() <= options.epsilon;
        prev = obj;
        if done {
            converged = true;
            break;
        }
    }
    Ok(CbcdResult {
        beta: transform.to_original(&beta),
        beta_transformed: beta,
        initial_objective: initial,
        objective: prev,
        sweep_objectives,
        converged,
        log,
    })
}

/// Optimum of the full LP over all `U` and all weights.
#[derive(Debug, Clone)]
pub struct MonolithicSolution {
    /// Weights in the model's own coordinates.
    pub beta: VfaWeights,
    pub u: Vec<f64>,
    pub objective: f64,
}

/// Solves the whole pathwise LP in one backend call.
pub fn solve_monolithic(
    model: &PathLpModel,
    template: &VfaWeights,
    beta_bound: Option<f64>,
    backend: &dyn LpBackend,
) -> Result<MonolithicSolution> {
    let mask = vec![true; model.g_blocks.len()];
    let lp = model.to_lp(&mask, template, beta_bound);
    let sol = lp_backend_solve(&lp, backend)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Solver(format!("pathwise LP ended with status {:?}", sol.status)));
    }
    let mut beta = template.clone();
    let mut col = model.u_columns();
    for k in 0..beta.block_count() {
        let block = beta.block_mut(k);
        block.copy_from_slice(&sol.primal[col..col + block.len()]);
        col += block.len();
    }
    Ok(MonolithicSolution {
        beta,
        u: sol.primal[..model.u_columns()].to_vec(),
        objective: sol.objective,
    })
}
