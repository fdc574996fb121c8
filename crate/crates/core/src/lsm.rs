//! Value function approximation weights, least-squares regression and the
//! regress-later least squares Monte Carlo baseline.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::market::ScenarioSet;
use crate::mdp::{DecisionGraph, ReducedMode};

/// Basis weights `beta[i][x][b]` for interior stages `i` and modes `x`
/// admitting a choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VfaWeights {
    stages: usize,
    /// Block `(i, x)` lives at index `(i - 1) * 2 + x`.
    blocks: Vec<Vec<f64>>,
}

impl VfaWeights {
    pub fn zeros(spec: &BasisSpec) -> Self {
        let stages = spec.stages();
        let mut blocks = Vec::new();
        for i in 1..stages.saturating_sub(1) {
            for _ in ReducedMode::CHOICE {
                blocks.push(vec![0.0; spec.len(i)]);
            }
        }
        VfaWeights { stages, blocks }
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Number of `(stage, mode)` blocks.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn block_index(i: usize, mode: ReducedMode) -> usize {
        debug_assert!(i >= 1 && mode.has_choice());
        (i - 1) * ReducedMode::CHOICE.len() + mode.index()
    }

    pub fn block_key(index: usize) -> (usize, ReducedMode) {
        (index / 2 + 1, ReducedMode::CHOICE[index % 2])
    }

    pub fn get(&self, i: usize, mode: ReducedMode) -> &[f64] {
        &self.blocks[Self::block_index(i, mode)]
    }

    pub fn get_mut(&mut self, i: usize, mode: ReducedMode) -> &mut [f64] {
        &mut self.blocks[Self::block_index(i, mode)]
    }

    pub fn block(&self, index: usize) -> &[f64] {
        &self.blocks[index]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.blocks[index]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }

    /// Checks that the block shapes match `spec`.
    pub fn check_shape(&self, spec: &BasisSpec) -> Result<()> {
        let want = VfaWeights::zeros(spec);
        let same = self.stages == want.stages
            && self.blocks.len() == want.blocks.len()
            && self.blocks.iter().zip(&want.blocks).all(|(a, b)| a.len() == b.len());
        if !same {
            return Err(Error::domain("weight vector does not match the basis specification"));
        }
        Ok(())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.blocks.concat()
    }

    /// Value `sum_b beta[i][x][b] * values[b]`.
    pub fn dot(&self, i: usize, mode: ReducedMode, values: &[f64]) -> f64 {
        dot(self.get(i, mode), values)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum-norm least-squares solution of `design * coef ~ targets`.
///
/// Singular values below `max(L, B) * eps * sigma_max` are treated as zero,
/// so rank-deficient designs return the minimum-norm coefficients.
pub fn regression_solve(design: &DMatrix<f64>, targets: &DVector<f64>) -> Result<DVector<f64>> {
    if design.nrows() == 0 {
        return Err(Error::domain("regression needs at least one observation"));
    }
    if design.nrows() != targets.len() {
        return Err(Error::domain(format!(
            "design has {} rows but {} targets",
            design.nrows(),
            targets.len()
        )));
    }
    if design.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("regression inputs must be finite"));
    }
    if design.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    let svd = design.clone().svd(true, true);
    let sigma_max = svd.singular_values.max();
    let tol = sigma_max * f64::EPSILON * design.nrows().max(design.ncols()) as f64;
    svd.solve(targets, tol)
        .map_err(|e| Error::numeric(format!("least-squares solve failed: {e}")))
}

/// Stage-`i` basis values of every path, one row per path.
pub(crate) fn design_matrix(spec: &BasisSpec, scenarios: &ScenarioSet, i: usize) -> DMatrix<f64> {
    let b = spec.len(i);
    let rows: Vec<Vec<f64>> = scenarios
        .scenarios
        .par_iter()
        .map(|p| {
            let mut row = vec![0.0; b];
            spec.evaluate_into(i, &p.curves(i), &mut row);
            row
        })
        .collect();
    DMatrix::from_fn(rows.len(), b, |l, k| rows[l][k])
}

/// Regress-later LSM.
///
/// Moving backward from the last interior stage, the realized value of each
/// path at `(i, x)` is the best immediate reward plus the discounted
/// approximation of the successor state, evaluated on the realized successor
/// curves; those values are regressed on the stage-`i` basis.
pub fn lsm_fit(
    scenarios: &ScenarioSet,
    spec: &BasisSpec,
    graph: &DecisionGraph,
) -> Result<VfaWeights> {
    let stages = spec.stages();
    if scenarios.stages() != stages || graph.stages() != stages {
        return Err(Error::domain("scenarios, basis and plant disagree on the stage count"));
    }
    let params = graph.params();
    let mut beta = VfaWeights::zeros(spec);
    if stages < 3 {
        return Ok(beta);
    }
    for i in (1..stages - 1).rev() {
        let design = design_matrix(spec, scenarios, i);
        for mode in ReducedMode::CHOICE {
            let targets: Vec<f64> = scenarios
                .scenarios
                .par_iter()
                .map(|p| {
                    let spot = p.spot(i);
                    let mut best = f64::NEG_INFINITY;
                    let mut phi = Vec::new();
                    for arc in graph.arcs(i, mode) {
                        let g = arc.next_stage;
                        let cont = if arc.has_vfa_successor(params) {
                            phi.resize(spec.len(g), 0.0);
                            spec.evaluate_into(g, &p.curves(g), &mut phi);
                            beta.dot(g, arc.next_mode, &phi)
                        } else if arc.next_mode.has_choice() {
                            params.salvage
                        } else {
                            0.0
                        };
                        let v = arc.reward(&spot, params) + arc.continuation_discount * cont;
                        if v > best {
                            best = v;
                        }
                    }
                    best
                })
                .collect();
            let coef = regression_solve(&design, &DVector::from_vec(targets))?;
            beta.get_mut(i, mode).copy_from_slice(coef.as_slice());
        }
    }
    Ok(beta)
}
