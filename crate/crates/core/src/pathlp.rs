//! Pathwise linear program: per-path penalized dynamic programs, assembly of
//! the sparse constraint system `Q U + G beta >= r`, and the objective
//! `OBJ(beta)`.

use rayon::prelude::*;

use crate::basis::{BasisSpec, PenaltyIncrementTable};
use crate::error::{Error, Result};
use crate::lsm::{dot, VfaWeights};
use crate::market::{ForwardCurveScenario, ScenarioSet};
use crate::mdp::{Action, DecisionGraph, ReducedMode, Transition};
use crate::solve::lp::{LpProblem, Sense};

/// Solves the reduced-chain dynamic program of one path.
///
/// `penalty(i, x, arc)` is subtracted from the reward of each arc. `values`
/// receives `U[i][x]` laid out `[stage][mode]`; `policy`, when given,
/// receives the index of the maximizing arc (first in canonical order on ties).
pub(crate) fn solve_path<P>(
    graph: &DecisionGraph,
    path: &ForwardCurveScenario,
    mut penalty: P,
    values: &mut [f64],
    mut policy: Option<&mut [usize]>,
) where
    P: FnMut(usize, ReducedMode, &Transition) -> f64,
{
    let stages = graph.stages();
    let params = graph.params();
    debug_assert_eq!(values.len(), stages * 3);
    for i in (0..stages).rev() {
        let spot = path.spot(i);
        for mode in ReducedMode::ALL {
            let mut best = f64::NEG_INFINITY;
            let mut best_k = 0;
            for (k, arc) in graph.arcs(i, mode).iter().enumerate() {
                let cont = if arc.next_stage < stages {
                    values[arc.next_stage * 3 + arc.next_mode.index()]
                } else {
                    0.0
                };
                let v = arc.reward(&spot, params) - penalty(i, mode, arc)
                    + arc.continuation_discount * cont;
                if v > best {
                    best = v;
                    best_k = k;
                }
            }
            values[i * 3 + mode.index()] = best;
            if let Some(p) = policy.as_deref_mut() {
                p[i * 3 + mode.index()] = best_k;
            }
        }
    }
}

fn penalty_fn<'a>(
    graph: &'a DecisionGraph,
    beta: &'a VfaWeights,
    increments: &'a PenaltyIncrementTable,
    l: usize,
) -> impl FnMut(usize, ReducedMode, &Transition) -> f64 + 'a {
    let params = graph.params();
    move |i, mode, arc| {
        if !mode.has_choice() || !arc.has_vfa_successor(params) {
            return 0.0;
        }
        let delta = increments
            .segment(l, i, arc.next_stage)
            .expect("increment table covers every penalized arc");
        dot(beta.get(arc.next_stage, arc.next_mode), delta)
    }
}

/// Per-path value tables `U[l][i][x]` and the sample-average objective.
#[derive(Debug, Clone)]
pub struct PathDpResult {
    stages: usize,
    values: Vec<f64>,
    initial_mode: ReducedMode,
    pub obj: f64,
}

impl PathDpResult {
    pub fn paths(&self) -> usize {
        self.values.len() / (self.stages * 3)
    }

    pub fn value(&self, l: usize, i: usize, mode: ReducedMode) -> f64 {
        self.values[(l * self.stages + i) * 3 + mode.index()]
    }

    /// `U_0(x_0)` of every path.
    pub fn initial_values(&self) -> Vec<f64> {
        (0..self.paths())
            .map(|l| self.value(l, 0, self.initial_mode))
            .collect()
    }
}

fn check_inputs(
    beta: &VfaWeights,
    scenarios: &ScenarioSet,
    spec: &BasisSpec,
    increments: &PenaltyIncrementTable,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Result<()> {
    let stages = spec.stages();
    if scenarios.stages() != stages || graph.stages() != stages || increments.stages() != stages {
        return Err(Error::domain("scenarios, basis, increments and plant disagree on stages"));
    }
    if increments.paths() != scenarios.len() {
        return Err(Error::domain(format!(
            "{} increment rows for {} paths",
            increments.paths(),
            scenarios.len()
        )));
    }
    if !x0.has_choice() {
        return Err(Error::domain("the initial mode must be operational or fully mothballed"));
    }
    beta.check_shape(spec)?;
    if !beta.is_finite() {
        return Err(Error::domain("weights must be finite"));
    }
    Ok(())
}

/// `OBJ(beta)`: mean over paths of the penalized perfect-foresight value.
pub fn eval_objective(
    beta: &VfaWeights,
    scenarios: &ScenarioSet,
    spec: &BasisSpec,
    increments: &PenaltyIncrementTable,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Result<PathDpResult> {
    check_inputs(beta, scenarios, spec, increments, graph, x0)?;
    let stages = graph.stages();
    let per_path: Vec<Vec<f64>> = scenarios
        .scenarios
        .par_iter()
        .enumerate()
        .map(|(l, path)| {
            let mut values = vec![0.0; stages * 3];
            solve_path(graph, path, penalty_fn(graph, beta, increments, l), &mut values, None);
            values
        })
        .collect();
    let values = per_path.concat();
    let mut result = PathDpResult {
        stages,
        values,
        initial_mode: x0,
        obj: 0.0,
    };
    result.obj = mean(&result.initial_values());
    Ok(result)
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Maximizing action of the penalized dynamic program of path `l` at every
/// stage and reduced mode, indexed `[stage][mode]`.
pub fn extract_policy_dp(
    beta: &VfaWeights,
    l: usize,
    scenarios: &ScenarioSet,
    spec: &BasisSpec,
    increments: &PenaltyIncrementTable,
    graph: &DecisionGraph,
) -> Result<Vec<[Action; 3]>> {
    check_inputs(beta, scenarios, spec, increments, graph, ReducedMode::Operational)?;
    let path = scenarios
        .scenarios
        .get(l)
        .ok_or_else(|| Error::domain(format!("path {l} out of range")))?;
    let stages = graph.stages();
    let mut values = vec![0.0; stages * 3];
    let mut policy = vec![0; stages * 3];
    solve_path(
        graph,
        path,
        penalty_fn(graph, beta, increments, l),
        &mut values,
        Some(&mut policy),
    );
    Ok((0..stages)
        .map(|i| {
            ReducedMode::ALL.map(|m| graph.arcs(i, m)[policy[i * 3 + m.index()]].action)
        })
        .collect())
}

/// Location of one constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowKey {
    pub path: usize,
    pub stage: usize,
    pub mode: ReducedMode,
    pub action: Action,
}

/// Sparse `Q` row: `+1` on its own `U` column and, unless the row belongs to
/// the last stage, `-delta^(g-i)` on the successor column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QRow {
    pub own: usize,
    pub next: Option<(usize, f64)>,
}

/// One dense `G` block: the rows whose penalty loads on the weights of
/// `(stage, mode)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GBlock {
    pub stage: usize,
    pub mode: ReducedMode,
    pub rows: Vec<usize>,
    pub width: usize,
    /// Row-major `rows.len() x width`.
    pub values: Vec<f64>,
}

impl GBlock {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.width..(k + 1) * self.width]
    }

    /// `G^T G` accumulated with compensated dot products.
    pub fn gram(&self) -> Vec<f64> {
        let n = self.width;
        let mut out = vec![0.0; n * n];
        let mut col_a = Vec::with_capacity(self.rows.len());
        let mut col_b = Vec::with_capacity(self.rows.len());
        for a in 0..n {
            col_a.clear();
            col_a.extend((0..self.rows.len()).map(|k| self.values[k * n + a]));
            for b in a..n {
                col_b.clear();
                col_b.extend((0..self.rows.len()).map(|k| self.values[k * n + b]));
                let v = crate::solve::eigen::compensated_dot(&col_a, &col_b);
                out[a * n + b] = v;
                out[b * n + a] = v;
            }
        }
        out
    }
}

/// Assembled pathwise LP `min (1/L) sum_l U^l_0(x_0)` s.t. `Q U + G beta >= r`,
/// all variables free.
#[derive(Debug, Clone)]
pub struct PathLpModel {
    pub stages: usize,
    pub paths: usize,
    pub initial_mode: ReducedMode,
    pub q_rows: Vec<QRow>,
    pub rhs: Vec<f64>,
    pub row_keys: Vec<RowKey>,
    /// Indexed like [`VfaWeights`] blocks.
    pub g_blocks: Vec<GBlock>,
    u_per_path: usize,
}

impl PathLpModel {
    /// Number of `U` columns.
    pub fn u_columns(&self) -> usize {
        self.paths * self.u_per_path
    }

    /// Number of `beta` columns.
    pub fn beta_columns(&self) -> usize {
        self.g_blocks.iter().map(|b| b.width).sum()
    }

    pub fn rows(&self) -> usize {
        self.rhs.len()
    }

    /// `U` column of `(l, i, x)`; stage 0 only has a column for the initial mode.
    pub fn u_index(&self, l: usize, i: usize, mode: ReducedMode) -> Option<usize> {
        if l >= self.paths || i >= self.stages {
            return None;
        }
        if i == 0 {
            return (mode == self.initial_mode).then_some(l * self.u_per_path);
        }
        Some(l * self.u_per_path + 1 + (i - 1) * 3 + mode.index())
    }

    /// Column of `beta[i][x][b]`, numbered after all `U` columns.
    pub fn beta_index(&self, i: usize, mode: ReducedMode, b: usize) -> Option<usize> {
        if !(1..self.stages.saturating_sub(1)).contains(&i) || !mode.has_choice() {
            return None;
        }
        let block = VfaWeights::block_index(i, mode);
        if b >= self.g_blocks[block].width {
            return None;
        }
        let before: usize = self.g_blocks[..block].iter().map(|g| g.width).sum();
        Some(self.u_columns() + before + b)
    }

    pub fn row_index(&self, key: &RowKey) -> Option<usize> {
        self.row_keys.iter().position(|k| k == key)
    }

    /// Row activity `(Q U + G beta)` for the given column values.
    pub fn activity(&self, u: &[f64], beta: &VfaWeights) -> Vec<f64> {
        let gb = self.penalty_activity(beta);
        self.q_rows
            .iter()
            .zip(gb)
            .map(|(q, g)| u[q.own] + q.next.map_or(0.0, |(c, v)| v * u[c]) + g)
            .collect()
    }

    /// `G beta` per row.
    pub fn penalty_activity(&self, beta: &VfaWeights) -> Vec<f64> {
        let mut act = vec![0.0; self.rows()];
        for (b, block) in self.g_blocks.iter().enumerate() {
            let w = beta.block(b);
            for (k, &row) in block.rows.iter().enumerate() {
                act[row] += dot(block.row(k), w);
            }
        }
        act
    }

    /// Smallest feasible `U` for fixed `beta`, by backward recursion over the
    /// rows of each path.
    pub fn tightest_u(&self, beta: &VfaWeights) -> Vec<f64> {
        let gb = self.penalty_activity(beta);
        let mut u = vec![f64::NEG_INFINITY; self.u_columns()];
        for r in (0..self.rows()).rev() {
            let q = self.q_rows[r];
            let cont = q.next.map_or(0.0, |(c, v)| v * u[c]);
            let v = self.rhs[r] - gb[r] - cont;
            if v > u[q.own] {
                u[q.own] = v;
            }
        }
        u
    }

    /// LP over all `U` columns and the weight blocks flagged in `free`; other
    /// blocks are fixed at `beta` and moved to the right-hand side. Free
    /// weights follow the `U` columns in block order and are boxed to
    /// `[-bound, bound]` when a bound is given.
    pub fn to_lp(&self, free: &[bool], beta: &VfaWeights, bound: Option<f64>) -> LpProblem {
        assert_eq!(free.len(), self.g_blocks.len());
        let mut lp = LpProblem::new(Sense::Minimize);
        let w = 1.0 / self.paths as f64;
        for _ in 0..self.paths {
            for k in 0..self.u_per_path {
                lp.add_col(if k == 0 { w } else { 0.0 }, f64::NEG_INFINITY, f64::INFINITY);
            }
        }
        let b = bound.unwrap_or(f64::INFINITY);
        let mut first_col = vec![usize::MAX; self.g_blocks.len()];
        for (k, block) in self.g_blocks.iter().enumerate() {
            if free[k] {
                first_col[k] = lp.cols();
                for _ in 0..block.width {
                    lp.add_col(0.0, -b, b);
                }
            }
        }
        // Row -> (block, position within block).
        let mut owner = vec![None; self.rows()];
        let mut rhs = self.rhs.clone();
        for (k, block) in self.g_blocks.iter().enumerate() {
            for (pos, &row) in block.rows.iter().enumerate() {
                if free[k] {
                    owner[row] = Some((k, pos));
                } else {
                    rhs[row] -= dot(block.row(pos), beta.block(k));
                }
            }
        }
        let mut entries = Vec::new();
        for r in 0..self.rows() {
            entries.clear();
            let q = self.q_rows[r];
            entries.push((q.own, 1.0));
            if let Some(next) = q.next {
                entries.push(next);
            }
            if let Some((k, pos)) = owner[r] {
                let block = &self.g_blocks[k];
                entries.extend(block.row(pos).iter().enumerate().map(|(j, &v)| (first_col[k] + j, v)));
            }
            lp.add_row(rhs[r], f64::INFINITY, entries.iter().copied());
        }
        lp
    }

    /// Sample-average objective at the given `U` values.
    pub fn objective(&self, u: &[f64]) -> f64 {
        let total: f64 = (0..self.paths).map(|l| u[l * self.u_per_path]).sum();
        total / self.paths as f64
    }
}

/// Assembles the pathwise LP for the training scenarios.
pub fn build_plp(
    scenarios: &ScenarioSet,
    spec: &BasisSpec,
    increments: &PenaltyIncrementTable,
    graph: &DecisionGraph,
    x0: ReducedMode,
) -> Result<PathLpModel> {
    let zero = VfaWeights::zeros(spec);
    check_inputs(&zero, scenarios, spec, increments, graph, x0)?;
    let stages = graph.stages();
    let params = graph.params();
    let paths = scenarios.len();
    let u_per_path = 1 + 3 * (stages - 1);
    let u_col = |l: usize, i: usize, mode: ReducedMode| -> usize {
        if i == 0 {
            l * u_per_path
        } else {
            l * u_per_path + 1 + (i - 1) * 3 + mode.index()
        }
    };

    // Row template of one path.
    let mut template: Vec<(usize, ReducedMode, Transition)> = Vec::new();
    for i in 0..stages {
        for mode in ReducedMode::ALL {
            if i == 0 && mode != x0 {
                continue;
            }
            for arc in graph.arcs(i, mode) {
                template.push((i, mode, *arc));
            }
        }
    }

    let mut g_blocks: Vec<GBlock> = (0..zero.block_count())
        .map(|b| {
            let (stage, mode) = VfaWeights::block_key(b);
            GBlock {
                stage,
                mode,
                rows: Vec::new(),
                width: spec.len(stage),
                values: Vec::new(),
            }
        })
        .collect();
    let rows = paths * template.len();
    let mut q_rows = Vec::with_capacity(rows);
    let mut rhs = Vec::with_capacity(rows);
    let mut row_keys = Vec::with_capacity(rows);
    for (l, path) in scenarios.scenarios.iter().enumerate() {
        for &(i, mode, arc) in &template {
            let row = q_rows.len();
            let next = (arc.next_stage < stages).then(|| {
                (
                    u_col(l, arc.next_stage, arc.next_mode),
                    -arc.continuation_discount,
                )
            });
            q_rows.push(QRow {
                own: u_col(l, i, mode),
                next,
            });
            rhs.push(arc.reward(&path.spot(i), params));
            row_keys.push(RowKey {
                path: l,
                stage: i,
                mode,
                action: arc.action,
            });
            if mode.has_choice() && arc.has_vfa_successor(params) {
                let delta = increments
                    .segment(l, i, arc.next_stage)
                    .ok_or_else(|| Error::domain("increment table lacks a penalized arc"))?;
                let block = &mut g_blocks[VfaWeights::block_index(arc.next_stage, arc.next_mode)];
                block.rows.push(row);
                block.values.extend_from_slice(delta);
            }
        }
    }
    Ok(PathLpModel {
        stages,
        paths,
        initial_mode: x0,
        q_rows,
        rhs,
        row_keys,
        g_blocks,
        u_per_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{penalty_increments, BasisFamily, ConditionalMoments};
    use crate::market::{simulate, InitialCurves, SyntheticCalibration};
    use crate::mdp::PlantParams;

    struct Fixture {
        graph: DecisionGraph,
        spec: BasisSpec,
        set: ScenarioSet,
        inc: PenaltyIncrementTable,
    }

    fn fixture(stages: usize, paths: usize) -> Fixture {
        let params = PlantParams::ethanol(stages);
        let graph = DecisionGraph::new(&params).unwrap();
        let spec = BasisSpec::new(stages, BasisFamily::Linear).unwrap();
        let loadings = SyntheticCalibration::default().loadings(stages).unwrap();
        let moments = ConditionalMoments::new(&spec, &loadings).unwrap();
        let set = simulate(&InitialCurves::flat(stages, 6.0, 2.55, 4.0), &loadings, paths, 3).unwrap();
        let inc = penalty_increments(&spec, &moments, &set, &graph).unwrap();
        Fixture { graph, spec, set, inc }
    }

    #[test]
    fn plp_dimensions() {
        let f = fixture(4, 1);
        let m = build_plp(&f.set, &f.spec, &f.inc, &f.graph, ReducedMode::Operational).unwrap();
        assert_eq!(m.u_columns(), 10);
        // |A_0(O)| + stages 1..2 over {O, M, A} + last-stage rows.
        assert_eq!(m.rows(), 4 + (4 + 2 + 1) * 2 + 3);
        let f2 = fixture(4, 2);
        let m2 = build_plp(&f2.set, &f2.spec, &f2.inc, &f2.graph, ReducedMode::Operational).unwrap();
        assert_eq!(m2.rows(), 2 * m.rows());
        assert_eq!(m2.u_columns(), 2 * m.u_columns());
        assert_eq!(m2.beta_columns(), m.beta_columns());
    }

    #[test]
    fn q_rows_and_blocks_are_well_formed() {
        let f = fixture(6, 3);
        let m = build_plp(&f.set, &f.spec, &f.inc, &f.graph, ReducedMode::Operational).unwrap();
        for (q, key) in m.q_rows.iter().zip(&m.row_keys) {
            assert_eq!(Some(q.own), m.u_index(key.path, key.stage, key.mode));
            assert_eq!(q.next.is_none(), key.stage == 5);
        }
        for block in &m.g_blocks {
            assert_eq!(block.values.len(), block.rows.len() * block.width);
            for &row in &block.rows {
                let key = m.row_keys[row];
                let arc = f
                    .graph
                    .arcs(key.stage, key.mode)
                    .iter()
                    .find(|a| a.action == key.action)
                    .unwrap();
                assert_eq!((arc.next_stage, arc.next_mode), (block.stage, block.mode));
            }
        }
        assert_eq!(m.beta_index(1, ReducedMode::Operational, 0), Some(m.u_columns()));
        assert!(m.beta_index(5, ReducedMode::Operational, 0).is_none());
        assert!(m.u_index(0, 0, ReducedMode::Mothballed).is_none());
        let key = RowKey { path: 1, stage: 0, mode: ReducedMode::Operational, action: Action::Suspend };
        let row = m.row_index(&key).unwrap();
        assert_eq!(m.row_keys[row], key);
    }

    #[test]
    fn dp_solution_is_feasible_and_tight() {
        let f = fixture(6, 4);
        let m = build_plp(&f.set, &f.spec, &f.inc, &f.graph, ReducedMode::Operational).unwrap();
        let mut beta = VfaWeights::zeros(&f.spec);
        for (k, v) in beta.block_mut(2).iter_mut().enumerate() {
            *v = 0.1 * k as f64 - 0.3;
        }
        let dp = eval_objective(&beta, &f.set, &f.spec, &f.inc, &f.graph, ReducedMode::Operational)
            .unwrap();
        let mut u = vec![0.0; m.u_columns()];
        for l in 0..m.paths {
            for i in 0..m.stages {
                for mode in ReducedMode::ALL {
                    if let Some(c) = m.u_index(l, i, mode) {
                        u[c] = dp.value(l, i, mode);
                    }
                }
            }
        }
        let act = m.activity(&u, &beta);
        for (a, r) in act.iter().zip(&m.rhs) {
            assert!(a - r >= -1e-10);
        }
        // Every U variable has a tight row.
        for l in 0..m.paths {
            let tight = (0..m.rows())
                .filter(|&r| m.row_keys[r].path == l && (act[r] - m.rhs[r]).abs() < 1e-10)
                .count();
            assert!(tight >= m.u_per_path);
        }
        assert!((m.objective(&u) - dp.obj).abs() < 1e-12);
        let tight = m.tightest_u(&beta);
        assert!(tight.iter().zip(&u).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn policy_extraction_picks_argmax() {
        let f = fixture(5, 2);
        let beta = VfaWeights::zeros(&f.spec);
        let pol = extract_policy_dp(&beta, 1, &f.set, &f.spec, &f.inc, &f.graph).unwrap();
        assert_eq!(pol.len(), 5);
        for row in &pol {
            assert_eq!(row[ReducedMode::Abandoned.index()], Action::Abandon);
        }
        assert_eq!(pol[4][0], Action::Abandon);
        assert!(extract_policy_dp(&beta, 7, &f.set, &f.spec, &f.inc, &f.graph).is_err());
    }
}
