//! Basis functions of the forward curves and the martingale-difference
//! increments that turn a value function approximation into a dual penalty.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Commodity, FactorLoadings, Moment, ScenarioSet, StageCurves};
use crate::mdp::{Action, DecisionGraph, ReducedMode};

/// One basis function of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisFunction {
    Constant,
    Moment(Moment),
}

impl BasisFunction {
    pub fn eval(&self, curves: &StageCurves<'_>) -> f64 {
        match self {
            BasisFunction::Constant => 1.0,
            BasisFunction::Moment(m) => m.eval(curves),
        }
    }

    fn log_drift(&self, i: usize, j: usize, loadings: &FactorLoadings) -> f64 {
        match self {
            BasisFunction::Constant => 0.0,
            BasisFunction::Moment(m) => m.log_drift(i, j, loadings),
        }
    }
}

/// Which basis functions each interior stage uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    /// Constant, prices, squared prices, cross-commodity products and
    /// adjacent-maturity products of every maturity still trading.
    #[default]
    Full,
    /// Constant and prices only.
    Linear,
}

/// Per-stage basis function lists for the interior stages `1..I-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSpec {
    stages: usize,
    functions: Vec<Vec<BasisFunction>>,
}

const CROSS_PAIRS: [(Commodity, Commodity); 3] = [
    (Commodity::Corn, Commodity::Ethanol),
    (Commodity::Corn, Commodity::Gas),
    (Commodity::Ethanol, Commodity::Gas),
];

impl BasisSpec {
    pub fn new(stages: usize, family: BasisFamily) -> Result<Self> {
        if stages < 2 {
            return Err(Error::domain("a basis needs at least 2 stages"));
        }
        let mut functions = vec![Vec::new(); stages];
        for (i, list) in functions.iter_mut().enumerate().take(stages - 1).skip(1) {
            list.push(BasisFunction::Constant);
            for c in Commodity::ALL {
                for m in i..stages {
                    list.push(BasisFunction::Moment(Moment::Linear { c, m }));
                }
            }
            if family == BasisFamily::Linear {
                continue;
            }
            for c in Commodity::ALL {
                for m in i..stages {
                    list.push(BasisFunction::Moment(Moment::Square { c, m }));
                }
            }
            for (c, c2) in CROSS_PAIRS {
                for m in i..stages {
                    list.push(BasisFunction::Moment(Moment::Cross { c, c2, m }));
                }
            }
            for c in Commodity::ALL {
                for m in i..stages - 1 {
                    list.push(BasisFunction::Moment(Moment::Adjacent { c, m }));
                }
            }
        }
        Ok(BasisSpec { stages, functions })
    }

    /// Builds a spec from explicit per-stage lists (index = stage; stage 0
    /// and the last stage must be empty, interior stages must start with the
    /// constant).
    pub fn from_functions(functions: Vec<Vec<BasisFunction>>) -> Result<Self> {
        let stages = functions.len();
        if stages < 2 {
            return Err(Error::domain("a basis needs at least 2 stages"));
        }
        for (i, list) in functions.iter().enumerate() {
            let interior = i >= 1 && i + 1 < stages;
            if !interior && !list.is_empty() {
                return Err(Error::domain(format!("stage {i} carries no approximation")));
            }
            if interior && list.first() != Some(&BasisFunction::Constant) {
                return Err(Error::domain(format!(
                    "stage {i}: the first basis function must be the constant"
                )));
            }
            for f in list {
                if let BasisFunction::Moment(m) = f {
                    if m.maturity() < i || m.last_maturity() >= stages {
                        return Err(Error::domain(format!(
                            "stage {i}: basis function {f:?} reads an expired or missing maturity"
                        )));
                    }
                }
            }
        }
        Ok(BasisSpec { stages, functions })
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn is_interior(&self, i: usize) -> bool {
        i >= 1 && i + 1 < self.stages
    }

    /// Basis functions of stage `i` (empty outside the interior stages).
    pub fn functions(&self, i: usize) -> &[BasisFunction] {
        &self.functions[i]
    }

    pub fn len(&self, i: usize) -> usize {
        self.functions[i].len()
    }

    /// Evaluates the stage-`i` basis on curves that cover its maturities.
    /// The curves may belong to an earlier stage.
    pub fn evaluate(&self, i: usize, curves: &StageCurves<'_>) -> Result<Vec<f64>> {
        if !self.is_interior(i) {
            return Err(Error::domain(format!("stage {i} has no basis functions")));
        }
        if curves.stage() > i || curves.last_maturity() + 1 < self.stages {
            return Err(Error::domain(format!(
                "curves of stage {} do not cover the maturities of stage {i}",
                curves.stage()
            )));
        }
        let mut out = vec![0.0; self.len(i)];
        self.evaluate_into(i, curves, &mut out);
        Ok(out)
    }

    pub(crate) fn evaluate_into(&self, i: usize, curves: &StageCurves<'_>, out: &mut [f64]) {
        for (o, f) in out.iter_mut().zip(&self.functions[i]) {
            *o = f.eval(curves);
        }
    }
}

/// Multipliers `E[phi_{j,b}(F_j) | F_i] / phi_{j,b}(F_i)`; they depend on
/// `(i, j, b)` only, never on the path.
#[derive(Debug, Clone)]
pub struct ConditionalMoments {
    stages: usize,
    multipliers: Vec<Vec<f64>>,
}

impl ConditionalMoments {
    pub fn new(spec: &BasisSpec, loadings: &FactorLoadings) -> Result<Self> {
        let stages = spec.stages();
        if loadings.stages() != stages {
            return Err(Error::domain(format!(
                "basis has {stages} stages, loadings {}",
                loadings.stages()
            )));
        }
        let mut multipliers = vec![Vec::new(); stages * stages];
        for j in 1..stages.saturating_sub(1) {
            for i in 0..=j {
                multipliers[i * stages + j] = spec
                    .functions(j)
                    .iter()
                    .map(|f| f.log_drift(i, j, loadings).exp())
                    .collect();
            }
        }
        Ok(ConditionalMoments { stages, multipliers })
    }

    pub fn multipliers(&self, i: usize, j: usize) -> &[f64] {
        &self.multipliers[i * self.stages + j]
    }

    /// `E[phi_{j,b}(F_j) | F_i]` for every stage-`j` basis function.
    pub fn expectation_into(
        &self,
        spec: &BasisSpec,
        j: usize,
        curves: &StageCurves<'_>,
        out: &mut [f64],
    ) {
        spec.evaluate_into(j, curves, out);
        for (o, m) in out.iter_mut().zip(self.multipliers(curves.stage(), j)) {
            *o *= m;
        }
    }
}

/// Discounted martingale increments
/// `delta^(g-i) (phi_{g,b}(F_g) - E[phi_{g,b}(F_g) | F_i])` per path.
///
/// An increment depends on the path, the decision stage `i` and the stage
/// `g` reached after the transition; every arc `(i, x, a)` with a successor
/// that carries an approximation maps to one `(i, g)` segment. Values are
/// stored path-major, each path holding its segments back to back.
#[derive(Debug, Clone)]
pub struct PenaltyIncrementTable {
    stages: usize,
    /// Offset and length of segment `(i, g)` inside a path's stride, if the pair occurs.
    segment_offset: Vec<Option<(usize, usize)>>,
    stride: usize,
    values: Vec<f64>,
    paths: usize,
}

impl PenaltyIncrementTable {
    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    /// Increments of path `l` for decision stage `i` and successor stage `g`.
    pub fn segment(&self, l: usize, i: usize, g: usize) -> Option<&[f64]> {
        if i >= self.stages || g >= self.stages || l >= self.paths {
            return None;
        }
        let (off, len) = self.segment_offset[i * self.stages + g]?;
        let start = l * self.stride + off;
        Some(&self.values[start..start + len])
    }

    /// Increments for the arc taking `action` in `mode` at stage `i` on path `l`,
    /// or `None` when the arc carries no penalty.
    pub fn for_arc(
        &self,
        graph: &DecisionGraph,
        l: usize,
        i: usize,
        mode: ReducedMode,
        action: Action,
    ) -> Option<&[f64]> {
        let arc = graph.arcs(i, mode).iter().find(|t| t.action == action)?;
        if !mode.has_choice() || !arc.has_vfa_successor(graph.params()) {
            return None;
        }
        self.segment(l, i, arc.next_stage)
    }
}

/// Computes the increment table for every path of `scenarios`.
pub fn penalty_increments(
    spec: &BasisSpec,
    moments: &ConditionalMoments,
    scenarios: &ScenarioSet,
    graph: &DecisionGraph,
) -> Result<PenaltyIncrementTable> {
    let stages = spec.stages();
    if graph.stages() != stages || scenarios.stages() != stages {
        return Err(Error::domain(format!(
            "stage counts disagree: basis {stages}, plant {}, scenarios {}",
            graph.stages(),
            scenarios.stages()
        )));
    }
    let params = graph.params();
    let mut present = vec![false; stages * stages];
    for i in 0..stages.saturating_sub(1) {
        for mode in ReducedMode::CHOICE {
            for arc in graph.arcs(i, mode) {
                if arc.has_vfa_successor(params) {
                    present[i * stages + arc.next_stage] = true;
                }
            }
        }
    }
    let mut segment_offset = vec![None; stages * stages];
    let mut stride = 0;
    let mut segments = Vec::new();
    for (idx, p) in present.iter().enumerate() {
        if *p {
            let (i, g) = (idx / stages, idx % stages);
            segment_offset[idx] = Some((stride, spec.len(g)));
            segments.push((i, g, stride));
            stride += spec.len(g);
        }
    }
    let discount = params.discount;
    let per_path: Vec<Vec<f64>> = scenarios
        .scenarios
        .par_iter()
        .map(|path| {
            let mut row = vec![0.0; stride];
            let mut expect = Vec::new();
            for &(i, g, off) in &segments {
                let b = spec.len(g);
                let seg = &mut row[off..off + b];
                spec.evaluate_into(g, &path.curves(g), seg);
                expect.resize(b, 0.0);
                moments.expectation_into(spec, g, &path.curves(i), &mut expect);
                let scale = discount.powi((g - i) as i32);
                for (v, e) in seg.iter_mut().zip(&expect) {
                    *v = scale * (*v - e);
                }
                // The constant is its own expectation.
                for (v, f) in seg.iter_mut().zip(spec.functions(g)) {
                    if *f == BasisFunction::Constant {
                        *v = 0.0;
                    }
                }
            }
            row
        })
        .collect();
    Ok(PenaltyIncrementTable {
        stages,
        segment_offset,
        stride,
        values: per_path.concat(),
        paths: scenarios.len(),
    })
}
