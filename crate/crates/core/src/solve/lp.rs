//! Linear programs in sparse row form and the solver backend contract.

use std::io::Write;

use highs::{HighsModelStatus, RowProblem, Sense as HighsSense};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Linear program `opt c'x` s.t. `row_lower <= A x <= row_upper`,
/// `col_lower <= x <= col_upper`, with `A` stored row-wise (CSR).
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub col_lower: Vec<f64>,
    pub col_upper: Vec<f64>,
    pub row_lower: Vec<f64>,
    pub row_upper: Vec<f64>,
    row_start: Vec<usize>,
    col_index: Vec<usize>,
    value: Vec<f64>,
    /// Optional starting point handed to backends that accept one.
    pub start: Option<Vec<f64>>,
}

impl LpProblem {
    pub fn new(sense: Sense) -> Self {
        LpProblem {
            sense,
            cost: Vec::new(),
            col_lower: Vec::new(),
            col_upper: Vec::new(),
            row_lower: Vec::new(),
            row_upper: Vec::new(),
            row_start: vec![0],
            col_index: Vec::new(),
            value: Vec::new(),
            start: None,
        }
    }

    pub fn cols(&self) -> usize {
        self.cost.len()
    }

    pub fn rows(&self) -> usize {
        self.row_lower.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.value.len()
    }

    /// Adds a column and returns its index.
    pub fn add_col(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.cost.push(cost);
        self.col_lower.push(lower);
        self.col_upper.push(upper);
        self.cost.len() - 1
    }

    /// Adds a row `lower <= sum entries <= upper`; exact zeros are dropped.
    pub fn add_row(&mut self, lower: f64, upper: f64, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (c, v) in entries {
            if v != 0.0 {
                self.col_index.push(c);
                self.value.push(v);
            }
        }
        self.row_start.push(self.value.len());
        self.row_lower.push(lower);
        self.row_upper.push(upper);
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_start[r]..self.row_start[r + 1];
        self.col_index[span.clone()].iter().copied().zip(self.value[span].iter().copied())
    }

    /// Checks dimensions, index ranges, finiteness and bound order.
    pub fn validate(&self) -> Result<()> {
        let n = self.cols();
        if self.col_lower.len() != n || self.col_upper.len() != n {
            return Err(Error::domain("column bound vectors do not match the cost vector"));
        }
        if self.row_upper.len() != self.rows() || self.row_start.len() != self.rows() + 1 {
            return Err(Error::domain("row data are inconsistent"));
        }
        if let Some(&c) = self.col_index.iter().find(|&&c| c >= n) {
            return Err(Error::domain(format!("column index {c} out of range")));
        }
        if self.cost.iter().chain(&self.value).any(|v| !v.is_finite()) {
            return Err(Error::domain("objective and constraint coefficients must be finite"));
        }
        let bounds = self
            .col_lower
            .iter()
            .zip(&self.col_upper)
            .chain(self.row_lower.iter().zip(&self.row_upper));
        for (lo, hi) in bounds {
            if lo.is_nan() || hi.is_nan() || lo > hi || *lo == f64::INFINITY || *hi == f64::NEG_INFINITY {
                return Err(Error::domain(format!("invalid bounds [{lo}, {hi}]")));
            }
        }
        if let Some(s) = &self.start {
            if s.len() != n {
                return Err(Error::domain("starting point has the wrong length"));
            }
        }
        Ok(())
    }

    /// Row activities `A x`.
    pub fn activity(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows())
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or column bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .activity(x)
            .into_iter()
            .zip(self.row_lower.iter().zip(&self.row_upper))
            .map(|(a, (&lo, &hi))| (lo - a).max(a - hi).max(0.0));
        let cols = x
            .iter()
            .zip(self.col_lower.iter().zip(&self.col_upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0));
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Largest violation at `x`, each divided by the magnitude of the terms
    /// involved: `max(1, |bound|, sum_j |a_j x_j|)` for rows and
    /// `max(1, |bound|)` for columns.
    pub fn max_scaled_violation(&self, x: &[f64]) -> f64 {
        let finite = |v: f64| if v.is_finite() { v.abs() } else { 0.0 };
        let rows = (0..self.rows()).map(|r| {
            let (mut a, mut mag) = (0.0, 0.0f64);
            for (c, v) in self.row(r) {
                a += v * x[c];
                mag += (v * x[c]).abs();
            }
            let (lo, hi) = (self.row_lower[r], self.row_upper[r]);
            let scale = mag.max(finite(lo)).max(finite(hi)).max(1.0);
            (lo - a).max(a - hi).max(0.0) / scale
        });
        let cols = x
            .iter()
            .zip(self.col_lower.iter().zip(&self.col_upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0) / finite(lo).max(finite(hi)).max(1.0));
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// Writes the problem in CPLEX LP text format with columns `x<k>` and
    /// rows `r<k>`.
    pub fn write_lp<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let sense = match self.sense {
            Sense::Minimize => "Minimize",
            Sense::Maximize => "Maximize",
        };
        writeln!(out, "\\ {} rows, {} columns", self.rows(), self.cols())?;
        writeln!(out, "{sense}")?;
        write!(out, " obj:")?;
        let mut any = false;
        for (c, &v) in self.cost.iter().enumerate() {
            if v != 0.0 {
                write_term(&mut out, v, c)?;
                any = true;
            }
        }
        if !any {
            write!(out, " 0 x0")?;
        }
        writeln!(out)?;
        writeln!(out, "Subject To")?;
        for r in 0..self.rows() {
            let (lo, hi) = (self.row_lower[r], self.row_upper[r]);
            if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
                continue;
            }
            let mut line = Vec::new();
            for (c, v) in self.row(r) {
                write_term(&mut line, v, c)?;
            }
            if line.is_empty() {
                line.extend_from_slice(b" 0 x0");
            }
            let terms = String::from_utf8(line).expect("ascii");
            if lo == hi {
                writeln!(out, " r{r}:{terms} = {}", fmt_num(lo))?;
            } else {
                if lo > f64::NEG_INFINITY {
                    writeln!(out, " r{r}:{terms} >= {}", fmt_num(lo))?;
                }
                if hi < f64::INFINITY {
                    let tag = if lo > f64::NEG_INFINITY { "u" } else { "" };
                    writeln!(out, " r{r}{tag}:{terms} <= {}", fmt_num(hi))?;
                }
            }
        }
        writeln!(out, "Bounds")?;
        for c in 0..self.cols() {
            let (lo, hi) = (self.col_lower[c], self.col_upper[c]);
            match (lo == f64::NEG_INFINITY, hi == f64::INFINITY) {
                (true, true) => writeln!(out, " x{c} free")?,
                (true, false) => writeln!(out, " -inf <= x{c} <= {}", fmt_num(hi))?,
                (false, true) => writeln!(out, " x{c} >= {}", fmt_num(lo))?,
                (false, false) => writeln!(out, " {} <= x{c} <= {}", fmt_num(lo), fmt_num(hi))?,
            }
        }
        writeln!(out, "End")
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:e}")
}

fn write_term<W: Write>(out: &mut W, v: f64, c: usize) -> std::io::Result<()> {
    if v < 0.0 {
        write!(out, " - {} x{c}", fmt_num(-v))
    } else {
        write!(out, " + {} x{c}", fmt_num(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Empty unless the status is optimal or the limit was hit with a point.
    pub primal: Vec<f64>,
    pub objective: f64,
    pub row_duals: Option<Vec<f64>>,
}

/// An exact LP method.
pub trait LpBackend: Sync {
    fn name(&self) -> &'static str;

    fn solve(&self, problem: &LpProblem) -> Result<LpSolution>;
}

/// Value of a HiGHS option.
#[derive(Debug, Clone, PartialEq)]
pub enum HighsOption {
    Bool(bool),
    Int(i32),
    Float(f64),
    Str(String),
}

/// HiGHS primal simplex, with a dual simplex retry when the returned point
/// fails the feasibility check.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    pub warm_start: bool,
    pub time_limit: Option<f64>,
    /// Extra options applied after the defaults.
    pub options: Vec<(String, HighsOption)>,
}

impl Default for HighsBackend {
    fn default() -> Self {
        HighsBackend {
            warm_start: true,
            time_limit: None,
            options: Vec::new(),
        }
    }
}

/// Value of a column with no constraint entries, or `None` if the objective
/// is unbounded along it.
fn empty_column_value(sense: Sense, cost: f64, lower: f64, upper: f64) -> Option<f64> {
    let c = match sense {
        Sense::Minimize => cost,
        Sense::Maximize => -cost,
    };
    let v = if c > 0.0 {
        lower
    } else if c < 0.0 {
        upper
    } else {
        0.0_f64.clamp(lower, upper)
    };
    v.is_finite().then_some(v)
}

impl HighsBackend {
    /// Builds and solves the problem restricted to `cols`.
    fn run(&self, problem: &LpProblem, cols: &[usize], presolve: bool, strategy: i32) -> Result<highs::SolvedModel> {
        let mut pb = RowProblem::default();
        let mut map = vec![None; problem.cols()];
        for &c in cols {
            map[c] = Some(pb.add_column(problem.cost[c], problem.col_lower[c]..=problem.col_upper[c]));
        }
        for r in 0..problem.rows() {
            pb.add_row(
                problem.row_lower[r]..=problem.row_upper[r],
                problem.row(r).filter_map(|(c, v)| map[c].map(|col| (col, v))),
            );
        }
        let sense = match problem.sense {
            Sense::Minimize => HighsSense::Minimise,
            Sense::Maximize => HighsSense::Maximise,
        };
        let mut model = pb
            .try_optimise(sense)
            .map_err(|s| Error::Solver(format!("HiGHS rejected the problem: {s:?}")))?;
        model.set_option("solver", "simplex");
        model.set_option("simplex_strategy", strategy);
        model.set_option("presolve", if presolve { "on" } else { "off" });
        if let Some(t) = self.time_limit {
            model.set_option("time_limit", t);
        }
        for (name, value) in &self.options {
            let ok = match value {
                HighsOption::Bool(v) => model.try_set_option(name.as_str(), *v),
                HighsOption::Int(v) => model.try_set_option(name.as_str(), *v),
                HighsOption::Float(v) => model.try_set_option(name.as_str(), *v),
                HighsOption::Str(v) => model.try_set_option(name.as_str(), v.as_str()),
            };
            ok.map_err(|_| Error::config(format!("HiGHS rejected option `{name}`")))?;
        }
        if self.warm_start {
            if let Some(start) = &problem.start {
                let start: Vec<f64> = cols.iter().map(|&c| start[c]).collect();
                // A rejected start is not an error; the solve proceeds cold.
                let _ = model.try_set_solution(Some(&start), None, None, None);
            }
        }
        model
            .try_solve()
            .map_err(|s| Error::Solver(format!("HiGHS failed: {s:?}")))
    }
}

impl LpBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve(&self, problem: &LpProblem) -> Result<LpSolution> {
        let sol = self.solve_with(problem, PRIMAL_SIMPLEX)?;
        if sol.status == LpStatus::Optimal && !(problem.max_scaled_violation(&sol.primal) <= PRIMAL_TOLERANCE) {
            // Primal simplex occasionally stops on a slightly infeasible
            // vertex of badly scaled problems; dual simplex cleans it up.
            return self.solve_with(problem, DUAL_SIMPLEX);
        }
        Ok(sol)
    }
}

const DUAL_SIMPLEX: i32 = 1;
const PRIMAL_SIMPLEX: i32 = 4;

impl HighsBackend {
    fn solve_with(&self, problem: &LpProblem, strategy: i32) -> Result<LpSolution> {
        let unsolved = |status| LpSolution {
            status,
            primal: Vec::new(),
            objective: f64::NAN,
            row_duals: None,
        };
        // HiGHS can fail on free columns without entries, so those are
        // settled here and only the rest is passed on.
        let mut used = vec![false; problem.cols()];
        for r in 0..problem.rows() {
            for (c, _) in problem.row(r) {
                used[c] = true;
            }
        }
        let mut primal = vec![0.0; problem.cols()];
        let mut cols = Vec::with_capacity(problem.cols());
        for c in 0..problem.cols() {
            if used[c] {
                cols.push(c);
                continue;
            }
            match empty_column_value(problem.sense, problem.cost[c], problem.col_lower[c], problem.col_upper[c]) {
                Some(v) => primal[c] = v,
                None => return Ok(unsolved(LpStatus::Unbounded)),
            }
        }
        let mut solved = self.run(problem, &cols, true, strategy)?;
        if solved.status() == HighsModelStatus::UnboundedOrInfeasible {
            solved = self.run(problem, &cols, false, strategy)?;
        }
        let status = match solved.status() {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => LpStatus::Optimal,
            HighsModelStatus::Infeasible => LpStatus::Infeasible,
            HighsModelStatus::Unbounded => LpStatus::Unbounded,
            HighsModelStatus::ReachedIterationLimit | HighsModelStatus::ReachedTimeLimit => {
                LpStatus::IterationLimit
            }
            other => return Err(Error::Solver(format!("HiGHS returned status {other:?}"))),
        };
        if status != LpStatus::Optimal {
            return Ok(unsolved(status));
        }
        let sol = solved.get_solution();
        for (&c, &v) in cols.iter().zip(sol.columns()) {
            primal[c] = v;
        }
        let objective = problem.objective_at(&primal);
        Ok(LpSolution {
            status,
            primal,
            objective,
            row_duals: Some(sol.dual_rows().to_vec()),
        })
    }
}

/// Scaled feasibility tolerance on the returned primal point.
pub const PRIMAL_TOLERANCE: f64 = 1e-6;

/// Solves `problem` with `backend` and verifies an optimal answer: the primal
/// point must satisfy every bound within [`PRIMAL_TOLERANCE`] in the sense of
/// [`LpProblem::max_scaled_violation`], and the reported
/// objective must match the recomputed one within `1e-8` relative.
pub fn lp_backend_solve(problem: &LpProblem, backend: &dyn LpBackend) -> Result<LpSolution> {
    problem.validate()?;
    let mut sol = backend.solve(problem)?;
    if sol.status != LpStatus::Optimal {
        return Ok(sol);
    }
    if sol.primal.len() != problem.cols() {
        return Err(Error::Solver(format!(
            "{} returned {} values for {} columns",
            backend.name(),
            sol.primal.len(),
            problem.cols()
        )));
    }
    let viol = problem.max_scaled_violation(&sol.primal);
    if !(viol <= PRIMAL_TOLERANCE) {
        return Err(Error::Solver(format!(
            "{} returned a point violating the constraints by {viol:e} (scaled)",
            backend.name()
        )));
    }
    let recomputed = problem.objective_at(&sol.primal);
    if (recomputed - sol.objective).abs() > 1e-8 * recomputed.abs().max(1.0) {
        return Err(Error::Solver(format!(
            "{} reported objective {} but the point evaluates to {recomputed}",
            backend.name(),
            sol.objective
        )));
    }
    sol.objective = recomputed;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn min_x_at_least_three() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_col(1.0, -INF, INF);
        p.add_row(3.0, INF, [(x, 1.0)]);
        let s = lp_backend_solve(&p, &HighsBackend::default()).unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.primal[0] - 3.0).abs() < 1e-9);
        assert!((s.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_col(0.0, -INF, INF);
        p.add_row(1.0, INF, [(x, 1.0)]);
        p.add_row(0.0, INF, [(x, -1.0)]);
        let s = lp_backend_solve(&p, &HighsBackend::default()).unwrap();
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn free_descent_is_unbounded() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_col(1.0, -INF, INF);
        p.add_row(-INF, 5.0, [(x, 1.0)]);
        let s = lp_backend_solve(&p, &HighsBackend::default()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn maximize_two_variables() {
        // max 3x + 2y s.t. x + y <= 4, x + 3y <= 6, x <= 3.
        let mut p = LpProblem::new(Sense::Maximize);
        let x = p.add_col(3.0, 0.0, 3.0);
        let y = p.add_col(2.0, 0.0, INF);
        p.add_row(-INF, 4.0, [(x, 1.0), (y, 1.0)]);
        p.add_row(-INF, 6.0, [(x, 1.0), (y, 3.0)]);
        let s = lp_backend_solve(&p, &HighsBackend::default()).unwrap();
        assert!((s.objective - 11.0).abs() < 1e-9);
        assert!((s.primal[0] - 3.0).abs() < 1e-9 && (s.primal[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn empty_columns() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_col(1.0, -INF, INF);
        let y = p.add_col(0.0, -INF, INF);
        let z = p.add_col(-1.0, -INF, 2.0);
        p.add_row(1.0, INF, [(x, 1.0)]);
        let s = lp_backend_solve(&p, &HighsBackend::default()).unwrap();
        assert_eq!(s.primal, vec![1.0, 0.0, 2.0]);
        assert!((s.objective + 1.0).abs() < 1e-12);
        let _ = (y, z);
        p.add_col(1.0, -INF, INF);
        let s = lp_backend_solve(&p, &HighsBackend::default()).unwrap();
        assert_eq!(s.status, LpStatus::Unbounded);
    }

    #[test]
    fn rejects_bad_input() {
        let mut p = LpProblem::new(Sense::Minimize);
        p.add_col(f64::NAN, 0.0, 1.0);
        assert!(lp_backend_solve(&p, &HighsBackend::default()).is_err());
        let mut p = LpProblem::new(Sense::Minimize);
        p.add_col(1.0, 2.0, 1.0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn lp_text_format() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_col(1.0, -INF, INF);
        let y = p.add_col(-2.0, 0.0, 1.0);
        p.add_row(3.0, INF, [(x, 1.0), (y, -1.5)]);
        let mut buf = Vec::new();
        p.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Minimize\n obj: + 1e0 x0 - 2e0 x1\n"));
        assert!(text.contains(" r0: + 1e0 x0 - 1.5e0 x1 >= 3e0\n"));
        assert!(text.contains(" x0 free\n"));
        assert!(text.contains(" 0e0 <= x1 <= 1e0\n"));
        assert!(text.ends_with("End\n"));
    }

    #[test]
    fn scaled_violation() {
        let mut p = LpProblem::new(Sense::Minimize);
        let x = p.add_col(0.0, -INF, INF);
        let y = p.add_col(0.0, -INF, INF);
        p.add_row(0.0, INF, [(x, 1.0), (y, -1.0)]);
        // Row activity -1e-3 against terms of size 1e3.
        let pt = [1e3 - 1e-3, 1e3];
        assert!((p.max_violation(&pt) - 1e-3).abs() < 1e-12);
        assert!((p.max_scaled_violation(&pt) - 1e-3 / (2e3 - 1e-3)).abs() < 1e-15);
        // Small terms are measured absolutely.
        assert!((p.max_scaled_violation(&[0.0, 0.5]) - 0.5).abs() < 1e-15);
    }
}
