//! Driftless multi-factor lognormal forward curve model.
//!
//! Futures prices of every commodity and maturity are driven by `K` common
//! Brownian factors. Loadings are piecewise constant over stage intervals and
//! indexed by absolute maturity stage, so paths are stepped exactly and all
//! conditional moments of the basis functions reduce to finite sums.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::SpotVector;

/// Commodity labels in their fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Commodity {
    Corn,
    Ethanol,
    Gas,
}

impl Commodity {
    pub const ALL: [Commodity; 3] = [Commodity::Corn, Commodity::Ethanol, Commodity::Gas];
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Commodity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Commodity::Corn => "C",
            Commodity::Ethanol => "E",
            Commodity::Gas => "N",
        };
        f.write_str(s)
    }
}

/// Stage-0 forward curves, one price per maturity stage `0..I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialCurves {
    pub corn: Vec<f64>,
    pub ethanol: Vec<f64>,
    pub gas: Vec<f64>,
}

impl InitialCurves {
    /// Flat curves at the given price levels.
    pub fn flat(stages: usize, corn: f64, ethanol: f64, gas: f64) -> Self {
        InitialCurves {
            corn: vec![corn; stages],
            ethanol: vec![ethanol; stages],
            gas: vec![gas; stages],
        }
    }

    pub fn get(&self, c: Commodity) -> &[f64] {
        match c {
            Commodity::Corn => &self.corn,
            Commodity::Ethanol => &self.ethanol,
            Commodity::Gas => &self.gas,
        }
    }

    pub fn stages(&self) -> usize {
        self.corn.len()
    }

    pub fn validate(&self, stages: usize) -> Result<()> {
        for c in Commodity::ALL {
            let curve = self.get(c);
            if curve.len() != stages {
                return Err(Error::domain(format!(
                    "initial {c} curve has {} maturities, expected {stages}",
                    curve.len()
                )));
            }
            if let Some(p) = curve.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
                return Err(Error::domain(format!(
                    "initial {c} curve has a non-positive price {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Piecewise-constant factor loadings `sigma[c][k][u][j]`: loading of factor
/// `k` on the commodity-`c` futures maturing at stage `j`, over the interval
/// `[T_u, T_{u+1})`, for `u < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationFile", into = "CalibrationFile")]
pub struct FactorLoadings {
    factors: usize,
    stages: usize,
    dt: Vec<f64>,
    sigma: Vec<f64>,
}

/// On-disk layout of [`FactorLoadings`]: per commodity a `[factor][interval][maturity]`
/// table. Entries with `maturity <= interval` are unused and must be zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CalibrationFile {
    factors: usize,
    /// Year fraction of each stage interval, length `stages - 1`.
    dt: Vec<f64>,
    corn: Vec<Vec<Vec<f64>>>,
    ethanol: Vec<Vec<Vec<f64>>>,
    gas: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<CalibrationFile> for FactorLoadings {
    type Error = Error;

    fn try_from(file: CalibrationFile) -> Result<Self> {
        let stages = file.dt.len() + 1;
        let mut out = FactorLoadings::zero(file.factors, file.dt.clone())?;
        for (c, table) in Commodity::ALL.iter().zip([&file.corn, &file.ethanol, &file.gas]) {
            if table.len() != file.factors {
                return Err(Error::config(format!(
                    "{c} loadings: expected {} factors, got {}",
                    file.factors,
                    table.len()
                )));
            }
            for (k, per_factor) in table.iter().enumerate() {
                if per_factor.len() != stages - 1 {
                    return Err(Error::config(format!(
                        "{c} loadings, factor {k}: expected {} intervals",
                        stages - 1
                    )));
                }
                for (u, row) in per_factor.iter().enumerate() {
                    if row.len() != stages {
                        return Err(Error::config(format!(
                            "{c} loadings, factor {k}, interval {u}: expected {stages} maturities"
                        )));
                    }
                    for (j, &v) in row.iter().enumerate() {
                        if j <= u {
                            if v != 0.0 {
                                return Err(Error::config(format!(
                                    "{c} loading for expired maturity {j} in interval {u} must be 0"
                                )));
                            }
                        } else {
                            out.set(*c, k, u, j, v)?;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

impl From<FactorLoadings> for CalibrationFile {
    fn from(l: FactorLoadings) -> Self {
        let table = |c: Commodity| -> Vec<Vec<Vec<f64>>> {
            (0..l.factors)
                .map(|k| {
                    (0..l.stages - 1)
                        .map(|u| {
                            (0..l.stages)
                                .map(|j| if j > u { l.sigma(c, k, u, j) } else { 0.0 })
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        CalibrationFile {
            factors: l.factors,
            dt: l.dt.clone(),
            corn: table(Commodity::Corn),
            ethanol: table(Commodity::Ethanol),
            gas: table(Commodity::Gas),
        }
    }
}

impl FactorLoadings {
    /// All-zero loadings over intervals of the given year fractions.
    pub fn zero(factors: usize, dt: Vec<f64>) -> Result<Self> {
        if factors == 0 {
            return Err(Error::domain("at least one factor is required"));
        }
        if dt.is_empty() {
            return Err(Error::domain("at least one stage interval is required"));
        }
        if let Some(d) = dt.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::domain(format!("stage interval length {d} must be positive")));
        }
        let stages = dt.len() + 1;
        Ok(FactorLoadings {
            factors,
            stages,
            dt,
            sigma: vec![0.0; Commodity::COUNT * factors * (stages - 1) * stages],
        })
    }

    fn offset(&self, c: Commodity, k: usize, u: usize, j: usize) -> usize {
        ((c.index() * self.factors + k) * (self.stages - 1) + u) * self.stages + j
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn dt(&self) -> &[f64] {
        &self.dt
    }

    pub fn sigma(&self, c: Commodity, k: usize, u: usize, j: usize) -> f64 {
        self.sigma[self.offset(c, k, u, j)]
    }

    pub fn set(&mut self, c: Commodity, k: usize, u: usize, j: usize, value: f64) -> Result<()> {
        if k >= self.factors || u + 1 >= self.stages || j >= self.stages || j <= u {
            return Err(Error::domain(format!(
                "loading index (factor {k}, interval {u}, maturity {j}) out of range"
            )));
        }
        if !value.is_finite() {
            return Err(Error::domain("loadings must be finite"));
        }
        let o = self.offset(c, k, u, j);
        self.sigma[o] = value;
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma.iter().all(|s| *s == 0.0)
    }

    /// Integrated covariance `sum_k sum_{u=i}^{j-1} sigma[c][k][u][m] sigma[c2][k][u][m2] dt[u]`
    /// of the log prices of two futures between stages `i` and `j`.
    pub fn integrated_covariance(
        &self,
        c: Commodity,
        m: usize,
        c2: Commodity,
        m2: usize,
        i: usize,
        j: usize,
    ) -> f64 {
        let mut total = 0.0;
        for u in i..j {
            let mut per_interval = 0.0;
            for k in 0..self.factors {
                per_interval += self.sigma(c, k, u, m) * self.sigma(c2, k, u, m2);
            }
            total += per_interval * self.dt[u];
        }
        total
    }
}

/// Parameters of the synthetic loading generator used in place of market
/// calibrations.
///
/// The loading of factor `k` on commodity `c` at time-to-maturity `tau` is
/// `level * exp(-decay * tau) * w[c][k]`. Each `w[c]` is the unit vector along
/// `sqrt(correlation) * e_0 + sqrt(1 - correlation) * d_c`, where `d_c` is a
/// unit direction drawn from `seed`, so commodities share the first factor
/// and are imperfectly correlated through the others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticCalibration {
    pub factors: usize,
    /// Annualized volatility at zero time-to-maturity.
    pub level: f64,
    /// Exponential decay rate of volatility in time-to-maturity (per year).
    pub decay: f64,
    /// Weight of the first factor shared by all commodities, in `[0, 1]`.
    pub correlation: f64,
    /// Stage interval length in years.
    pub dt: f64,
    pub seed: u64,
}

impl Default for SyntheticCalibration {
    fn default() -> Self {
        SyntheticCalibration {
            factors: 2,
            level: 0.35,
            decay: 0.8,
            correlation: 0.6,
            dt: 1.0 / 12.0,
            seed: 7,
        }
    }
}

impl SyntheticCalibration {
    pub fn loadings(&self, stages: usize) -> Result<FactorLoadings> {
        if stages < 2 {
            return Err(Error::domain("synthetic calibration needs at least 2 stages"));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::domain("correlation weight must lie in [0, 1]"));
        }
        if !self.level.is_finite() || !self.decay.is_finite() {
            return Err(Error::domain("synthetic level and decay must be finite"));
        }
        let mut out = FactorLoadings::zero(self.factors, vec![self.dt; stages - 1])?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for c in Commodity::ALL {
            let mut w = vec![0.0; self.factors];
            if self.factors == 1 {
                w[0] = 1.0;
            } else {
                let z: Vec<f64> = (0..self.factors).map(|_| StandardNormal.sample(&mut rng)).collect();
                let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                for (k, wk) in w.iter_mut().enumerate() {
                    *wk = (1.0 - self.correlation).sqrt() * z[k] / zn;
                }
                w[0] += self.correlation.sqrt();
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    w[0] = 1.0;
                } else {
                    w.iter_mut().for_each(|v| *v /= norm);
                }
            }
            for u in 0..stages - 1 {
                for j in u + 1..stages {
                    let tau = (j - u) as f64 * self.dt;
                    let vol = self.level * (-self.decay * tau).exp();
                    for (k, wk) in w.iter().enumerate() {
                        out.set(c, k, u, j, vol * wk)?;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// One simulated path of forward curves. Stage `i` stores, for each commodity,
/// the prices of maturities `i..I`; the first of these is the spot price.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCurveScenario {
    stages: usize,
    prices: Vec<f64>,
}

fn stage_offset(stages: usize, i: usize) -> usize {
    // sum_{u<i} 3 (I - u)
    Commodity::COUNT * (i * stages - i * (i.saturating_sub(1)) / 2)
}

impl ForwardCurveScenario {
    /// The path on which every futures price stays at its initial value.
    pub fn frozen(initial: &InitialCurves) -> Self {
        let stages = initial.stages();
        let mut prices = Vec::with_capacity(stage_offset(stages, stages));
        for i in 0..stages {
            for c in Commodity::ALL {
                prices.extend_from_slice(&initial.get(c)[i..]);
            }
        }
        ForwardCurveScenario { stages, prices }
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn curves(&self, i: usize) -> StageCurves<'_> {
        let start = stage_offset(self.stages, i);
        let len = Commodity::COUNT * (self.stages - i);
        StageCurves {
            stage: i,
            prices: &self.prices[start..start + len],
        }
    }

    pub fn spot(&self, i: usize) -> SpotVector {
        self.curves(i).spot()
    }

    /// Futures price at stage `i` for maturity `j >= i`.
    pub fn price(&self, i: usize, c: Commodity, j: usize) -> f64 {
        self.curves(i).price(c, j)
    }
}

/// Borrowed forward curves of one stage.
#[derive(Debug, Clone, Copy)]
pub struct StageCurves<'a> {
    stage: usize,
    prices: &'a [f64],
}

impl<'a> StageCurves<'a> {
    /// Wraps a `[commodity][maturity - stage]` price slice.
    pub fn new(stage: usize, prices: &'a [f64]) -> Result<Self> {
        if prices.is_empty() || prices.len() % Commodity::COUNT != 0 {
            return Err(Error::domain("stage curve length must be a positive multiple of 3"));
        }
        Ok(StageCurves { stage, prices })
    }

    pub fn stage(&self) -> usize {
        self.stage
    }

    fn width(&self) -> usize {
        self.prices.len() / Commodity::COUNT
    }

    /// Last maturity covered.
    pub fn last_maturity(&self) -> usize {
        self.stage + self.width() - 1
    }

    pub fn price(&self, c: Commodity, j: usize) -> f64 {
        debug_assert!(j >= self.stage && j <= self.last_maturity());
        self.prices[c.index() * self.width() + (j - self.stage)]
    }

    pub fn try_price(&self, c: Commodity, j: usize) -> Result<f64> {
        if j < self.stage || j > self.last_maturity() {
            return Err(Error::domain(format!(
                "maturity {j} outside {}..={}",
                self.stage,
                self.last_maturity()
            )));
        }
        Ok(self.price(c, j))
    }

    pub fn spot(&self) -> SpotVector {
        SpotVector {
            corn: self.price(Commodity::Corn, self.stage),
            ethanol: self.price(Commodity::Ethanol, self.stage),
            gas: self.price(Commodity::Gas, self.stage),
        }
    }
}

/// Simulated training or evaluation paths.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Vec<ForwardCurveScenario>,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn stages(&self) -> usize {
        self.scenarios.first().map_or(0, |s| s.stages())
    }
}

/// Simulates `paths` forward curve paths with exact lognormal steps.
///
/// Path `l` draws its normals from the ChaCha8 stream `l` of `seed`, so it
/// does not depend on the number of threads or on the other paths.
pub fn simulate(
    initial: &InitialCurves,
    loadings: &FactorLoadings,
    paths: usize,
    seed: u64,
) -> Result<ScenarioSet> {
    let stages = loadings.stages();
    initial.validate(stages)?;
    if paths == 0 {
        return Err(Error::domain("need at least one path"));
    }
    // Per interval u and maturity j > u: drift -1/2 var and per-factor loadings * sqrt(dt).
    let k_count = loadings.factors();
    let mut drift = vec![0.0; Commodity::COUNT * stages * stages];
    let mut shock = vec![0.0; Commodity::COUNT * stages * stages * k_count];
    for c in Commodity::ALL {
        for u in 0..stages - 1 {
            let sqdt = loadings.dt()[u].sqrt();
            for j in u + 1..stages {
                let idx = (c.index() * stages + u) * stages + j;
                drift[idx] = -0.5 * loadings.integrated_covariance(c, j, c, j, u, u + 1);
                for k in 0..k_count {
                    shock[idx * k_count + k] = loadings.sigma(c, k, u, j) * sqdt;
                }
            }
        }
    }
    let scenarios = (0..paths)
        .into_par_iter()
        .map(|l| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(l as u64);
            let mut prices = Vec::with_capacity(stage_offset(stages, stages));
            for c in Commodity::ALL {
                prices.extend_from_slice(initial.get(c));
            }
            let mut z = vec![0.0; k_count];
            for u in 0..stages - 1 {
                for zk in z.iter_mut() {
                    *zk = StandardNormal.sample(&mut rng);
                }
                let prev_start = stage_offset(stages, u);
                let prev_width = stages - u;
                for c in Commodity::ALL {
                    for j in u + 1..stages {
                        let idx = (c.index() * stages + u) * stages + j;
                        let mut e = drift[idx];
                        for k in 0..k_count {
                            e += shock[idx * k_count + k] * z[k];
                        }
                        let prev = prices[prev_start + c.index() * prev_width + (j - u)];
                        prices.push(prev * e.exp());
                    }
                }
            }
            ForwardCurveScenario { stages, prices }
        })
        .collect();
    Ok(ScenarioSet { scenarios, seed })
}

/// Non-constant moment of the forward curves whose conditional expectation is
/// available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Moment {
    /// `F[c][m]`
    Linear { c: Commodity, m: usize },
    /// `F[c][m]^2`
    Square { c: Commodity, m: usize },
    /// `F[c][m] F[c2][m]` with `c < c2`.
    Cross { c: Commodity, c2: Commodity, m: usize },
    /// `F[c][m] F[c][m + 1]`
    Adjacent { c: Commodity, m: usize },
}

impl Moment {
    /// Earliest maturity the moment reads.
    pub fn maturity(&self) -> usize {
        match *self {
            Moment::Linear { m, .. }
            | Moment::Square { m, .. }
            | Moment::Cross { m, .. }
            | Moment::Adjacent { m, .. } => m,
        }
    }

    /// Last maturity the moment reads.
    pub fn last_maturity(&self) -> usize {
        match *self {
            Moment::Adjacent { m, .. } => m + 1,
            other => other.maturity(),
        }
    }

    /// Value on the given curves.
    pub fn eval(&self, curves: &StageCurves<'_>) -> f64 {
        match *self {
            Moment::Linear { c, m } => curves.price(c, m),
            Moment::Square { c, m } => {
                let p = curves.price(c, m);
                p * p
            }
            Moment::Cross { c, c2, m } => curves.price(c, m) * curves.price(c2, m),
            Moment::Adjacent { c, m } => curves.price(c, m) * curves.price(c, m + 1),
        }
    }

    /// Log of the factor `E[moment(F_j) | F_i] / moment(F_i)`.
    pub fn log_drift(&self, i: usize, j: usize, loadings: &FactorLoadings) -> f64 {
        match *self {
            Moment::Linear { .. } => 0.0,
            Moment::Square { c, m } => loadings.integrated_covariance(c, m, c, m, i, j),
            Moment::Cross { c, c2, m } => loadings.integrated_covariance(c, m, c2, m, i, j),
            Moment::Adjacent { c, m } => loadings.integrated_covariance(c, m, c, m + 1, i, j),
        }
    }
}

/// Closed-form `E[moment(F_j) | F_i]` given the stage-`i` curves.
pub fn cond_moment(
    moment: &Moment,
    j: usize,
    curves: &StageCurves<'_>,
    loadings: &FactorLoadings,
) -> Result<f64> {
    let i = curves.stage();
    if i > j || j > moment.maturity() {
        return Err(Error::domain(format!(
            "conditional moment needs stage {i} <= {j} <= maturity {}",
            moment.maturity()
        )));
    }
    if moment.last_maturity() > curves.last_maturity() || moment.last_maturity() >= loadings.stages() {
        return Err(Error::domain(format!(
            "maturity {} outside the curve",
            moment.last_maturity()
        )));
    }
    if let Moment::Cross { c, c2, .. } = moment {
        if c >= c2 {
            return Err(Error::domain("cross moments need distinct commodities in fixed order"));
        }
    }
    Ok(moment.eval(curves) * moment.log_drift(i, j, loadings).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_loadings(stages: usize, sigma: &[(Commodity, f64)]) -> FactorLoadings {
        let mut l = FactorLoadings::zero(1, vec![1.0 / 12.0; stages - 1]).unwrap();
        for &(c, s) in sigma {
            for u in 0..stages - 1 {
                for j in u + 1..stages {
                    l.set(c, 0, u, j, s).unwrap();
                }
            }
        }
        l
    }

    #[test]
    fn triangular_layout() {
        let init = InitialCurves {
            corn: vec![1.0, 2.0, 3.0],
            ethanol: vec![4.0, 5.0, 6.0],
            gas: vec![7.0, 8.0, 9.0],
        };
        let s = ForwardCurveScenario::frozen(&init);
        assert_eq!(s.prices.len(), 3 * (3 + 2 + 1));
        assert_eq!(s.price(0, Commodity::Ethanol, 2), 6.0);
        assert_eq!(s.price(1, Commodity::Gas, 1), 8.0);
        assert_eq!(s.price(2, Commodity::Corn, 2), 3.0);
        let spot = s.spot(1);
        assert_eq!((spot.corn, spot.ethanol, spot.gas), (2.0, 5.0, 8.0));
        assert!(s.curves(1).try_price(Commodity::Corn, 0).is_err());
    }

    #[test]
    fn zero_loadings_leave_curves_unchanged() {
        let init = InitialCurves::flat(4, 6.0, 2.5, 4.0);
        let l = FactorLoadings::zero(2, vec![1.0 / 12.0; 3]).unwrap();
        let set = simulate(&init, &l, 5, 3).unwrap();
        let frozen = ForwardCurveScenario::frozen(&init);
        assert!(set.scenarios.iter().all(|s| *s == frozen));
    }

    #[test]
    fn simulation_is_reproducible_and_positive() {
        let init = InitialCurves::flat(5, 6.0, 2.5, 4.0);
        let l = SyntheticCalibration::default().loadings(5).unwrap();
        let a = simulate(&init, &l, 50, 11).unwrap();
        let b = simulate(&init, &l, 50, 11).unwrap();
        let c = simulate(&init, &l, 20, 11).unwrap();
        assert_eq!(a.scenarios, b.scenarios);
        // Path l depends only on (seed, l).
        assert_eq!(a.scenarios[..20], c.scenarios[..]);
        assert!(a.scenarios.iter().all(|s| s.prices.iter().all(|p| *p > 0.0)));
        assert!(a.scenarios.iter().all(|s| s.curves(0).price(Commodity::Corn, 3) == 6.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let l = FactorLoadings::zero(1, vec![0.1; 2]).unwrap();
        assert!(simulate(&InitialCurves::flat(3, 6.0, 0.0, 4.0), &l, 1, 0).is_err());
        assert!(simulate(&InitialCurves::flat(4, 6.0, 2.0, 4.0), &l, 1, 0).is_err());
        assert!(simulate(&InitialCurves::flat(3, 6.0, 2.0, 4.0), &l, 0, 0).is_err());
        assert!(FactorLoadings::zero(1, vec![0.1, 0.0]).is_err());
        let mut l = l;
        assert!(l.set(Commodity::Corn, 0, 1, 1, 0.2).is_err());
    }

    #[test]
    fn closed_form_moments() {
        let l = flat_loadings(3, &[(Commodity::Corn, 0.2), (Commodity::Ethanol, 0.3)]);
        let init = InitialCurves::flat(3, 6.0, 2.5, 4.0);
        let s = ForwardCurveScenario::frozen(&init);
        let f0 = s.curves(0);
        let lin = Moment::Linear { c: Commodity::Corn, m: 2 };
        assert_eq!(cond_moment(&lin, 1, &f0, &l).unwrap(), 6.0);
        let sq = Moment::Square { c: Commodity::Gas, m: 2 };
        assert_eq!(cond_moment(&sq, 2, &f0, &l).unwrap(), 16.0);
        let cross = Moment::Cross { c: Commodity::Corn, c2: Commodity::Ethanol, m: 1 };
        let want = 6.0 * 2.5 * (0.2f64 * 0.3 / 12.0).exp();
        assert!((cond_moment(&cross, 1, &f0, &l).unwrap() - want).abs() < 1e-12);
        let adj = Moment::Adjacent { c: Commodity::Ethanol, m: 1 };
        let want = 2.5 * 2.5 * (0.09f64 / 12.0).exp();
        assert!((cond_moment(&adj, 1, &f0, &l).unwrap() - want).abs() < 1e-12);
        assert!(cond_moment(&adj, 2, &f0, &l).is_err());
        let bad = Moment::Cross { c: Commodity::Gas, c2: Commodity::Corn, m: 1 };
        assert!(cond_moment(&bad, 1, &f0, &l).is_err());
    }

    #[test]
    fn synthetic_level_zero_is_deterministic_world() {
        let cal = SyntheticCalibration {
            level: 0.0,
            ..SyntheticCalibration::default()
        };
        assert!(cal.loadings(6).unwrap().is_zero());
        let a = SyntheticCalibration::default().loadings(6).unwrap();
        let b = SyntheticCalibration::default().loadings(6).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_zero());
    }

    #[test]
    fn synthetic_commodities_are_imperfectly_correlated() {
        let l = SyntheticCalibration::default().loadings(3).unwrap();
        let w = |c| -> Vec<f64> { (0..2).map(|k| l.sigma(c, k, 0, 1)).collect() };
        let vol = 0.35 * (-0.8f64 / 12.0).exp();
        for c in Commodity::ALL {
            let n = w(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - vol).abs() < 1e-12);
        }
        for (a, b) in [(Commodity::Corn, Commodity::Ethanol), (Commodity::Corn, Commodity::Gas), (Commodity::Ethanol, Commodity::Gas)] {
            let rho: f64 = w(a).iter().zip(w(b)).map(|(x, y)| x * y).sum::<f64>() / (vol * vol);
            assert!(rho.abs() < 1.0 - 1e-6, "{a:?}/{b:?} correlation {rho}");
        }
    }

    #[test]
    fn calibration_file_round_trip() {
        let l = SyntheticCalibration::default().loadings(4).unwrap();
        let file = CalibrationFile::from(l.clone());
        let back = FactorLoadings::try_from(file).unwrap();
        assert_eq!(back, l);
    }
}
