//! Instance definitions stored as TOML.

use std::fs;
use std::path::{Path, PathBuf};

use merchant_po::basis::BasisFamily;
use merchant_po::market::{FactorLoadings, InitialCurves, SyntheticCalibration};
use merchant_po::mdp::{PlantParams, ReducedMode};
use merchant_po::{Error, Result};
use serde::{Deserialize, Serialize};

/// Source of the factor loadings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketSpec {
    Synthetic(SyntheticCalibration),
    /// Calibration file; a relative path is resolved against the instance file.
    File(PathBuf),
    Loadings(FactorLoadings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Number of contiguous stage ranges in the block partition.
    pub blocks: usize,
    pub epsilon: f64,
    pub max_sweeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_bound: Option<f64>,
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec {
            blocks: 4,
            epsilon: 1e-3,
            max_sweeps: 50,
            beta_bound: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub id: String,
    pub initial_mode: ReducedMode,
    pub basis: BasisFamily,
    pub train_paths: usize,
    pub eval_paths: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub plant: PlantParams,
    pub initial: InitialCurves,
    pub market: MarketSpec,
    pub solver: SolverSpec,
}

const HEADER: &str = "\
# Merchant plant instance.
# Units: money in $ millions, output in million gallons per stage,
# corn in $/bushel, ethanol in $/gallon, natural gas in $/MMBtu,
# corn_per_gallon in bushels/gallon, gas_per_gallon in MMBtu/gallon,
# volatilities annualized, dt and stage intervals in years.
";

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl InstanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.trim().is_empty() {
            return Err(config("instance id must not be empty"));
        }
        if self.train_paths < 2 || self.eval_paths < 2 {
            return Err(config("train_paths and eval_paths must be at least 2"));
        }
        if self.train_seed == self.eval_seed {
            return Err(config("train_seed and eval_seed must differ"));
        }
        if !self.initial_mode.has_choice() {
            return Err(config("initial_mode must be Operational or Mothballed"));
        }
        if self.solver.blocks == 0 || self.solver.max_sweeps == 0 {
            return Err(config("solver.blocks and solver.max_sweeps must be positive"));
        }
        if !(self.solver.epsilon > 0.0) {
            return Err(config("solver.epsilon must be positive"));
        }
        if let Some(b) = self.solver.beta_bound {
            if !(b > 0.0) {
                return Err(config("solver.beta_bound must be positive"));
            }
        }
        self.plant.validate().map_err(|e| config(e.to_string()))?;
        self.initial
            .validate(self.plant.stages)
            .map_err(|e| config(e.to_string()))?;
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.plant.stages
    }

    /// Factor loadings of the market model, checked against the horizon.
    pub fn loadings(&self) -> Result<FactorLoadings> {
        let loadings = match &self.market {
            MarketSpec::Synthetic(cal) => cal.loadings(self.stages())?,
            MarketSpec::Loadings(l) => l.clone(),
            MarketSpec::File(path) => read_calibration(path)?,
        };
        if loadings.stages() != self.stages() {
            return Err(config(format!(
                "loadings cover {} stages, the plant {}",
                loadings.stages(),
                self.stages()
            )));
        }
        Ok(loadings)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: InstanceSpec =
            toml::from_str(text).map_err(|e| config(format!("invalid instance: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        let body = toml::to_string(self).map_err(|e| config(format!("cannot encode instance: {e}")))?;
        Ok(format!("{HEADER}\n{body}"))
    }

    /// Reads an instance file, resolving a relative calibration path against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        let mut spec = Self::from_toml(&text)?;
        if let MarketSpec::File(p) = &mut spec.market {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_toml()?)
    }
}

fn write_file(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("cannot write {}: {e}", path.display())))
    })
}

/// Reads a calibration file (TOML) of factor loadings.
pub fn read_calibration(path: &Path) -> Result<FactorLoadings> {
    let text = fs::read_to_string(path)
        .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config(format!("invalid calibration {}: {e}", path.display())))
}

pub fn write_calibration(path: &Path, loadings: &FactorLoadings) -> Result<()> {
    let text = toml::to_string(loadings).map_err(|e| config(format!("cannot encode loadings: {e}")))?;
    write_file(path, format!("# Factor loadings, annualized; dt in years.\n{text}"))
}

/// Parameters of [`make_synthetic_instance`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticOptions {
    pub id: Option<String>,
    pub stages: usize,
    pub factors: usize,
    pub level: f64,
    pub decay: f64,
    pub correlation: f64,
    /// Seed of the loading directions.
    pub seed: u64,
    pub corn: f64,
    pub ethanol: f64,
    pub gas: f64,
    pub basis: BasisFamily,
    pub train_paths: usize,
    pub eval_paths: usize,
    pub train_seed: u64,
    pub eval_seed: u64,
    pub solver: SolverSpec,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        let cal = SyntheticCalibration::default();
        SyntheticOptions {
            id: None,
            stages: 6,
            factors: cal.factors,
            level: cal.level,
            decay: cal.decay,
            correlation: cal.correlation,
            seed: cal.seed,
            corn: 6.0,
            ethanol: 2.55,
            gas: 4.0,
            basis: BasisFamily::Full,
            train_paths: 500,
            eval_paths: 5000,
            train_seed: 1,
            eval_seed: 2,
            solver: SolverSpec::default(),
        }
    }
}

/// Instance with benchmark plant parameters, flat initial curves and
/// exponentially decaying synthetic loadings.
pub fn make_synthetic_instance(opts: &SyntheticOptions) -> Result<InstanceSpec> {
    if opts.stages < 2 || opts.factors < 1 {
        return Err(config("a synthetic instance needs at least 2 stages and 1 factor"));
    }
    let id = opts.id.clone().unwrap_or_else(|| {
        format!("synthetic-i{}-k{}-s{}", opts.stages, opts.factors, opts.seed)
    });
    let spec = InstanceSpec {
        id,
        initial_mode: ReducedMode::Operational,
        basis: opts.basis,
        train_paths: opts.train_paths,
        eval_paths: opts.eval_paths,
        train_seed: opts.train_seed,
        eval_seed: opts.eval_seed,
        plant: PlantParams::ethanol(opts.stages),
        initial: InitialCurves::flat(opts.stages, opts.corn, opts.ethanol, opts.gas),
        market: MarketSpec::Synthetic(SyntheticCalibration {
            factors: opts.factors,
            level: opts.level,
            decay: opts.decay,
            correlation: opts.correlation,
            dt: 1.0 / 12.0,
            seed: opts.seed,
        }),
        solver: opts.solver.clone(),
    };
    spec.validate()?;
    Ok(spec)
}
