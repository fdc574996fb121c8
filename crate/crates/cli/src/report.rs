//! Run reports: CSV tables and the run manifest.

use std::fs;
use std::path::Path;

use merchant_po::bounds::{EstimateKind, PolicyValueEstimate};
use merchant_po::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::instance::InstanceSpec;
use crate::pipeline::Method;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub instance: String,
    pub method: String,
    pub kind: String,
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub seed: u64,
}

impl BoundRow {
    pub fn new(instance: &str, method: Method, e: &PolicyValueEstimate) -> Self {
        BoundRow {
            instance: instance.to_string(),
            method: method.to_string(),
            kind: e.kind.as_str().to_string(),
            mean: e.mean,
            std_error: e.std_error,
            paths: e.path_count,
            seed: e.seed,
        }
    }
}

/// PO dual bound as a percentage of the LSM dual bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub instance: String,
    pub po_dual: f64,
    pub lsm_dual: f64,
    pub ratio_percent: f64,
}

/// `100 (dual - lower) / dual` of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub instance: String,
    pub method: String,
    pub dual: f64,
    pub lower: f64,
    pub gap_percent: f64,
}

impl GapRow {
    pub fn new(instance: &str, method: Method, dual: f64, lower: f64) -> Self {
        GapRow {
            instance: instance.to_string(),
            method: method.to_string(),
            dual,
            lower,
            gap_percent: 100.0 * (dual - lower) / dual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepLogRow {
    pub instance: String,
    pub sweep: usize,
    pub block: usize,
    pub sub_lp_objective: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub instance: String,
    pub method: String,
    pub stage: usize,
    pub action: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbandonRow {
    pub instance: String,
    pub method: String,
    pub stage: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub instance: String,
    pub method: String,
    pub quantity: String,
    pub value: f64,
}

impl TrainingRow {
    pub fn new(instance: &str, method: Method, quantity: &str, value: f64) -> Self {
        TrainingRow {
            instance: instance.to_string(),
            method: method.to_string(),
            quantity: quantity.to_string(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub instance: String,
    pub method: String,
    pub phase: String,
    pub seconds: f64,
}

impl TimingRow {
    pub fn new(instance: &str, method: Method, phase: &str, seconds: f64) -> Self {
        TimingRow {
            instance: instance.to_string(),
            method: method.to_string(),
            phase: phase.to_string(),
            seconds,
        }
    }
}

/// Results of one pipeline run. Everything except `timing` is a function of
/// the instance and its seeds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub instance: String,
    pub bounds: Vec<BoundRow>,
    pub ratios: Vec<RatioRow>,
    pub gaps: Vec<GapRow>,
    pub sweeps: Vec<SweepLogRow>,
    pub actions: Vec<ActionRow>,
    pub abandonment: Vec<AbandonRow>,
    pub training: Vec<TrainingRow>,
    pub timing: Vec<TimingRow>,
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic report files, in writing order.
pub const REPORT_FILES: [&str; 7] = [
    "bounds.csv",
    "ratios.csv",
    "gaps.csv",
    "sweeps.csv",
    "actions.csv",
    "abandonment.csv",
    "training.csv",
];

impl RunReport {
    pub fn new(instance: &str) -> Self {
        RunReport {
            instance: instance.to_string(),
            ..Default::default()
        }
    }

    pub fn bound(&self, method: Method, kind: EstimateKind) -> Option<&BoundRow> {
        self.bounds
            .iter()
            .find(|r| r.method == method.as_str() && r.kind == kind.as_str())
    }

    pub fn dual(&self, method: Method) -> Option<&BoundRow> {
        self.bound(method, EstimateKind::Dual)
    }

    pub fn lower(&self, method: Method) -> Option<&BoundRow> {
        self.bound(method, EstimateKind::Lower)
    }

    /// Writes the report tables and `timing.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_table(&dir.join(REPORT_FILES[0]), &self.bounds)?;
        write_table(&dir.join(REPORT_FILES[1]), &self.ratios)?;
        write_table(&dir.join(REPORT_FILES[2]), &self.gaps)?;
        write_table(&dir.join(REPORT_FILES[3]), &self.sweeps)?;
        write_table(&dir.join(REPORT_FILES[4]), &self.actions)?;
        write_table(&dir.join(REPORT_FILES[5]), &self.abandonment)?;
        write_table(&dir.join(REPORT_FILES[6]), &self.training)?;
        write_table(&dir.join("timing.csv"), &self.timing)?;
        Ok(())
    }

    /// Plain-text summary of the bound, gap and ratio tables.
    pub fn summary(&self) -> String {
        let mut out = format!("instance {}\n", self.instance);
        out.push_str(&format!(
            "{:<13} {:<9} {:>12} {:>10} {:>7}\n",
            "method", "kind", "mean", "se", "paths"
        ));
        for r in &self.bounds {
            out.push_str(&format!(
                "{:<13} {:<9} {:>12.6} {:>10.6} {:>7}\n",
                r.method, r.kind, r.mean, r.std_error, r.paths
            ));
        }
        for g in &self.gaps {
            out.push_str(&format!("gap {:<13} {:>8.3}%\n", g.method, g.gap_percent));
        }
        for r in &self.ratios {
            out.push_str(&format!("po/lsm dual {:>8.3}%\n", r.ratio_percent));
        }
        out
    }
}

/// Record of what a run was asked to do, written before any computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub methods: Vec<Method>,
    pub lp_backend: String,
    pub instance: InstanceSpec,
}

impl Manifest {
    pub fn new(command: &str, methods: &[Method], lp_backend: &str, instance: &InstanceSpec) -> Self {
        Manifest {
            tool: "merchant-po".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            methods: methods.to_vec(),
            lp_backend: lp_backend.to_string(),
            instance: instance.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Config(format!("cannot encode manifest: {e}")))?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
