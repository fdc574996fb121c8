use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use merchant_po::basis::BasisFamily;
use merchant_po::lsm::VfaWeights;
use merchant_po::market::Commodity;
use merchant_po::solve::{HighsBackend, LpBackend};
use merchant_po::{Error, Result};
use merchant_po_cli::instance::{write_calibration, MarketSpec};
use merchant_po_cli::pipeline::{evaluate, fit_lsm, fit_po, Context};
use merchant_po_cli::report::{AbandonRow, ActionRow, BoundRow, SweepLogRow, TimingRow, TrainingRow};
use merchant_po_cli::{
    make_synthetic_instance, run_pipeline, InstanceSpec, Manifest, Method, RunReport, SolverSpec,
    SyntheticOptions,
};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "merchant-po", version, about = "Pathwise-optimized valuation of a merchant ethanol plant")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic instance file.
    MakeInstance(MakeInstanceArgs),
    /// Simulate training or evaluation forward curves to CSV.
    Simulate(SimulateArgs),
    /// Fit least squares Monte Carlo weights.
    SolveLsm(RunArgs),
    /// Fit pathwise optimization weights (PLP, block PCA, CBCD, regression).
    SolvePo(RunArgs),
    /// Dual and lower bounds of a weights file on the evaluation paths.
    Bounds(BoundsArgs),
    /// Run the full pipeline and write the report tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct MakeInstanceArgs {
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value_t = 6)]
    stages: usize,
    #[arg(long, default_value_t = 2)]
    factors: usize,
    /// Annualized volatility at zero time-to-maturity.
    #[arg(long, default_value_t = 0.35)]
    level: f64,
    /// Volatility decay rate in time-to-maturity (per year).
    #[arg(long, default_value_t = 0.8)]
    decay: f64,
    /// Weight of the factor shared by all commodities.
    #[arg(long, default_value_t = 0.6)]
    correlation: f64,
    /// Seed of the synthetic loadings.
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Flat initial corn price ($/bushel).
    #[arg(long, default_value_t = 6.0)]
    corn: f64,
    /// Flat initial ethanol price ($/gallon).
    #[arg(long, default_value_t = 2.55)]
    ethanol: f64,
    /// Flat initial natural gas price ($/MMBtu).
    #[arg(long, default_value_t = 4.0)]
    gas: f64,
    #[arg(long, value_parser = parse_basis, default_value = "full")]
    basis: BasisFamily,
    #[arg(long, default_value_t = 500)]
    train_paths: usize,
    #[arg(long, default_value_t = 5000)]
    eval_paths: usize,
    #[arg(long, default_value_t = 1)]
    train_seed: u64,
    #[arg(long, default_value_t = 2)]
    eval_seed: u64,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 50)]
    max_sweeps: usize,
    /// Also write the loadings to this calibration file and reference it.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// Output file; standard output if omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

/// Instance file plus overrides of its fields.
#[derive(Args)]
struct InstanceArgs {
    #[arg(long, short)]
    instance: PathBuf,
    #[arg(long)]
    train_paths: Option<usize>,
    #[arg(long)]
    eval_paths: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
    #[arg(long)]
    eval_seed: Option<u64>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    beta_bound: Option<f64>,
}

impl InstanceArgs {
    fn load(&self) -> Result<InstanceSpec> {
        let mut spec = InstanceSpec::load(&self.instance)?;
        if let Some(v) = self.train_paths {
            spec.train_paths = v;
        }
        if let Some(v) = self.eval_paths {
            spec.eval_paths = v;
        }
        if let Some(v) = self.train_seed {
            spec.train_seed = v;
        }
        if let Some(v) = self.eval_seed {
            spec.eval_seed = v;
        }
        if let Some(v) = self.blocks {
            spec.solver.blocks = v;
        }
        if let Some(v) = self.epsilon {
            spec.solver.epsilon = v;
        }
        if let Some(v) = self.max_sweeps {
            spec.solver.max_sweeps = v;
        }
        if self.beta_bound.is_some() {
            spec.solver.beta_bound = self.beta_bound;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Output directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Which path set to simulate.
    #[arg(long, value_parser = ["train", "eval"], default_value = "eval")]
    set: String,
    /// Output CSV file.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Weights file written by solve-lsm or solve-po.
    #[arg(long, short)]
    weights: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Comma-separated subset of lsm, po, zero_penalty, static.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, default_value = "lsm,po,zero_penalty,static")]
    methods: Vec<Method>,
    #[arg(long, short)]
    out: PathBuf,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

fn parse_basis(s: &str) -> std::result::Result<BasisFamily, String> {
    match s {
        "full" => Ok(BasisFamily::Full),
        "linear" => Ok(BasisFamily::Linear),
        _ => Err(format!("unknown basis family `{s}` (full | linear)")),
    }
}

/// Weights written by the solve verbs: penalty weights for the dual bound and
/// policy weights for the greedy lower bound.
#[derive(Serialize, Deserialize)]
struct WeightsFile {
    method: Method,
    dual: VfaWeights,
    policy: VfaWeights,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("cannot encode {}: {e}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

fn make_instance(a: &MakeInstanceArgs) -> Result<()> {
    let opts = SyntheticOptions {
        id: a.id.clone(),
        stages: a.stages,
        factors: a.factors,
        level: a.level,
        decay: a.decay,
        correlation: a.correlation,
        seed: a.seed,
        corn: a.corn,
        ethanol: a.ethanol,
        gas: a.gas,
        basis: a.basis,
        train_paths: a.train_paths,
        eval_paths: a.eval_paths,
        train_seed: a.train_seed,
        eval_seed: a.eval_seed,
        solver: SolverSpec {
            blocks: a.blocks,
            epsilon: a.epsilon,
            max_sweeps: a.max_sweeps,
            beta_bound: None,
        },
    };
    let mut spec = make_synthetic_instance(&opts)?;
    if let Some(path) = &a.calibration {
        write_calibration(path, &spec.loadings()?)?;
        // Referenced relative to the instance file when both share a directory.
        let reference = match (a.out.as_ref().and_then(|o| o.parent()), path.parent()) {
            (Some(d), Some(p)) if d == p => PathBuf::from(path.file_name().expect("file name")),
            _ => path.clone(),
        };
        spec.market = MarketSpec::File(reference);
    }
    match &a.out {
        Some(path) => spec.save(path),
        None => {
            print!("{}", spec.to_toml()?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct PriceRow {
    path: usize,
    stage: usize,
    commodity: String,
    maturity: usize,
    price: f64,
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let spec = a.instance.load()?;
    let ctx = Context::new(&spec)?;
    let set = if a.set == "train" { ctx.training()? } else { ctx.evaluation()? };
    let mut w = csv::Writer::from_path(&a.out).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for (l, path) in set.scenarios.iter().enumerate() {
        for i in 0..path.stages() {
            for c in Commodity::ALL {
                for j in i..path.stages() {
                    w.serialize(PriceRow {
                        path: l,
                        stage: i,
                        commodity: c.to_string(),
                        maturity: j,
                        price: path.price(i, c, j),
                    })
                    .map_err(|e| Error::Io(std::io::Error::other(e)))?;
                }
            }
        }
    }
    w.flush()?;
    println!("{} paths, seed {} -> {}", set.len(), set.seed, a.out.display());
    Ok(())
}

fn solve_lsm(a: &RunArgs, backend: &HighsBackend) -> Result<()> {
    let spec = a.instance.load()?;
    Manifest::new("solve-lsm", &[Method::Lsm], backend.name(), &spec).write(&a.out)?;
    let ctx = Context::new(&spec)?;
    let train = ctx.training()?;
    let beta = fit_lsm(&ctx, &train)?;
    let obj = ctx.objective(&beta, &train)?;
    write_json(
        &a.out.join("weights.json"),
        &WeightsFile {
            method: Method::Lsm,
            dual: beta.clone(),
            policy: beta,
        },
    )?;
    write_csv(
        &a.out.join("training.csv"),
        &[TrainingRow::new(&spec.id, Method::Lsm, "train_objective", obj)],
    )?;
    println!("lsm training objective {obj:.6}");
    Ok(())
}

fn solve_po(a: &RunArgs, backend: &HighsBackend) -> Result<()> {
    let spec = a.instance.load()?;
    Manifest::new("solve-po", &[Method::Po], backend.name(), &spec).write(&a.out)?;
    let ctx = Context::new(&spec)?;
    let train = ctx.training()?;
    let fit = fit_po(&ctx, &train, backend)?;
    let c = &fit.cbcd;
    let sweeps: Vec<SweepLogRow> = c
        .log
        .iter()
        .map(|r| SweepLogRow {
            instance: spec.id.clone(),
            sweep: r.sweep,
            block: r.block,
            sub_lp_objective: r.sub_lp_objective,
            objective: r.objective,
        })
        .collect();
    write_csv(&a.out.join("sweeps.csv"), &sweeps)?;
    let timing: Vec<TimingRow> = fit
        .timing
        .iter()
        .map(|(p, s)| TimingRow::new(&spec.id, Method::Po, p, *s))
        .collect();
    write_csv(&a.out.join("timing.csv"), &timing)?;
    write_json(
        &a.out.join("weights.json"),
        &WeightsFile {
            method: Method::Po,
            dual: fit.plp.clone(),
            policy: fit.policy.clone(),
        },
    )?;
    println!(
        "po training objective {:.6} -> {:.6} in {} sweeps{}",
        c.initial_objective,
        c.objective,
        c.sweep_objectives.len(),
        if c.converged { "" } else { " (sweep limit reached)" }
    );
    Ok(())
}

fn bounds_cmd(a: &BoundsArgs, backend: &HighsBackend) -> Result<()> {
    let spec = a.instance.load()?;
    let text = fs::read_to_string(&a.weights)?;
    let w: WeightsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("invalid weights file {}: {e}", a.weights.display())))?;
    Manifest::new("bounds", &[w.method], backend.name(), &spec).write(&a.out)?;
    let ctx = Context::new(&spec)?;
    w.dual.check_shape(&ctx.spec)?;
    w.policy.check_shape(&ctx.spec)?;
    let eval = ctx.evaluation()?;
    let ev = evaluate(&ctx, &eval, &w.dual, &w.policy)?;
    let bounds = [
        BoundRow::new(&spec.id, w.method, &ev.dual),
        BoundRow::new(&spec.id, w.method, &ev.lower.estimate),
    ];
    write_csv(&a.out.join("bounds.csv"), &bounds)?;
    let actions: Vec<ActionRow> = ev
        .lower
        .actions
        .iter()
        .map(|c| ActionRow {
            instance: spec.id.clone(),
            method: w.method.to_string(),
            stage: c.stage,
            action: c.action.to_string(),
            count: c.count,
        })
        .collect();
    write_csv(&a.out.join("actions.csv"), &actions)?;
    let abandonment: Vec<AbandonRow> = ev
        .lower
        .abandonment
        .iter()
        .enumerate()
        .map(|(stage, count)| AbandonRow {
            instance: spec.id.clone(),
            method: w.method.to_string(),
            stage,
            count: *count,
        })
        .collect();
    write_csv(&a.out.join("abandonment.csv"), &abandonment)?;
    for b in &bounds {
        println!("{:<6} {:>12.6} ({:.6})", b.kind, b.mean, b.std_error);
    }
    Ok(())
}

fn report_cmd(a: &ReportArgs, backend: &HighsBackend) -> Result<()> {
    let spec = a.instance.load()?;
    Manifest::new("report", &a.methods, backend.name(), &spec).write(&a.out)?;
    let report: RunReport = run_pipeline(&spec, &a.methods, backend)?;
    report.write(&a.out)?;
    print!("{}", report.summary());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::Domain(_) => 2,
        Error::Numeric(_) => 3,
        Error::Solver(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let backend = HighsBackend::default();
    let result = match &cli.command {
        Command::MakeInstance(a) => make_instance(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::SolveLsm(a) => solve_lsm(a, &backend),
        Command::SolvePo(a) => solve_po(a, &backend),
        Command::Bounds(a) => bounds_cmd(a, &backend),
        Command::Report(a) => report_cmd(a, &backend),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
