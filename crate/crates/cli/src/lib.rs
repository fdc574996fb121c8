//! Experiment harness: instance files, pipeline orchestration and reports.

pub mod instance;
pub mod pipeline;
pub mod report;

pub use instance::{make_synthetic_instance, InstanceSpec, MarketSpec, SolverSpec, SyntheticOptions};
pub use pipeline::{run_pipeline, Method};
pub use report::{Manifest, RunReport};
