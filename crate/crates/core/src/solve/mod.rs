//! Block PCA preconditioning, cyclic block coordinate descent and the LP
//! backend abstraction.

pub mod bpca;
pub mod cbcd;
pub mod eigen;
pub mod lp;

pub use bpca::{bpca, BpcaTransform};
pub use cbcd::{cbcd, solve_monolithic, BlockPartition, CbcdOptions, CbcdResult, SweepRow};
pub use eigen::{eigen_sym, SymmetricEigen};
pub use lp::{lp_backend_solve, HighsBackend, HighsOption, LpBackend, LpProblem, LpSolution, LpStatus, Sense};
