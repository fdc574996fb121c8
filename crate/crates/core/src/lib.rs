//! Valuation of merchant energy production assets as compound switching and
//! timing options, with pathwise-optimized dual bounds.

pub mod basis;
pub mod bounds;
pub mod error;
pub mod market;
pub mod lsm;
pub mod mdp;
pub mod pathlp;
pub mod solve;

pub use error::{Error, Result};
