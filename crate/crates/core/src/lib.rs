//! Certification toolkit for the n-setting Clifford Bell functional.

pub mod bell;
pub mod cli;
pub mod clifford;
pub mod error;
pub mod extract;
pub mod game;
pub mod opalg;
pub mod random;
pub mod robustness;
pub mod sos;

pub use error::{BellError, Result};
