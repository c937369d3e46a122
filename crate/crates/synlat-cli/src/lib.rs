//! Library half of the `synlat` binary: config schema and loading, run
//! execution, parameter sweeps, the built-in scenario catalog, and the
//! CSV/JSON output plumbing. Kept as a lib so integration tests can drive
//! the same code paths the binary uses.

use std::fmt;

pub mod catalog;
pub mod config;
pub mod output;
pub mod runner;
pub mod steps;
pub mod sweep;

/// Configuration or usage error, reported with a key path where one exists.
/// The binary maps these to exit code 2; runtime failures (solver or fit
/// non-convergence, I/O) exit 1 with partial outputs retained.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}
