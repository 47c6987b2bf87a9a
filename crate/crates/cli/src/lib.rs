//! Experiment harness around the `spil-core` trainer: spec files, the
//! multi-seed multi-method sweep runner, CSV curves and JSON checkpoints.

pub mod checkpoint;
pub mod csvio;
pub mod runner;
pub mod spec;

use std::fmt;

/// Harness-level errors, split by exit-status class.
#[derive(Debug)]
pub enum CliError {
    /// Spec-file problems: missing, malformed, or invariant violations.
    Spec(String),
    /// Filesystem and encoding failures while writing artifacts.
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Spec(m) => write!(f, "spec error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}
