//! Experiment harness around `beamlab-core`: declarative JSON configs, beam
//! fidelity and PEB sweep runners, CSV/manifest export, bundled presets.

pub mod config;
pub mod csvio;
pub mod experiments;
pub mod presets;

use std::fmt;

/// What went wrong during a run, split by exit-code class: configuration
/// problems exit with 2, numerical or runtime failures with 3.
#[derive(Debug)]
pub enum RunError {
    Config(String),
    Numerical(String),
    Io(std::io::Error),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(msg) => write!(f, "config error: {msg}"),
            RunError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            RunError::Io(e) => write!(f, "io failure: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

impl From<beamlab_core::Error> for RunError {
    fn from(e: beamlab_core::Error) -> Self {
        RunError::Numerical(e.to_string())
    }
}

impl RunError {
    /// Process exit code for this failure class.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
        }
    }
}
