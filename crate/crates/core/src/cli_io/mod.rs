//! Configuration ingestion, the command implementations behind the binary,
//! and CSV/JSON export.

pub mod commands;
pub mod config;
pub mod format;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use commands::{
    cmd_design, cmd_mm1, cmd_simulate, cmd_solve, cmd_sweep, load_allocation, sim_config, sweep_grid, DesignReport,
    Document, Mm1Row, SimulateOptions, SimulateReport, SolveReport, SweepRow,
};
pub use config::{load_config, ConfigFile};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failures surfaced by the command layer, each with its own exit code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("solver error: {0}")]
    Solver(crate::Error),
    #[error("simulation error: {0}")]
    Simulation(crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) | CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Simulation(_) => 4,
        }
    }
}

/// Everything needed to reproduce an output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ConfigFile,
    pub tol: f64,
    pub clamp_enabled: bool,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ConfigFile) -> Self {
        Self {
            command: command.to_string(),
            version: VERSION.to_string(),
            config: config.clone(),
            tol: config.solver.tol,
            clamp_enabled: config.solver.clamp_enabled,
            outputs: Vec::new(),
            seed: None,
        }
    }
}
