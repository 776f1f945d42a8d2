//! Experiment harness: presets, scenario runs, parameter sweeps, exporters and the CLI.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dynamics::DynamicsError;
use crate::metrics::MetricsError;
use crate::model::ConfigErrors;

pub mod cli;
pub mod presets;
pub mod raster;
pub mod scenario;
pub mod sweep;

pub use presets::{all_presets, preset, preset_by_name, text_lambda_preset, ModelPreset};
pub use raster::{raster_pgm, read_snapshot_csv, render_raster, RasterChannel};
pub use scenario::{run_scenario, ScenarioOptions, ScenarioOutput, Summary};
pub use sweep::{derive_seed, run_sweep, run_sweep_cell, SweepMean, SweepResult, SweepRow, SweepSpec};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("UnknownModelId: {0:?} is not a model (expected 1-7 or text-lambda)")]
    UnknownModelId(String),
    #[error(transparent)]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("IoFailure: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("ParseFailure: {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("InvalidSweep: {0}")]
    InvalidSweep(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }

    /// Bad input from the caller rather than a failure while running.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            HarnessError::UnknownModelId(_)
                | HarnessError::Config(_)
                | HarnessError::InvalidSweep(_)
                | HarnessError::Dynamics(DynamicsError::Config(_))
        )
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    std::fs::write(path, contents).map_err(|e| HarnessError::io(path, e))
}

pub(crate) fn create_dir(path: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}
