//! Reproducible experiments over phantom datasets: generation, training,
//! detection, evaluation and the two comparison benches. The CLI is a thin
//! wrapper around this module.

mod commands;
mod config;
mod dataset;

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{
    conf_bench, detect, detect_dataset, eval, phantom_gen, rep_bench, train_model, BenchReport, DetectReport,
    Detection, PredictorSource, TrainReport, DETECTIONS_FILE, REPORT_FILE,
};
pub use config::{ExperimentConfig, HeadsSelection, OracleConfig, OracleKind, PathsConfig, DEFAULT_OUTPUT_DIR};
pub use dataset::{load_dataset, read_manifest, sample_name, write_manifest, Dataset, ManifestRow, MANIFEST};

use crate::inference::InferenceError;
use crate::metrics::MetricsError;
use crate::phantom::PhantomError;
use crate::predictor::train::TrainError;
use crate::predictor::CheckpointError;
use crate::volume::VolumeError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    /// Bad settings or missing inputs; the CLI exits with status 2.
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    /// Malformed data files.
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Phantom(#[from] PhantomError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Volume(#[from] VolumeError),
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv { path: path.to_path_buf(), source }
    }

    /// Whether the failure is the caller's settings rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Self::Config(_)
                | Self::Phantom(PhantomError::InvalidSpec(_))
                | Self::Train(TrainError::Config(_))
                | Self::Inference(InferenceError::Config(_))
        )
    }
}
