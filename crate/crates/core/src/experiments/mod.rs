//! Experiment harness: synthetic trial generation, log ingestion, running
//! estimators over trials, metrics, and report/plot output.

pub mod config;
pub mod generate;
pub mod report;
pub mod run;
pub mod suite;
pub mod trajectory;
pub mod trial;

use thiserror::Error;

use crate::beam_oracle::OracleError;
use crate::estimators::EstimatorError;
use crate::kinematics::KinematicsError;
use crate::sensor_model::ModelError;
use crate::signal::SignalError;

pub use config::ExperimentConfig;
pub use generate::{generate_trial, NoiseSpec, ObjectPreset, RingSpec};
pub use report::{emit_plotdata, emit_report, ReportFormat};
pub use run::{run_estimator, MetricsReport, RunConfig, RunOutput, TrialMetrics};
pub use trajectory::{parse_trajectory, Waypoint};
pub use trial::{ingest_log, IngestedLog, TrialRecord, TrialSample};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trial {trial}: {source}")]
    Oracle {
        trial: usize,
        #[source]
        source: OracleError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("row {row}, column `{column}`: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("row {row}: timestamps must be strictly increasing")]
    NonIncreasingTime { row: usize },
    #[error(transparent)]
    Trajectory(#[from] trajectory::TrajectoryError),
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
