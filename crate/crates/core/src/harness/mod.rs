//! Experiment protocol: training-task generation, the knowledge-base
//! training phase, the test phase against three methods, convergence
//! metrics and the files they are recorded in.

mod config;
mod experiment;
mod metrics;
mod persist;
mod tasks;

use std::path::{Path, PathBuf};
use thiserror::Error;

use crate::env::EnvError;
use crate::lifelong::LifelongError;
use crate::rl::RlError;

pub use config::ExperimentConfig;
pub use experiment::{
    load_records, report, run_experiment, run_single, run_testing, run_training, write_config, write_testing,
    write_training, ExperimentOutcome, RunMeta, TrainedTask, Training, TrainingReport, CONFIG_FILE, CURVES_FILE, KB_FILE,
    MEAN_CURVES_FILE, RUNS_FILE, SUMMARY_FILE, TIMINGS_FILE, TRAINING_FILE,
};
pub use metrics::{convergence_iteration, final_return, smooth, Method, MethodStats, RunRecord, Summary, TaskSummary};
pub use persist::{
    curves_to_csv, decode_kb, encode_kb, kb_digest, load_kb, read_curves, read_json, save_kb, write_atomic, write_json,
    SnapshotHeader, SNAPSHOT_VERSION,
};
pub use tasks::{default_test_profiles, generate_training_tasks, test_tasks, TestProfile, TrainingRanges};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Rl(#[from] RlError),
    #[error(transparent)]
    Lifelong(#[from] LifelongError),
    #[error("corrupt snapshot: {0}")]
    Snapshot(String),
    #[error("snapshot version {found} is not supported (expected {expected})")]
    SnapshotVersion { found: u64, expected: u32 },
    #[error("knowledge base changed during testing")]
    KbMutated,
    #[error("metric: {0}")]
    Metric(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
