//! Experiment orchestration: scenarios, realizations, statistics, output.

pub mod config;
pub mod output;
pub mod runner;
pub mod scenario;
pub mod stats;
pub mod summary;
pub mod world;

use thiserror::Error;

pub use config::{
    Algorithm, ApowSimConfig, DetourJamSpec, ExperimentConfig, ExperimentKind, JamSpec, LearnCriterion, LedgerConfig,
    NetworkSource, RelayModel, StateRef,
};
pub use output::{write_outputs, write_records_csv, OutputPaths, RECORD_COLUMNS};
pub use runner::{plan_runs, run_experiment, run_realization, run_spec, ExperimentOutcome, ExperimentRun, RealizationRun, RunSpec, TestRecord};
pub use scenario::Scenario;
pub use stats::{episodes_to_learn, exponential_fit, linear_fit, mean_ci, median_ci, spearman, ExpFit, LinearFit, MeanCi, MedianCi};
pub use summary::{summarize, EpisodeStat, ExperimentSummary, LearnKind, LearnStat, LedgerTotals, RunSummary, ScalingSummary};
pub use world::{LedgerStats, LedgerWorld};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },
    #[error("realization {realization}: {message}")]
    Run { realization: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn is_config(&self) -> bool {
        matches!(self, HarnessError::Config { .. })
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub(crate) fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `tag` for one realization.
pub fn stream_seed(master: u64, realization: usize, tag: u64) -> u64 {
    mix(mix(mix(master) ^ realization as u64) ^ tag)
}
