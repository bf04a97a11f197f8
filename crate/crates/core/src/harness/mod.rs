//! Experiment orchestration: trials, grids and reports.

mod config;
mod grid;
mod pool;
mod report;
mod run;

pub use config::{
    apply_override, BackendSpec, ConfigFile, EmbeddingSpec, ExperimentConfig, GridSpec,
    StrategyMatrix,
};
pub use grid::{grid_cells, run_grid, GridCell};
pub use pool::parallel_map;
pub use report::{
    deltas_vs_baseline, emit_report, render_csv, validate_report_json, write_run_manifest,
    Aggregate, CellReport, CellStatus, CellTiming, DatumRecord, EmittedFiles, MemberVote,
    ReportError, ReportFormat, ReportSet, RunManifest, TrialReport, CSV_COLUMNS,
    NON_COMPARABLE_ERRORED_FRACTION, REPORT_SCHEMA,
};
pub use run::{load_experiment_data, run_experiment, ExperimentData, Runtime};

use thiserror::Error;

use crate::augment::CommitteeError;
use crate::datasets::DatasetError;
use crate::embedding::EmbeddingError;
use crate::llm::LlmError;
use crate::prompt::PromptError;
use crate::strategies::StrategyError;
use crate::voting::VoteError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Committee(#[from] CommitteeError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Vote(#[from] VoteError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
