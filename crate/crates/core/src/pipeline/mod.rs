//! Per-cell training over a corpus, the combined channel/non-channel predictor, and
//! test-split evaluation.

mod evaluate;
mod predict;
pub mod split;
pub mod store;
mod train;

pub use evaluate::{evaluate_predictor, evaluate_store, predict_series, Evaluation};
pub use predict::{build_combined, combined_source, predict_event, CombinedPredictor, DepthMap};
pub use split::{split_events, EventSplit, SplitSpec};
pub use store::{CellModel, CellRecord, CellStatus, CellTrainMetrics, ExperimentRecord, StoreLock, StoreManifest};
pub use train::{cell_seed, corpus_features, train_all, train_cell, TrainOptions, TrainSummary, TrainingData};

use thiserror::Error;

use crate::features::{Experiment, FeatureError};
use crate::gbdt::GbdtError;
use crate::metrics::MetricError;
use crate::oracle::OracleError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0} events cannot fill non-empty train/validation/test partitions")]
    TooFewEvents(usize),
    #[error("store was built from corpus {store}, but the corpus hash is {corpus}; use --force to retrain")]
    CorpusMismatch { store: String, corpus: String },
    #[error("store {0} is locked by another writer")]
    Locked(String),
    #[error("no usable {experiment} model for cell {cell}: {reason}")]
    MissingModel {
        cell: usize,
        experiment: Experiment,
        reason: String,
    },
    #[error("store: {0}")]
    Store(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Gbdt(#[from] GbdtError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}
