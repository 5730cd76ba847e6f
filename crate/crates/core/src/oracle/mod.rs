//! Synthetic ground truth: storm corpora and a closed-form peak-depth response that
//! stands in for hydrodynamic simulation output.

pub mod corpus;
pub mod layout;
pub mod response;
pub mod storm;

use thiserror::Error;

pub use corpus::{generate_corpus, read_corpus, write_corpus, Corpus, CorpusManifest, Event};
pub use layout::{build_synthetic_grid, SyntheticGridSpec};
pub use response::{simulate_peak_depth, Drainage, OracleParams};
pub use storm::{generate_events, Range, StormConfig};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("grid has no cells")]
    DegenerateGrid,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("corpus already exists at {0} (use --force to overwrite)")]
    Exists(String),
    #[error("corpus hash mismatch: manifest {expected}, files {found}")]
    HashMismatch { expected: String, found: String },
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
