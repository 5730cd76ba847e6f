//! Per-cell gradient-boosted surrogate models for peak flood inundation depth.
//!
//! The crate covers the whole chain: a grid of channel and non-channel cells grouped into
//! watersheds, gage-to-cell rainfall fields, rainfall feature engineering, a synthetic
//! hydrologic response used as ground truth, a from-scratch boosted-tree regressor, the
//! per-cell training pipeline, and evaluation reports.

pub mod cli;
pub mod config;
pub mod features;
pub mod gbdt;
pub mod grid;
pub mod matrix;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod rainfall;
