use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use crate::features::{cell_matrix, event_features, fit_scaler, EventFeatures, Experiment};
use crate::gbdt::{train_with_history, Hyperparams};
use crate::grid::{CellId, Grid};
use crate::oracle::storm::splitmix64;
use crate::oracle::Corpus;

use super::split::{split_events, EventSplit, SplitSpec};
use super::store::{
    cell_path, experiment_dir, io_err, read_cell_model, read_store_manifest, write_atomic, write_store_manifest,
    CellModel, CellRecord, CellStatus, CellTrainMetrics, ExperimentRecord, StoreLock, StoreManifest, MANIFEST_FILE,
};
use super::PipelineError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub workers: usize,
    /// Retrain cells that already have a valid model file, and replace a manifest
    /// built from another corpus or split.
    pub force: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions { workers: 1, force: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub experiment: Experiment,
    pub trained: usize,
    pub skipped: usize,
    pub record: ExperimentRecord,
}

impl TrainSummary {
    pub fn failed(&self) -> usize {
        self.record.failed().count()
    }
}

/// Seed for one cell's model, independent of scheduling.
pub fn cell_seed(seed: u64, cell: usize) -> u64 {
    splitmix64(seed ^ splitmix64(cell as u64))
}

/// Features of every event in a corpus, in event order.
pub fn corpus_features(corpus: &Corpus) -> Result<Vec<EventFeatures>, PipelineError> {
    Ok(corpus
        .events
        .par_iter()
        .map(|e| event_features(&corpus.grid, &e.field))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Everything a cell needs to train, shared read-only across workers.
pub struct TrainingData<'a> {
    pub grid: &'a Grid,
    pub events: &'a [EventFeatures],
    /// `depth[event][cell]`.
    pub depth: Vec<&'a [f64]>,
    pub split: &'a EventSplit,
    pub corpus_hash: &'a str,
}

/// Trains one cell's model on the training split, checkpointed on the validation split.
pub fn train_cell(
    data: &TrainingData<'_>,
    cell: usize,
    experiment: Experiment,
    hp: &Hyperparams,
) -> Result<CellModel, PipelineError> {
    let fm = cell_matrix(data.events, CellId(cell), experiment, data.grid.n_watersheds());
    let x_train = fm.values.select_rows(&data.split.train);
    let x_valid = fm.values.select_rows(&data.split.valid);
    let y_train: Vec<f64> = data.split.train.iter().map(|&e| data.depth[e][cell]).collect();
    let y_valid: Vec<f64> = data.split.valid.iter().map(|&e| data.depth[e][cell]).collect();
    let scaler = fit_scaler(&x_train, &fm.feature_names)?;
    let x_train = scaler.apply_matrix(&x_train)?;
    let x_valid = scaler.apply_matrix(&x_valid)?;

    let hp = Hyperparams {
        seed: cell_seed(hp.seed, cell),
        ..hp.clone()
    };
    let (mut model, history) = train_with_history(&x_train, &y_train, &x_valid, &y_valid, &hp)?;
    model.truncate_to_best();
    let model = model.with_feature_names(fm.feature_names)?;
    let best = model.best_iteration;
    Ok(CellModel {
        cell_id: cell,
        experiment,
        corpus_hash: data.corpus_hash.to_string(),
        scaler,
        metrics: CellTrainMetrics {
            best_iteration: best,
            train_rmse: history.train_rmse[best],
            valid_rmse: (!y_valid.is_empty()).then(|| history.valid_rmse[best]),
        },
        model,
    })
}

/// An existing model file counts as done only if it was trained on this corpus with
/// these hyperparameters.
fn reusable(store: &Path, experiment: Experiment, cell: usize, corpus_hash: &str, hp: &Hyperparams) -> Option<CellModel> {
    if !cell_path(store, experiment, cell).exists() {
        return None;
    }
    let m = read_cell_model(store, experiment, cell).ok()?;
    let expected = Hyperparams {
        seed: cell_seed(hp.seed, cell),
        ..hp.clone()
    };
    (m.corpus_hash == corpus_hash && m.model.hyperparams == expected).then_some(m)
}

/// Trains one model per grid cell for `experiment` into `store`, skipping cells whose
/// model files are already current unless `opts.force`. Cell failures are recorded in
/// the manifest and do not stop the run.
pub fn train_all(
    corpus: &Corpus,
    experiment: Experiment,
    hp: &Hyperparams,
    split_spec: &SplitSpec,
    store: &Path,
    opts: &TrainOptions,
) -> Result<TrainSummary, PipelineError> {
    hp.validate()?;
    let _lock = StoreLock::acquire(store)?;
    let grid = &corpus.grid;
    let corpus_hash = corpus.manifest.corpus_hash.as_str();
    let split = split_events(corpus.events.len(), split_spec)?;

    let mut manifest = match read_store_manifest(store) {
        Ok(m) if m.corpus_hash == corpus_hash && m.split == split && m.n_cells == grid.n_cells() => m,
        Ok(m) => {
            if !opts.force {
                return Err(PipelineError::CorpusMismatch {
                    store: m.corpus_hash,
                    corpus: corpus_hash.to_string(),
                });
            }
            warn!("replacing store manifest built from another corpus or split");
            StoreManifest::new(corpus_hash, grid.n_cells(), split_spec.clone(), split.clone())
        }
        Err(_) if !store.join(MANIFEST_FILE).exists() => {
            StoreManifest::new(corpus_hash, grid.n_cells(), split_spec.clone(), split.clone())
        }
        Err(e) => return Err(e),
    };

    let dir = experiment_dir(store, experiment);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let events = corpus_features(corpus)?;
    let data = TrainingData {
        grid,
        events: &events,
        depth: corpus.events.iter().map(|e| e.depth.as_slice()).collect(),
        split: &split,
        corpus_hash,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let n = grid.n_cells();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<(CellRecord, bool)> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|cell| {
                let outcome = match (!opts.force).then(|| reusable(store, experiment, cell, corpus_hash, hp)).flatten() {
                    Some(m) => Ok((m.metrics, false)),
                    None => train_cell(&data, cell, experiment, hp).and_then(|m| {
                        write_atomic(&cell_path(store, experiment, cell), &m.to_json()?)?;
                        Ok((m.metrics, true))
                    }),
                };
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                if k % 100 == 0 || k == n {
                    info!("{experiment}: {k}/{n} cells");
                }
                match outcome {
                    Ok((metrics, trained)) => (
                        CellRecord {
                            cell_id: cell,
                            status: CellStatus::Trained,
                            metrics: Some(metrics),
                            error: None,
                        },
                        trained,
                    ),
                    Err(e) => {
                        warn!("{experiment} cell {cell} failed: {e}");
                        (
                            CellRecord {
                                cell_id: cell,
                                status: CellStatus::Failed,
                                metrics: None,
                                error: Some(e.to_string()),
                            },
                            true,
                        )
                    }
                }
            })
            .collect()
    });

    let trained = results.iter().filter(|r| r.1).count();
    let record = ExperimentRecord {
        hyperparams: hp.clone(),
        cells: results.into_iter().map(|r| r.0).collect(),
    };
    manifest.experiments.insert(experiment, record.clone());
    write_store_manifest(store, &manifest)?;
    Ok(TrainSummary {
        experiment,
        trained,
        skipped: n - trained,
        record,
    })
}
