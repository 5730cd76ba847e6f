//! On-disk model store:
//!
//! ```text
//! <store>/manifest.json
//! <store>/<experiment>/cell_<id>.model.json
//! <store>/.lock
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::features::{Experiment, MinMaxScaler};
use crate::gbdt::{GbdtModel, Hyperparams};

use super::split::{EventSplit, SplitSpec};
use super::PipelineError;

pub const STORE_FORMAT: &str = "flood-surrogate-store";
pub const CELL_FORMAT: &str = "flood-surrogate-cell-model";
pub const STORE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTrainMetrics {
    pub best_iteration: usize,
    pub train_rmse: f64,
    /// Absent when the validation split is empty.
    pub valid_rmse: Option<f64>,
}

/// Contents of one `cell_<id>.model.json`.
#[derive(Deserialize)]
struct CellModelFile {
    format: String,
    version: u32,
    cell_id: usize,
    experiment: Experiment,
    corpus_hash: String,
    scaler: MinMaxScaler,
    metrics: CellTrainMetrics,
    model: GbdtModel,
}

#[derive(Serialize)]
struct CellModelFileRef<'a> {
    format: &'a str,
    version: u32,
    cell_id: usize,
    experiment: Experiment,
    corpus_hash: &'a str,
    scaler: &'a MinMaxScaler,
    metrics: &'a CellTrainMetrics,
    model: &'a GbdtModel,
}

#[derive(Deserialize)]
struct Tags {
    format: String,
    version: u32,
}

/// A loaded per-cell model with its feature scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct CellModel {
    pub cell_id: usize,
    pub experiment: Experiment,
    pub corpus_hash: String,
    pub scaler: MinMaxScaler,
    pub metrics: CellTrainMetrics,
    pub model: GbdtModel,
}

impl CellModel {
    /// Scales `raw` in place and predicts.
    pub fn predict_raw(&self, raw: &mut [f64]) -> Result<f64, PipelineError> {
        self.scaler.apply_in_place(raw)?;
        Ok(self.model.predict(raw)?)
    }

    pub fn to_json(&self) -> Result<Vec<u8>, PipelineError> {
        let file = CellModelFileRef {
            format: CELL_FORMAT,
            version: STORE_VERSION,
            cell_id: self.cell_id,
            experiment: self.experiment,
            corpus_hash: &self.corpus_hash,
            scaler: &self.scaler,
            metrics: &self.metrics,
            model: &self.model,
        };
        Ok(serde_json::to_vec(&file)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, PipelineError> {
        let file: CellModelFile = serde_json::from_slice(bytes).map_err(|e| {
            let tags = serde_json::from_slice::<Tags>(bytes);
            match tags {
                Ok(t) if t.format != CELL_FORMAT => {
                    PipelineError::Store(format!("unexpected cell model format {:?}", t.format))
                }
                Ok(t) if t.version > STORE_VERSION => PipelineError::Store(format!(
                    "cell model version {} is newer than supported {STORE_VERSION}",
                    t.version
                )),
                _ => PipelineError::Json(e),
            }
        })?;
        if file.format != CELL_FORMAT {
            return Err(PipelineError::Store(format!("unexpected cell model format {:?}", file.format)));
        }
        if file.version > STORE_VERSION {
            return Err(PipelineError::Store(format!(
                "cell model version {} is newer than supported {STORE_VERSION}",
                file.version
            )));
        }
        let model = file.model;
        if model.n_features() != file.scaler.len() {
            return Err(PipelineError::Store(format!(
                "cell {}: scaler has {} features, model {}",
                file.cell_id,
                file.scaler.len(),
                model.n_features()
            )));
        }
        Ok(CellModel {
            cell_id: file.cell_id,
            experiment: file.experiment,
            corpus_hash: file.corpus_hash,
            scaler: file.scaler,
            metrics: file.metrics,
            model,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Trained,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub cell_id: usize,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CellTrainMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    /// Base hyperparameters; each cell's seed is derived from `hyperparams.seed`.
    pub hyperparams: Hyperparams,
    pub cells: Vec<CellRecord>,
}

impl ExperimentRecord {
    pub fn failed(&self) -> impl Iterator<Item = &CellRecord> {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed)
    }

    pub fn is_complete(&self, n_cells: usize) -> bool {
        self.cells.len() == n_cells && self.failed().next().is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub format: String,
    pub version: u32,
    pub corpus_hash: String,
    pub n_cells: usize,
    pub split_spec: SplitSpec,
    pub split: EventSplit,
    pub experiments: BTreeMap<Experiment, ExperimentRecord>,
}

impl StoreManifest {
    pub fn new(corpus_hash: &str, n_cells: usize, split_spec: SplitSpec, split: EventSplit) -> Self {
        StoreManifest {
            format: STORE_FORMAT.to_string(),
            version: STORE_VERSION,
            corpus_hash: corpus_hash.to_string(),
            n_cells,
            split_spec,
            split,
            experiments: BTreeMap::new(),
        }
    }
}

pub fn cell_file_name(cell: usize) -> String {
    format!("cell_{cell}.model.json")
}

pub fn experiment_dir(store: &Path, experiment: Experiment) -> PathBuf {
    store.join(experiment.as_str())
}

pub fn cell_path(store: &Path, experiment: Experiment, cell: usize) -> PathBuf {
    experiment_dir(store, experiment).join(cell_file_name(cell))
}

pub(crate) fn io_err(path: &Path) -> impl Fn(std::io::Error) -> PipelineError + '_ {
    move |e| PipelineError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes through a temporary file and renames it into place.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_store_manifest(store: &Path) -> Result<StoreManifest, PipelineError> {
    let p = store.join(MANIFEST_FILE);
    let bytes = std::fs::read(&p).map_err(io_err(&p))?;
    let m: StoreManifest = serde_json::from_slice(&bytes)
        .map_err(|e| PipelineError::Store(format!("{}: {e}", p.display())))?;
    if m.format != STORE_FORMAT {
        return Err(PipelineError::Store(format!("unexpected store format {:?}", m.format)));
    }
    if m.version > STORE_VERSION {
        return Err(PipelineError::Store(format!(
            "store version {} is newer than supported {STORE_VERSION}",
            m.version
        )));
    }
    Ok(m)
}

pub fn write_store_manifest(store: &Path, manifest: &StoreManifest) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(manifest)?;
    bytes.push(b'\n');
    write_atomic(&store.join(MANIFEST_FILE), &bytes)
}

pub fn read_cell_model(store: &Path, experiment: Experiment, cell: usize) -> Result<CellModel, PipelineError> {
    let p = cell_path(store, experiment, cell);
    let bytes = std::fs::read(&p).map_err(io_err(&p))?;
    let m = CellModel::from_json(&bytes).map_err(|e| PipelineError::Store(format!("{}: {e}", p.display())))?;
    if m.cell_id != cell || m.experiment != experiment {
        return Err(PipelineError::Store(format!(
            "{} holds cell {} {}",
            p.display(),
            m.cell_id,
            m.experiment
        )));
    }
    Ok(m)
}

/// Exclusive writer lock on a store, released when dropped or when the process exits.
#[derive(Debug)]
pub struct StoreLock {
    _file: File,
}

impl StoreLock {
    pub fn acquire(store: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(store).map_err(io_err(store))?;
        let p = store.join(LOCK_FILE);
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&p)
            .map_err(io_err(&p))?;
        match file.try_lock() {
            Ok(()) => Ok(StoreLock { _file: file }),
            Err(std::fs::TryLockError::WouldBlock) => Err(PipelineError::Locked(store.display().to_string())),
            Err(std::fs::TryLockError::Error(e)) => Err(io_err(&p)(e)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::fit_scaler;
    use crate::gbdt::train;
    use crate::matrix::Matrix;

    fn tiny_model() -> CellModel {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 3.0], [2.0, 2.0], [3.0, 5.0]]);
        let y = [0.0, 1.0, 2.0, 3.0];
        let names = vec!["cumulative".to_string(), "peak".to_string()];
        let scaler = fit_scaler(&x, &names).unwrap();
        let hp = Hyperparams {
            n_trees: 20,
            learning_rate: 0.3,
            l1_alpha: 0.0,
            ..Hyperparams::default()
        };
        let model = train(&scaler.apply_matrix(&x).unwrap(), &y, &Matrix::with_cols(2), &[], &hp)
            .unwrap()
            .with_feature_names(names)
            .unwrap();
        CellModel {
            cell_id: 3,
            experiment: Experiment::Exp1,
            corpus_hash: "abc".into(),
            scaler,
            metrics: CellTrainMetrics {
                best_iteration: 20,
                train_rmse: 0.1,
                valid_rmse: None,
            },
            model,
        }
    }

    #[test]
    fn cell_file_round_trip() {
        let m = tiny_model();
        let bytes = m.to_json().unwrap();
        let back = CellModel::from_json(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json().unwrap(), bytes);
        let (mut a, mut b) = (vec![1.5, 2.5], vec![1.5, 2.5]);
        assert_eq!(m.predict_raw(&mut a).unwrap(), back.predict_raw(&mut b).unwrap());
    }

    #[test]
    fn rejects_wrong_format_and_cell() {
        let dir = tempfile::tempdir().unwrap();
        let m = tiny_model();
        std::fs::create_dir_all(experiment_dir(dir.path(), Experiment::Exp1)).unwrap();
        std::fs::write(cell_path(dir.path(), Experiment::Exp1, 4), m.to_json().unwrap()).unwrap();
        assert!(read_cell_model(dir.path(), Experiment::Exp1, 4).is_err());
        std::fs::write(cell_path(dir.path(), Experiment::Exp1, 3), m.to_json().unwrap()).unwrap();
        assert!(read_cell_model(dir.path(), Experiment::Exp1, 3).is_ok());
        let text = String::from_utf8(m.to_json().unwrap()).unwrap().replace(CELL_FORMAT, "other");
        assert!(CellModel::from_json(text.as_bytes()).is_err());
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let first = StoreLock::acquire(dir.path()).unwrap();
        assert!(matches!(StoreLock::acquire(dir.path()), Err(PipelineError::Locked(_))));
        drop(first);
        StoreLock::acquire(dir.path()).unwrap();
    }
}
