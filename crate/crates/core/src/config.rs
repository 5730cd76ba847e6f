//! Run configuration read from a JSON file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::Experiment;
use crate::gbdt::Hyperparams;
use crate::grid::{load_grid, Grid, GridError};
use crate::oracle::layout::{build_synthetic_grid, SyntheticGridSpec};
use crate::oracle::{OracleParams, StormConfig};
use crate::pipeline::SplitSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridSource {
    Synthetic(SyntheticGridSpec),
    Files { cells: PathBuf, watersheds: PathBuf },
}

impl GridSource {
    pub fn load(&self) -> Result<Grid, GridError> {
        match self {
            GridSource::Synthetic(spec) => build_synthetic_grid(spec),
            GridSource::Files { cells, watersheds } => load_grid(cells, watersheds),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentHyperparams {
    pub exp1: Hyperparams,
    pub exp2: Hyperparams,
}

impl ExperimentHyperparams {
    pub fn get(&self, e: Experiment) -> &Hyperparams {
        match e {
            Experiment::Exp1 => &self.exp1,
            Experiment::Exp2 => &self.exp2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSource,
    pub corpus_dir: PathBuf,
    pub store_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub storm: StormConfig,
    #[serde(default)]
    pub oracle: OracleParams,
    #[serde(default)]
    pub hyperparams: ExperimentHyperparams,
    #[serde(default)]
    pub split: SplitSpec,
    /// Depth bin edges for the binned report, feet.
    #[serde(default = "default_bins")]
    pub bins: Vec<f64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_bins() -> Vec<f64> {
    vec![15.0, 25.0]
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    /// 400-cell synthetic grid, 200 events, everything under `root`.
    pub fn desk(root: &Path) -> Self {
        RunConfig {
            grid: GridSource::Synthetic(SyntheticGridSpec::default()),
            corpus_dir: root.join("corpus"),
            store_dir: root.join("store"),
            output_dir: root.join("output"),
            storm: StormConfig::default(),
            oracle: OracleParams::default(),
            hyperparams: ExperimentHyperparams::default(),
            split: SplitSpec::default(),
            bins: default_bins(),
            workers: 1,
        }
    }

    /// Reads a config; relative paths are taken from the config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg: RunConfig = serde_json::from_slice(&text).map_err(|e| ConfigError::Parse {
            path: path.display().to_string(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_dir);
        fix(&mut self.store_dir);
        fix(&mut self.output_dir);
        if let GridSource::Files { cells, watersheds } = &mut self.grid {
            fix(cells);
            fix(watersheds);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let GridSource::Files { cells, watersheds } = &self.grid {
            for p in [cells, watersheds] {
                if !p.is_file() {
                    return Err(ConfigError::Invalid(format!("grid file {} does not exist", p.display())));
                }
            }
        }
        if self.workers == 0 {
            return Err(ConfigError::Invalid("workers must be >= 1".into()));
        }
        if self.bins.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ConfigError::Invalid("bins must be strictly increasing".into()));
        }
        self.storm.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.oracle.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.split.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for e in Experiment::ALL {
            self.hyperparams
                .get(e)
                .validate()
                .map_err(|err| ConfigError::Invalid(format!("{e}: {err}")))?;
        }
        Ok(())
    }

    /// Replaces every seed in the config.
    pub fn set_seed(&mut self, seed: u64) {
        self.storm.seed = seed;
        self.split.seed = seed;
        self.hyperparams.exp1.seed = seed;
        self.hyperparams.exp2.seed = seed;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
