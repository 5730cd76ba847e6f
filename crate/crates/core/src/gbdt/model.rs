use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GbdtError, Hyperparams, RegressionTree};

pub const MODEL_FORMAT: &str = "flood-surrogate-gbdt";
pub const MODEL_VERSION: u32 = 1;

/// Serializes with `format` and `version` tags alongside the fields.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub base_score: f64,
    pub trees: Vec<RegressionTree>,
    /// Number of leading trees used for prediction.
    pub best_iteration: usize,
    pub hyperparams: Hyperparams,
    pub feature_names: Vec<String>,
}

/// Normalized per-feature split gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub names: Vec<String>,
    pub fractions: Vec<f64>,
    /// No split gain at all; `fractions` is uniform.
    pub degenerate: bool,
}

impl FeatureImportance {
    /// Features with fraction `>= threshold`, largest first (ties by column order).
    pub fn above(&self, threshold: f64) -> Vec<(&str, f64)> {
        let mut out: Vec<(usize, f64)> = self
            .fractions
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, f)| *f >= threshold)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(i, f)| (self.names[i].as_str(), f)).collect()
    }
}

impl GbdtModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self, GbdtError> {
        if names.len() != self.feature_names.len() {
            return Err(GbdtError::Dimension(format!(
                "{} names for {} features",
                names.len(),
                self.feature_names.len()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Trees that take part in prediction.
    pub fn active_trees(&self) -> &[RegressionTree] {
        &self.trees[..self.best_iteration.min(self.trees.len())]
    }

    /// Drops trees past `best_iteration`; predictions are unchanged.
    pub fn truncate_to_best(&mut self) {
        self.trees.truncate(self.best_iteration);
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64, GbdtError> {
        if row.len() != self.n_features() {
            return Err(GbdtError::Dimension(format!(
                "row has {} values, model expects {}",
                row.len(),
                self.n_features()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(GbdtError::NonFinite("prediction input"));
        }
        let lr = self.hyperparams.learning_rate;
        let sum: f64 = self.active_trees().iter().map(|t| t.leaf_value(row)).sum();
        Ok(self.base_score + lr * sum)
    }

    pub fn feature_importance(&self) -> FeatureImportance {
        let n = self.n_features();
        let mut gains = vec![0.0; n];
        for t in self.active_trees() {
            for (node, &f) in t.split_feature.iter().enumerate() {
                if f >= 0 {
                    gains[f as usize] += t.gain[node];
                }
            }
        }
        let total: f64 = gains.iter().sum();
        let degenerate = !(total > 0.0);
        let fractions = if degenerate {
            vec![if n == 0 { 0.0 } else { 1.0 / n as f64 }; n]
        } else {
            gains.iter().map(|g| g / total).collect()
        };
        FeatureImportance {
            names: self.feature_names.clone(),
            fractions,
            degenerate,
        }
    }

    pub fn check(&self) -> Result<(), GbdtError> {
        if self.best_iteration > self.trees.len() {
            return Err(GbdtError::Corrupt(format!(
                "best_iteration {} exceeds {} trees",
                self.best_iteration,
                self.trees.len()
            )));
        }
        if !self.base_score.is_finite() {
            return Err(GbdtError::Corrupt("non-finite base_score".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.check(self.n_features(), self.hyperparams.max_depth)
                .map_err(|e| GbdtError::Corrupt(format!("tree {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>, GbdtError> {
        serde_json::to_vec(self).map_err(|e| GbdtError::Corrupt(e.to_string()))
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, GbdtError> {
        serde_json::from_slice(bytes).map_err(|e| {
            // Report a version problem ahead of whatever field error it caused.
            match serde_json::from_slice::<Tags>(bytes) {
                Ok(t) if t.version > MODEL_VERSION => GbdtError::Version {
                    found: t.version,
                    supported: MODEL_VERSION,
                },
                _ => GbdtError::Corrupt(e.to_string()),
            }
        })
    }

    fn from_file(file: ModelFile) -> Result<Self, GbdtError> {
        if file.format != MODEL_FORMAT {
            return Err(GbdtError::Corrupt(format!("unexpected format tag {:?}", file.format)));
        }
        if file.version > MODEL_VERSION {
            return Err(GbdtError::Version {
                found: file.version,
                supported: MODEL_VERSION,
            });
        }
        let model = GbdtModel {
            base_score: file.base_score,
            trees: file.trees,
            best_iteration: file.best_iteration,
            hyperparams: file.hyperparams,
            feature_names: file.feature_names,
        };
        model.check()?;
        Ok(model)
    }
}

#[derive(Deserialize)]
struct Tags {
    version: u32,
}

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: &'a str,
    version: u32,
    base_score: f64,
    trees: &'a [RegressionTree],
    best_iteration: usize,
    hyperparams: &'a Hyperparams,
    feature_names: &'a [String],
}

#[derive(Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    base_score: f64,
    trees: Vec<RegressionTree>,
    best_iteration: usize,
    hyperparams: Hyperparams,
    feature_names: Vec<String>,
}

impl Serialize for GbdtModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ModelFileRef {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            base_score: self.base_score,
            trees: &self.trees,
            best_iteration: self.best_iteration,
            hyperparams: &self.hyperparams,
            feature_names: &self.feature_names,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GbdtModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        GbdtModel::from_file(ModelFile::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

pub fn save_model(model: &GbdtModel, path: &Path) -> Result<(), GbdtError> {
    std::fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<GbdtModel, GbdtError> {
    GbdtModel::from_json(&std::fs::read(path)?)
}
