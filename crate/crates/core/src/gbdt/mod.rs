//! Second-order gradient-boosted regression trees with a squared-error objective.
//!
//! Each boosting round fits a tree to the gradients `prediction - y` (hessian 1) on a
//! seeded random subset of `ceil(colsample_bytree * n_features)` columns. Leaves take the
//! L1/L2-regularized optimum `-soft_threshold(G, alpha) / (H + lambda)` and splits are
//! scored by `0.5 * [S(L) + S(R) - S(parent)]` with `S = soft_threshold(G, alpha)^2 / (H + lambda)`.
//! All `n_trees` rounds are built; the round with the lowest validation RMSE becomes the
//! model's `best_iteration` and prediction stops there.

mod model;
pub mod tree;

pub use model::{load_model, save_model, FeatureImportance, GbdtModel, MODEL_FORMAT, MODEL_VERSION};
pub use tree::{leaf_score, leaf_weight, soft_threshold, split_gain, RegressionTree, Split};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use tree::{grow_tree, TreeParams};

#[derive(Debug, Error)]
pub enum GbdtError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model format version {found} is newer than supported version {supported}")]
    Version { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    pub l1_alpha: f64,
    pub l2_lambda: f64,
    pub colsample_bytree: f64,
    pub min_split_gain: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.01,
            n_trees: 1000,
            max_depth: 5,
            l1_alpha: 1.0,
            l2_lambda: 1.0,
            colsample_bytree: 0.3,
            min_split_gain: 0.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidHyperparams(m.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be > 0");
        }
        if self.n_trees == 0 {
            return bad("n_trees must be >= 1");
        }
        if !(self.l1_alpha >= 0.0) || !(self.l2_lambda >= 0.0) {
            return bad("l1_alpha and l2_lambda must be >= 0");
        }
        if !(self.colsample_bytree > 0.0 && self.colsample_bytree <= 1.0) {
            return bad("colsample_bytree must be in (0, 1]");
        }
        if !(self.min_split_gain >= 0.0) {
            return bad("min_split_gain must be >= 0");
        }
        Ok(())
    }

    /// Columns sampled per tree: `ceil(colsample_bytree * n_features)`, at least one.
    pub fn columns_per_tree(&self, n_features: usize) -> usize {
        ((self.colsample_bytree * n_features as f64).ceil() as usize).clamp(1, n_features.max(1))
    }
}

/// RMSE after each boosting round; index `k` is the ensemble of the first `k` trees.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainingHistory {
    pub train_rmse: Vec<f64>,
    pub valid_rmse: Vec<f64>,
}

fn rmse_of(pred: &[f64], y: &[f64]) -> f64 {
    if y.is_empty() {
        return f64::NAN;
    }
    let ss: f64 = pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum();
    (ss / y.len() as f64).sqrt()
}

fn check_inputs(x: &Matrix, y: &[f64], what: &'static str) -> Result<(), GbdtError> {
    if x.n_rows() != y.len() {
        return Err(GbdtError::Dimension(format!(
            "{what}: {} rows but {} targets",
            x.n_rows(),
            y.len()
        )));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(GbdtError::NonFinite(what));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(GbdtError::NonFinite(what));
    }
    Ok(())
}

/// Trains a model; see [`train_with_history`].
pub fn train(
    x_train: &Matrix,
    y_train: &[f64],
    x_valid: &Matrix,
    y_valid: &[f64],
    hp: &Hyperparams,
) -> Result<GbdtModel, GbdtError> {
    train_with_history(x_train, y_train, x_valid, y_valid, hp).map(|(m, _)| m)
}

/// Builds all `n_trees` rounds, recording training and validation RMSE after each.
/// With an empty validation set the full ensemble is kept.
pub fn train_with_history(
    x_train: &Matrix,
    y_train: &[f64],
    x_valid: &Matrix,
    y_valid: &[f64],
    hp: &Hyperparams,
) -> Result<(GbdtModel, TrainingHistory), GbdtError> {
    hp.validate()?;
    if x_train.n_rows() == 0 {
        return Err(GbdtError::EmptyTrainingSet);
    }
    check_inputs(x_train, y_train, "training data")?;
    check_inputs(x_valid, y_valid, "validation data")?;
    let n_features = x_train.n_cols();
    if x_valid.n_rows() > 0 && x_valid.n_cols() != n_features {
        return Err(GbdtError::Dimension(format!(
            "validation has {} columns, training has {n_features}",
            x_valid.n_cols()
        )));
    }

    let n = x_train.n_rows();
    let base_score = y_train.iter().sum::<f64>() / n as f64;
    let sorted_by_feature: Vec<Vec<usize>> = (0..n_features)
        .map(|f| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x_train.get(a, f).total_cmp(&x_train.get(b, f)).then(a.cmp(&b)));
            idx
        })
        .collect();

    let params = TreeParams {
        max_depth: hp.max_depth,
        alpha: hp.l1_alpha,
        lambda: hp.l2_lambda,
        min_split_gain: hp.min_split_gain,
    };
    let k = hp.columns_per_tree(n_features);
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);

    let mut pred = vec![base_score; n];
    let mut valid_pred = vec![base_score; y_valid.len()];
    let hess = vec![1.0; n];
    let mut grad = vec![0.0; n];
    let mut row_leaf = vec![0.0; n];
    let mut trees = Vec::with_capacity(hp.n_trees);
    let mut history = TrainingHistory {
        train_rmse: vec![rmse_of(&pred, y_train)],
        valid_rmse: vec![rmse_of(&valid_pred, y_valid)],
    };

    for _ in 0..hp.n_trees {
        for i in 0..n {
            grad[i] = pred[i] - y_train[i];
        }
        let mut subset = if n_features == 0 {
            Vec::new()
        } else {
            sample(&mut rng, n_features, k).into_vec()
        };
        subset.sort_unstable();
        let tree = grow_tree(x_train, &grad, &hess, subset, &sorted_by_feature, &params, &mut row_leaf);
        for i in 0..n {
            pred[i] += hp.learning_rate * row_leaf[i];
        }
        for (i, p) in valid_pred.iter_mut().enumerate() {
            *p += hp.learning_rate * tree.leaf_value(x_valid.row(i));
        }
        history.train_rmse.push(rmse_of(&pred, y_train));
        history.valid_rmse.push(rmse_of(&valid_pred, y_valid));
        trees.push(tree);
    }

    let best_iteration = if y_valid.is_empty() {
        trees.len()
    } else {
        let mut best = 0;
        for (i, v) in history.valid_rmse.iter().enumerate() {
            if *v < history.valid_rmse[best] {
                best = i;
            }
        }
        best
    };
    let model = GbdtModel {
        base_score,
        trees,
        best_iteration,
        hyperparams: hp.clone(),
        feature_names: (0..n_features).map(|i| format!("f{i}")).collect(),
    };
    Ok((model, history))
}
