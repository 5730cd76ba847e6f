use std::path::Path;

use rayon::prelude::*;

use crate::features::{EventFeatures, Experiment};
use crate::metrics::{diff_report, CellDiff, EvaluationReport};
use crate::oracle::Corpus;

use super::predict::{build_combined, CombinedPredictor};
use super::store::read_store_manifest;
use super::train::corpus_features;
use super::PipelineError;

/// Test-split reports for each experiment, the combined predictor, and the Exp1 to
/// Exp2 per-cell differences.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub exp1: Option<EvaluationReport>,
    pub exp2: Option<EvaluationReport>,
    pub combined: Option<EvaluationReport>,
    pub diff: Option<Vec<CellDiff>>,
}

/// Per-cell `(truth, prediction)` over `events`.
pub fn predict_series(
    predictor: &CombinedPredictor,
    corpus: &Corpus,
    features: &[EventFeatures],
    events: &[usize],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>, PipelineError> {
    let preds = events
        .par_iter()
        .map(|&e| predictor.predict_features(&features[e]))
        .collect::<Result<Vec<_>, _>>()?;
    let n = corpus.grid.n_cells();
    Ok((0..n)
        .map(|c| {
            let truth = events.iter().map(|&e| corpus.events[e].depth[c]).collect();
            let pred = preds.iter().map(|p| p[c]).collect();
            (truth, pred)
        })
        .collect())
}

pub fn evaluate_predictor(
    label: &str,
    predictor: &CombinedPredictor,
    corpus: &Corpus,
    features: &[EventFeatures],
    events: &[usize],
    bins: &[f64],
) -> Result<EvaluationReport, PipelineError> {
    let series = predict_series(predictor, corpus, features, events)?;
    Ok(EvaluationReport::from_predictions(label, &corpus.grid, &series, bins)?)
}

/// Evaluates whatever complete experiments the store holds on its test split.
pub fn evaluate_store(corpus: &Corpus, store: &Path, bins: &[f64]) -> Result<Evaluation, PipelineError> {
    let manifest = read_store_manifest(store)?;
    if manifest.corpus_hash != corpus.manifest.corpus_hash {
        return Err(PipelineError::CorpusMismatch {
            store: manifest.corpus_hash,
            corpus: corpus.manifest.corpus_hash.clone(),
        });
    }
    if manifest.split.test.is_empty() {
        return Err(PipelineError::Store("store manifest has no test split".into()));
    }
    let grid = &corpus.grid;
    let features = corpus_features(corpus)?;
    let test = &manifest.split.test;
    let complete = |e: Experiment| {
        manifest
            .experiments
            .get(&e)
            .is_some_and(|r| r.is_complete(grid.n_cells()))
    };
    let mut reports = [None, None];
    for (slot, exp) in reports.iter_mut().zip(Experiment::ALL) {
        if complete(exp) {
            let p = CombinedPredictor::single(grid, store, exp)?;
            *slot = Some(evaluate_predictor(exp.as_str(), &p, corpus, &features, test, bins)?);
        }
    }
    let [exp1, exp2] = reports;
    let (combined, diff) = match (&exp1, &exp2) {
        (Some(a), Some(b)) => {
            let p = build_combined(store, store, grid)?;
            (
                Some(evaluate_predictor("combined", &p, corpus, &features, test, bins)?),
                Some(diff_report(a, b)?),
            )
        }
        _ => (None, None),
    };
    Ok(Evaluation {
        exp1,
        exp2,
        combined,
        diff,
    })
}
