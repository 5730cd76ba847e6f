use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::features::{event_features, EventFeatures, Experiment};
use crate::grid::{CellKind, Grid};
use crate::rainfall::RainfallField;

use super::store::{read_cell_model, CellModel};
use super::PipelineError;

/// One model per grid cell, indexed by cell id.
#[derive(Debug, Clone)]
pub struct CombinedPredictor {
    models: Vec<CellModel>,
}

/// Which experiment's model serves each cell kind.
pub fn combined_source(kind: CellKind) -> Experiment {
    match kind {
        CellKind::Channel => Experiment::Exp2,
        CellKind::NonChannel => Experiment::Exp1,
    }
}

impl CombinedPredictor {
    /// Checks that `models[i]` belongs to cell `i` of `grid`.
    pub fn from_models(grid: &Grid, models: Vec<CellModel>) -> Result<Self, PipelineError> {
        if models.len() != grid.n_cells() {
            return Err(PipelineError::Dimension(format!(
                "{} models for {} cells",
                models.len(),
                grid.n_cells()
            )));
        }
        if let Some((i, m)) = models.iter().enumerate().find(|(i, m)| m.cell_id != *i) {
            return Err(PipelineError::Store(format!("model for cell {} placed at cell {i}", m.cell_id)));
        }
        Ok(CombinedPredictor { models })
    }

    /// Loads the model of every cell, choosing the experiment per cell.
    pub fn load_with(
        grid: &Grid,
        choose: impl Fn(CellKind) -> Experiment + Sync,
        stores: [&Path; 2],
    ) -> Result<Self, PipelineError> {
        let models = grid
            .cells
            .par_iter()
            .map(|c| {
                let exp = choose(c.kind);
                let store = match exp {
                    Experiment::Exp1 => stores[0],
                    Experiment::Exp2 => stores[1],
                };
                read_cell_model(store, exp, c.id.0).map_err(|e| PipelineError::MissingModel {
                    cell: c.id.0,
                    experiment: exp,
                    reason: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_models(grid, models)
    }

    /// Every cell served by `experiment`.
    pub fn single(grid: &Grid, store: &Path, experiment: Experiment) -> Result<Self, PipelineError> {
        Self::load_with(grid, |_| experiment, [store, store])
    }

    pub fn models(&self) -> &[CellModel] {
        &self.models
    }

    pub fn n_cells(&self) -> usize {
        self.models.len()
    }

    /// Predicted peak depth of every cell for precomputed event features.
    pub fn predict_features(&self, event: &EventFeatures) -> Result<Vec<f64>, PipelineError> {
        if event.cells.len() != self.models.len() {
            return Err(PipelineError::Dimension(format!(
                "event has {} cells, predictor {}",
                event.cells.len(),
                self.models.len()
            )));
        }
        let mut row = Vec::new();
        self.models
            .iter()
            .map(|m| {
                m.experiment.fill_row(event, m.cell_id, &mut row);
                m.predict_raw(&mut row)
            })
            .collect()
    }
}

/// Channel cells from the Exp2 store, non-channel cells from the Exp1 store.
pub fn build_combined(store_exp1: &Path, store_exp2: &Path, grid: &Grid) -> Result<CombinedPredictor, PipelineError> {
    CombinedPredictor::load_with(grid, combined_source, [store_exp1, store_exp2])
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    /// Feet, indexed by cell id.
    pub depth: Vec<f64>,
    /// Wall-clock time from rainfall field to depth map.
    pub elapsed: Duration,
}

impl DepthMap {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_id", "pred_depth_ft"])?;
        for (i, d) in self.depth.iter().enumerate() {
            w.write_record([i.to_string(), d.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Peak-depth map for one rainfall event. Event-level features are computed once and
/// shared by every cell.
pub fn predict_event(predictor: &CombinedPredictor, grid: &Grid, field: &RainfallField) -> Result<DepthMap, PipelineError> {
    let start = Instant::now();
    if field.n_cells != grid.n_cells() || predictor.n_cells() != grid.n_cells() {
        return Err(PipelineError::Dimension(format!(
            "field has {} cells, grid {}, predictor {}",
            field.n_cells,
            grid.n_cells(),
            predictor.n_cells()
        )));
    }
    let event = event_features(grid, field)?;
    let depth = predictor.predict_features(&event)?;
    Ok(DepthMap {
        depth,
        elapsed: start.elapsed(),
    })
}
