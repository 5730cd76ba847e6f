//! Rainfall features per cell and per watershed, experiment feature layouts, and min-max scaling.
//!
//! Two layouts are supported:
//!
//! * `exp1`: `[cumulative, peak]` from the cell's own hourly series.
//! * `exp2`: `[cumulative, peak, duration, heavy_cum_ratio_0.., heavy_peak_ratio_0..]`, one
//!   ratio pair per watershed. A ratio is the area fraction of the watershed whose
//!   cumulative (or peak hourly) rainfall exceeds the heavy threshold; ratios are the same
//!   for every cell within one event.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellId, Grid, WatershedId};
use crate::matrix::Matrix;
use crate::rainfall::RainfallField;

/// Heavy-rain threshold, inches (50.8 mm).
pub const HEAVY_THRESHOLD_IN: f64 = 2.0;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("negative or non-finite rainfall value {value} at index {index}")]
    NegativeDepth { index: usize, value: f64 },
    #[error("negative threshold {0}")]
    NegativeThreshold(f64),
    #[error("degenerate watershed {0}: zero area")]
    DegenerateWatershed(usize),
    #[error("watershed {0} out of range")]
    WatershedOutOfRange(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("unknown experiment {0:?} (expected exp1 or exp2)")]
    UnknownExperiment(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellFeatures {
    /// Inches.
    pub cumulative: f64,
    /// Inches per hour.
    pub peak: f64,
    /// Hours from the first to the last rainy hour, inclusive.
    pub duration: f64,
}

pub fn cell_features(series: &[f64]) -> Result<CellFeatures, FeatureError> {
    let mut cumulative = 0.0;
    let mut peak = 0.0f64;
    let mut first = None;
    let mut last = 0;
    for (i, &v) in series.iter().enumerate() {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(FeatureError::NegativeDepth { index: i, value: v });
        }
        cumulative += v;
        peak = peak.max(v);
        if v > 0.0 {
            first.get_or_insert(i);
            last = i;
        }
    }
    let duration = first.map_or(0.0, |f| (last - f + 1) as f64);
    Ok(CellFeatures {
        cumulative,
        peak,
        duration,
    })
}

/// `true` where the value strictly exceeds `threshold`.
pub fn heavy_mask(values: &[f64], threshold: f64) -> Result<Vec<bool>, FeatureError> {
    if !(threshold >= 0.0) {
        return Err(FeatureError::NegativeThreshold(threshold));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if !(v >= 0.0) {
                Err(FeatureError::NegativeDepth { index: i, value: v })
            } else {
                Ok(v > threshold)
            }
        })
        .collect()
}

/// Area-weighted fraction of watershed `w` flagged by `mask`.
pub fn heavy_ratio(grid: &Grid, mask: &[bool], w: WatershedId) -> Result<f64, FeatureError> {
    if mask.len() != grid.n_cells() {
        return Err(FeatureError::Dimension(format!(
            "mask has {} entries, grid has {} cells",
            mask.len(),
            grid.n_cells()
        )));
    }
    let ws = grid.watersheds.get(w.0).ok_or(FeatureError::WatershedOutOfRange(w.0))?;
    if !(ws.area > 0.0) {
        return Err(FeatureError::DegenerateWatershed(w.0));
    }
    let heavy: f64 = grid
        .cells
        .iter()
        .zip(mask)
        .filter(|(c, &h)| h && c.watershed == w)
        .map(|(c, _)| c.area)
        .sum();
    Ok(heavy / ws.area)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatershedRatios {
    pub heavy_cumulative: Vec<f64>,
    pub heavy_peak: Vec<f64>,
}

/// Everything one event contributes to the feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFeatures {
    pub cells: Vec<CellFeatures>,
    pub ratios: WatershedRatios,
}

pub fn event_features(grid: &Grid, field: &RainfallField) -> Result<EventFeatures, FeatureError> {
    if field.n_cells != grid.n_cells() {
        return Err(FeatureError::Dimension(format!(
            "field has {} cells, grid has {}",
            field.n_cells,
            grid.n_cells()
        )));
    }
    let cells = (0..grid.n_cells())
        .map(|c| cell_features(field.row(c)))
        .collect::<Result<Vec<_>, _>>()?;
    let cum: Vec<f64> = cells.iter().map(|f| f.cumulative).collect();
    let peak: Vec<f64> = cells.iter().map(|f| f.peak).collect();
    let cum_mask = heavy_mask(&cum, HEAVY_THRESHOLD_IN)?;
    let peak_mask = heavy_mask(&peak, HEAVY_THRESHOLD_IN)?;

    // One pass over cells per mask, accumulating in cell order.
    let n_ws = grid.n_watersheds();
    let mut heavy_cum = vec![0.0; n_ws];
    let mut heavy_peak = vec![0.0; n_ws];
    for (i, c) in grid.cells.iter().enumerate() {
        if cum_mask[i] {
            heavy_cum[c.watershed.0] += c.area;
        }
        if peak_mask[i] {
            heavy_peak[c.watershed.0] += c.area;
        }
    }
    for (w, ws) in grid.watersheds.iter().enumerate() {
        if !(ws.area > 0.0) {
            return Err(FeatureError::DegenerateWatershed(w));
        }
        heavy_cum[w] /= ws.area;
        heavy_peak[w] /= ws.area;
    }
    Ok(EventFeatures {
        cells,
        ratios: WatershedRatios {
            heavy_cumulative: heavy_cum,
            heavy_peak,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Exp1,
    Exp2,
}

impl Experiment {
    pub const ALL: [Experiment; 2] = [Experiment::Exp1, Experiment::Exp2];

    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
        }
    }

    pub fn n_features(self, n_watersheds: usize) -> usize {
        match self {
            Experiment::Exp1 => 2,
            Experiment::Exp2 => 3 + 2 * n_watersheds,
        }
    }

    pub fn feature_names(self, n_watersheds: usize) -> Vec<String> {
        let mut names = vec!["cumulative".to_string(), "peak".to_string()];
        if self == Experiment::Exp2 {
            names.push("duration".into());
            names.extend((0..n_watersheds).map(|w| format!("heavy_cum_ratio_{w}")));
            names.extend((0..n_watersheds).map(|w| format!("heavy_peak_ratio_{w}")));
        }
        names
    }

    /// Writes the feature row of `cell` for one event into `out`.
    pub fn fill_row(self, event: &EventFeatures, cell: usize, out: &mut Vec<f64>) {
        out.clear();
        let f = &event.cells[cell];
        out.push(f.cumulative);
        out.push(f.peak);
        if self == Experiment::Exp2 {
            out.push(f.duration);
            out.extend_from_slice(&event.ratios.heavy_cumulative);
            out.extend_from_slice(&event.ratios.heavy_peak);
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Experiment {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exp1" | "1" => Ok(Experiment::Exp1),
            "exp2" | "2" => Ok(Experiment::Exp2),
            _ => Err(FeatureError::UnknownExperiment(s.to_string())),
        }
    }
}

/// Event-by-feature rows for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub experiment: Experiment,
    pub cell: CellId,
    pub feature_names: Vec<String>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn n_events(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.values.n_cols()
    }
}

/// Feature matrix of one cell over precomputed event features.
pub fn cell_matrix(events: &[EventFeatures], cell: CellId, experiment: Experiment, n_watersheds: usize) -> FeatureMatrix {
    let names = experiment.feature_names(n_watersheds);
    let mut values = Matrix::with_cols(names.len());
    let mut row = Vec::with_capacity(names.len());
    for ev in events {
        experiment.fill_row(ev, cell.0, &mut row);
        values.push_row(&row);
    }
    FeatureMatrix {
        experiment,
        cell,
        feature_names: names,
        values,
    }
}

/// Per-cell feature matrices for a list of event fields.
pub fn build_matrix(
    grid: &Grid,
    fields: &[RainfallField],
    experiment: Experiment,
) -> Result<Vec<FeatureMatrix>, FeatureError> {
    if fields.is_empty() {
        return Err(FeatureError::Dimension("no events".into()));
    }
    let events = fields
        .iter()
        .map(|f| event_features(grid, f))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((0..grid.n_cells())
        .map(|c| cell_matrix(&events, CellId(c), experiment, grid.n_watersheds()))
        .collect())
}

/// Writes `event_id,cell_id,<feature_name>...` for all matrices (event ids are row indices).
pub fn write_matrices_csv<W: Write>(matrices: &[FeatureMatrix], out: W) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = matrices.first() else {
        w.flush().map_err(csv::Error::from)?;
        return Ok(());
    };
    let mut header = vec!["event_id".to_string(), "cell_id".to_string()];
    header.extend(first.feature_names.iter().cloned());
    w.write_record(&header)?;
    for m in matrices {
        for (e, row) in m.values.rows().enumerate() {
            let mut rec = vec![e.to_string(), m.cell.0.to_string()];
            rec.extend(row.iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl FeatureRange {
    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }
}

/// Per-feature min-max scaling fitted on training rows. Serializes as an ordered
/// `{name, min, max}` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MinMaxScaler {
    pub features: Vec<FeatureRange>,
}

pub fn fit_scaler(training_rows: &Matrix, names: &[String]) -> Result<MinMaxScaler, FeatureError> {
    if training_rows.n_rows() == 0 {
        return Err(FeatureError::EmptyTrainingSet);
    }
    if names.len() != training_rows.n_cols() {
        return Err(FeatureError::Dimension(format!(
            "{} names for {} columns",
            names.len(),
            training_rows.n_cols()
        )));
    }
    let features = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (min, max) = training_rows
                .column(j)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            FeatureRange {
                name: name.clone(),
                min,
                max,
            }
        })
        .collect();
    Ok(MinMaxScaler { features })
}

impl MinMaxScaler {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn degenerate_features(&self) -> Vec<&str> {
        self.features
            .iter()
            .filter(|f| f.is_degenerate())
            .map(|f| f.name.as_str())
            .collect()
    }

    /// `(x - min) / (max - min)`, or 0 for a degenerate feature. Not clamped.
    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        let mut out = row.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, row: &mut [f64]) -> Result<(), FeatureError> {
        if row.len() != self.features.len() {
            return Err(FeatureError::Dimension(format!(
                "row has {} values, scaler has {} features",
                row.len(),
                self.features.len()
            )));
        }
        for (x, f) in row.iter_mut().zip(&self.features) {
            *x = if f.is_degenerate() {
                0.0
            } else {
                (*x - f.min) / (f.max - f.min)
            };
        }
        Ok(())
    }

    pub fn apply_matrix(&self, m: &Matrix) -> Result<Matrix, FeatureError> {
        let mut out = m.clone();
        for i in 0..out.n_rows() {
            self.apply_in_place(out.row_mut(i))?;
        }
        Ok(out)
    }

    /// Inverse of [`MinMaxScaler::apply`]; degenerate features map back to their constant.
    pub fn invert(&self, row: &[f64]) -> Result<Vec<f64>, FeatureError> {
        if row.len() != self.features.len() {
            return Err(FeatureError::Dimension(format!(
                "row has {} values, scaler has {} features",
                row.len(),
                self.features.len()
            )));
        }
        Ok(row
            .iter()
            .zip(&self.features)
            .map(|(&s, f)| if f.is_degenerate() { f.min } else { f.min + s * (f.max - f.min) })
            .collect())
    }
}
