//! R², RMSE and MAPE, cell-kind aggregates, depth-binned breakdowns, and experiment diffs.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellId, CellKind, Grid};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} truths vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("no points")]
    Empty,
    #[error("undefined R2: truth has zero variance")]
    UndefinedR2,
    #[error("bin edges must be strictly increasing")]
    UnsortedEdges,
    #[error("reports cover different cells")]
    CoverageMismatch,
}

fn check(y: &[f64], p: &[f64]) -> Result<(), MetricError> {
    if y.len() != p.len() {
        return Err(MetricError::LengthMismatch(y.len(), p.len()));
    }
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(MetricError::UndefinedR2);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(y_true: &[f64], y_pred: &[f64]) -> Result<f64, MetricError> {
    check(y_true, y_pred)?;
    let ss: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok((ss / y_true.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mape {
    /// Percent; `None` when every point had zero truth.
    pub value: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
}

/// Mean absolute percentage error over points with nonzero truth.
pub fn mape(y_true: &[f64], y_pred: &[f64]) -> Result<Mape, MetricError> {
    check(y_true, y_pred)?;
    let (mut sum, mut used) = (0.0, 0usize);
    for (y, p) in y_true.iter().zip(y_pred) {
        if *y != 0.0 {
            sum += ((y - p) / y).abs();
            used += 1;
        }
    }
    Ok(Mape {
        value: (used > 0).then(|| 100.0 * sum / used as f64),
        n_used: used,
        n_excluded: y_true.len() - used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    /// Inclusive lower edge; `None` is unbounded.
    pub lower: Option<f64>,
    /// Exclusive upper edge; `None` is unbounded.
    pub upper: Option<f64>,
    pub n: usize,
    pub rmse: Option<f64>,
    pub mape: Option<f64>,
    pub mape_excluded: usize,
}

/// Splits `(truth, prediction)` points into `[-inf, e1), [e1, e2), ..., [ek, inf)` by truth.
pub fn binned_report(points: &[(f64, f64)], edges: &[f64]) -> Result<Vec<BinStats>, MetricError> {
    if edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| e.is_nan()) {
        return Err(MetricError::UnsortedEdges);
    }
    let mut bins: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); edges.len() + 1];
    for &(t, p) in points {
        let b = edges.partition_point(|&e| e <= t);
        bins[b].0.push(t);
        bins[b].1.push(p);
    }
    Ok(bins
        .into_iter()
        .enumerate()
        .map(|(i, (t, p))| {
            let m = mape(&t, &p).ok();
            BinStats {
                lower: i.checked_sub(1).map(|j| edges[j]),
                upper: edges.get(i).copied(),
                n: t.len(),
                rmse: rmse(&t, &p).ok(),
                mape: m.and_then(|m| m.value),
                mape_excluded: m.map_or(0, |m| m.n_excluded),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub cell_id: usize,
    pub kind: CellKind,
    pub r2: Option<f64>,
    pub rmse: f64,
    pub n: usize,
}

pub fn cell_metrics(cell: CellId, kind: CellKind, y_true: &[f64], y_pred: &[f64]) -> Result<CellMetrics, MetricError> {
    let rmse = rmse(y_true, y_pred)?;
    let r2 = match r_squared(y_true, y_pred) {
        Ok(v) => Some(v),
        Err(MetricError::UndefinedR2) => None,
        Err(e) => return Err(e),
    };
    Ok(CellMetrics {
        cell_id: cell.0,
        kind,
        r2,
        rmse,
        n: y_true.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub n_cells: usize,
    /// Mean over cells with defined R².
    pub r2: Option<f64>,
    pub n_r2_undefined: usize,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindAggregate {
    pub channel: Option<GroupMean>,
    pub non_channel: Option<GroupMean>,
    pub overall: Option<GroupMean>,
}

fn group_mean<'a>(cells: impl Iterator<Item = &'a CellMetrics>) -> Option<GroupMean> {
    let (mut n, mut r2_sum, mut r2_n, mut rmse_sum) = (0usize, 0.0, 0usize, 0.0);
    for c in cells {
        n += 1;
        rmse_sum += c.rmse;
        if let Some(r) = c.r2 {
            r2_sum += r;
            r2_n += 1;
        }
    }
    (n > 0).then(|| GroupMean {
        n_cells: n,
        r2: (r2_n > 0).then(|| r2_sum / r2_n as f64),
        n_r2_undefined: n - r2_n,
        rmse: rmse_sum / n as f64,
    })
}

/// Unweighted per-cell means for channel cells, non-channel cells, and all cells.
pub fn kind_aggregate(metrics: &[CellMetrics]) -> KindAggregate {
    KindAggregate {
        channel: group_mean(metrics.iter().filter(|m| m.kind == CellKind::Channel)),
        non_channel: group_mean(metrics.iter().filter(|m| m.kind == CellKind::NonChannel)),
        overall: group_mean(metrics.iter()),
    }
}

/// Attaches cell kinds from the grid before aggregating.
pub fn kind_aggregate_on(grid: &Grid, metrics: &[CellMetrics]) -> KindAggregate {
    let relabeled: Vec<CellMetrics> = metrics
        .iter()
        .map(|m| CellMetrics {
            kind: grid.cells[m.cell_id].kind,
            ..m.clone()
        })
        .collect();
    kind_aggregate(&relabeled)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub label: String,
    pub cells: Vec<CellMetrics>,
    pub aggregate: KindAggregate,
    pub bin_edges: Vec<f64>,
    pub bins: Vec<BinStats>,
}

impl EvaluationReport {
    /// Builds a report from per-cell `(truth, prediction)` series.
    pub fn from_predictions(
        label: &str,
        grid: &Grid,
        per_cell: &[(Vec<f64>, Vec<f64>)],
        edges: &[f64],
    ) -> Result<Self, MetricError> {
        let cells = per_cell
            .iter()
            .enumerate()
            .map(|(c, (t, p))| cell_metrics(CellId(c), grid.cells[c].kind, t, p))
            .collect::<Result<Vec<_>, _>>()?;
        let points: Vec<(f64, f64)> = per_cell
            .iter()
            .flat_map(|(t, p)| t.iter().copied().zip(p.iter().copied()))
            .collect();
        Ok(EvaluationReport {
            label: label.to_string(),
            aggregate: kind_aggregate(&cells),
            cells,
            bin_edges: edges.to_vec(),
            bins: binned_report(&points, edges)?,
        })
    }

    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_id", "kind", "r2", "rmse", "n"])?;
        for c in &self.cells {
            w.write_record([
                c.cell_id.to_string(),
                c.kind.as_str().to_string(),
                c.r2.map(|v| v.to_string()).unwrap_or_default(),
                c.rmse.to_string(),
                c.n.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_bins_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lower_ft", "upper_ft", "n", "rmse_ft", "mape_pct", "mape_excluded"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for b in &self.bins {
            w.write_record([
                opt(b.lower),
                opt(b.upper),
                b.n.to_string(),
                opt(b.rmse),
                opt(b.mape),
                b.mape_excluded.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDiff {
    pub cell_id: usize,
    /// `r2_b - r2_a`; absent when either side is undefined.
    pub delta_r2: Option<f64>,
    /// `rmse_a - rmse_b`.
    pub delta_rmse: f64,
}

/// Per-cell change from `a` to `b`; positive values are improvements in both columns.
pub fn diff_report(a: &EvaluationReport, b: &EvaluationReport) -> Result<Vec<CellDiff>, MetricError> {
    if a.cells.len() != b.cells.len() || a.cells.iter().zip(&b.cells).any(|(x, y)| x.cell_id != y.cell_id) {
        return Err(MetricError::CoverageMismatch);
    }
    Ok(a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(x, y)| CellDiff {
            cell_id: x.cell_id,
            delta_r2: x.r2.zip(y.r2).map(|(ra, rb)| rb - ra),
            delta_rmse: x.rmse - y.rmse,
        })
        .collect())
}

pub fn write_diff_csv<W: Write>(diffs: &[CellDiff], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cell_id", "delta_r2", "delta_rmse"])?;
    for d in diffs {
        w.write_record([
            d.cell_id.to_string(),
            d.delta_r2.map(|v| v.to_string()).unwrap_or_default(),
            d.delta_rmse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
