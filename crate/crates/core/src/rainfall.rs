//! Gage time series to per-cell hourly rainfall fields via nearest-gage assignment.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellId, Grid};

/// Sampling step of gage records, minutes.
pub const GAGE_STEP_MINUTES: i64 = 15;

#[derive(Debug, Error)]
pub enum RainfallError {
    #[error("no gages supplied")]
    NoGages,
    #[error("gages {0} and {1} share a location")]
    DuplicateLocation(u32, u32),
    #[error("gage {gage}: {message}")]
    BadRecord { gage: u32, message: String },
    #[error("gage windows differ: gage {0} vs gage {1}")]
    WindowMismatch(u32, u32),
    #[error("cell {0} has no gage assignment")]
    MissingAssignment(usize),
    #[error("assignment references unknown gage {0}")]
    UnknownGage(u32),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Minutes since event start.
    pub t_minutes: i64,
    /// Inches accumulated over the 15-minute step starting at `t_minutes`.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GageRecord {
    pub gage_id: u32,
    pub location: (f64, f64),
    pub samples: Vec<Sample>,
}

impl GageRecord {
    pub fn validate(&self) -> Result<(), RainfallError> {
        let bad = |message: String| RainfallError::BadRecord {
            gage: self.gage_id,
            message,
        };
        let Some(first) = self.samples.first() else {
            return Err(bad("no samples".into()));
        };
        if first.t_minutes < 0 || first.t_minutes % GAGE_STEP_MINUTES != 0 {
            return Err(bad(format!("first timestamp {} is not on the 15-minute grid", first.t_minutes)));
        }
        for pair in self.samples.windows(2) {
            let step = pair[1].t_minutes - pair[0].t_minutes;
            if step != GAGE_STEP_MINUTES {
                return Err(bad(format!(
                    "step of {step} minutes at t={}; expected {GAGE_STEP_MINUTES}",
                    pair[0].t_minutes
                )));
            }
        }
        if let Some(s) = self.samples.iter().find(|s| !(s.depth >= 0.0) || !s.depth.is_finite()) {
            return Err(bad(format!("invalid depth {} at t={}", s.depth, s.t_minutes)));
        }
        Ok(())
    }

    /// (first timestamp, one past the last covered minute).
    pub fn window(&self) -> (i64, i64) {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (a.t_minutes, b.t_minutes + GAGE_STEP_MINUTES),
            _ => (0, 0),
        }
    }
}

/// Per-cell hourly intensity, stored row-major by cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RainfallField {
    pub n_cells: usize,
    pub n_hours: usize,
    intensity: Vec<f64>,
}

impl RainfallField {
    pub fn zeros(n_cells: usize, n_hours: usize) -> Self {
        RainfallField {
            n_cells,
            n_hours,
            intensity: vec![0.0; n_cells * n_hours],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, RainfallError> {
        let n_cells = rows.len();
        let n_hours = rows.first().map_or(0, Vec::len);
        let mut intensity = Vec::with_capacity(n_cells * n_hours);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != n_hours {
                return Err(RainfallError::Dimension(format!(
                    "row {i} has {} hours, expected {n_hours}",
                    r.len()
                )));
            }
            intensity.extend(r);
        }
        let field = RainfallField {
            n_cells,
            n_hours,
            intensity,
        };
        field.check_values()?;
        Ok(field)
    }

    fn check_values(&self) -> Result<(), RainfallError> {
        if let Some(pos) = self.intensity.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(RainfallError::Dimension(format!(
                "invalid intensity {} at cell {} hour {}",
                self.intensity[pos],
                pos / self.n_hours.max(1),
                pos % self.n_hours.max(1)
            )));
        }
        Ok(())
    }

    pub fn row(&self, cell: usize) -> &[f64] {
        &self.intensity[cell * self.n_hours..(cell + 1) * self.n_hours]
    }

    pub fn row_mut(&mut self, cell: usize) -> &mut [f64] {
        &mut self.intensity[cell * self.n_hours..(cell + 1) * self.n_hours]
    }

    pub fn get(&self, cell: usize, hour: usize) -> f64 {
        self.intensity[cell * self.n_hours + hour]
    }

    pub fn check_grid(&self, grid: &Grid) -> Result<(), RainfallError> {
        if self.n_cells != grid.n_cells() {
            return Err(RainfallError::Dimension(format!(
                "field has {} cells, grid has {}",
                self.n_cells,
                grid.n_cells()
            )));
        }
        Ok(())
    }

    /// Writes `cell_id,hour,intensity_in_per_hr`, one row per entry.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RainfallError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["cell_id", "hour", "intensity_in_per_hr"])?;
        for c in 0..self.n_cells {
            for (h, v) in self.row(c).iter().enumerate() {
                w.write_record([c.to_string(), h.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the long-format field CSV. Every (cell, hour) pair must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self, RainfallError> {
        let mut rdr = csv::Reader::from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        if header != ["cell_id", "hour", "intensity_in_per_hr"] {
            return Err(RainfallError::Parse {
                line: 1,
                message: format!("unexpected header {header:?}"),
            });
        }
        let mut entries = Vec::new();
        let (mut max_cell, mut max_hour) = (0usize, 0usize);
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec?;
            let parse_err = |m: String| RainfallError::Parse { line, message: m };
            let cell: usize = rec.get(0).unwrap_or("").trim().parse().map_err(|e| parse_err(format!("cell_id: {e}")))?;
            let hour: usize = rec.get(1).unwrap_or("").trim().parse().map_err(|e| parse_err(format!("hour: {e}")))?;
            let v: f64 = rec
                .get(2)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("intensity: {e}")))?;
            max_cell = max_cell.max(cell);
            max_hour = max_hour.max(hour);
            entries.push((cell, hour, v, line));
        }
        if entries.is_empty() {
            return Ok(RainfallField::zeros(0, 0));
        }
        let mut field = RainfallField::zeros(max_cell + 1, max_hour + 1);
        let mut seen = vec![false; field.intensity.len()];
        for (cell, hour, v, line) in entries {
            let idx = cell * field.n_hours + hour;
            if std::mem::replace(&mut seen[idx], true) {
                return Err(RainfallError::Parse {
                    line,
                    message: format!("duplicate entry for cell {cell} hour {hour}"),
                });
            }
            field.intensity[idx] = v;
        }
        if let Some(idx) = seen.iter().position(|s| !s) {
            return Err(RainfallError::Dimension(format!(
                "missing entry for cell {} hour {}",
                idx / field.n_hours,
                idx % field.n_hours
            )));
        }
        field.check_values()?;
        Ok(field)
    }
}

/// Nearest-gage mapping for every cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThiessenAssignment {
    pub cell_to_gage: Vec<u32>,
}

impl ThiessenAssignment {
    pub fn gage_of(&self, cell: CellId) -> Option<u32> {
        self.cell_to_gage.get(cell.0).copied()
    }
}

/// Assigns each cell to the gage nearest its centroid; equidistant gages resolve to the lowest id.
pub fn thiessen_assign(grid: &Grid, gages: &[GageRecord]) -> Result<ThiessenAssignment, RainfallError> {
    if gages.is_empty() {
        return Err(RainfallError::NoGages);
    }
    let mut seen: BTreeMap<(u64, u64), u32> = BTreeMap::new();
    for g in gages {
        let key = (g.location.0.to_bits(), g.location.1.to_bits());
        if let Some(&other) = seen.get(&key) {
            return Err(RainfallError::DuplicateLocation(other.min(g.gage_id), other.max(g.gage_id)));
        }
        seen.insert(key, g.gage_id);
    }
    let cell_to_gage = grid
        .cells
        .iter()
        .map(|c| {
            let (cx, cy) = c.centroid;
            let mut best: Option<(f64, u32)> = None;
            for g in gages {
                let (dx, dy) = (g.location.0 - cx, g.location.1 - cy);
                let d2 = dx * dx + dy * dy;
                best = match best {
                    Some((bd, bid)) if bd < d2 || (bd == d2 && bid <= g.gage_id) => Some((bd, bid)),
                    _ => Some((d2, g.gage_id)),
                };
            }
            best.map(|(_, id)| id).expect("at least one gage")
        })
        .collect();
    Ok(ThiessenAssignment { cell_to_gage })
}

/// Sums 15-minute depths into hourly depths; hour `h` covers minutes `[60h, 60h+60)`.
/// A trailing partial hour is padded with zeros.
pub fn aggregate_hourly(record: &GageRecord) -> Result<Vec<f64>, RainfallError> {
    record.validate()?;
    let (_, end) = record.window();
    let n_hours = (end as usize).div_ceil(60);
    let mut hourly = vec![0.0; n_hours];
    for s in &record.samples {
        hourly[s.t_minutes as usize / 60] += s.depth;
    }
    Ok(hourly)
}

/// Builds the per-cell hourly field from gage records and a cell-to-gage assignment.
pub fn build_field(
    grid: &Grid,
    gages: &[GageRecord],
    assignment: &ThiessenAssignment,
) -> Result<RainfallField, RainfallError> {
    let first = gages.first().ok_or(RainfallError::NoGages)?;
    for g in gages {
        if g.window() != first.window() {
            return Err(RainfallError::WindowMismatch(first.gage_id, g.gage_id));
        }
    }
    if assignment.cell_to_gage.len() != grid.n_cells() {
        return Err(RainfallError::MissingAssignment(assignment.cell_to_gage.len().min(grid.n_cells())));
    }
    let mut hourly = BTreeMap::new();
    for g in gages {
        hourly.insert(g.gage_id, aggregate_hourly(g)?);
    }
    let n_hours = hourly.values().next().map_or(0, Vec::len);
    let mut field = RainfallField::zeros(grid.n_cells(), n_hours);
    for (cell, gage) in assignment.cell_to_gage.iter().enumerate() {
        let series = hourly.get(gage).ok_or(RainfallError::UnknownGage(*gage))?;
        field.row_mut(cell).copy_from_slice(series);
    }
    Ok(field)
}

/// Reads the long-format gage CSV (`gage_id,x,y,t_minutes,depth_in`). Records come back
/// ordered by gage id with samples sorted by time and validated.
pub fn read_gages_csv<R: Read>(input: R) -> Result<Vec<GageRecord>, RainfallError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["gage_id", "x", "y", "t_minutes", "depth_in"] {
        return Err(RainfallError::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut records: BTreeMap<u32, GageRecord> = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec?;
        let field = |idx: usize, name: &str| -> Result<&str, RainfallError> {
            rec.get(idx).map(str::trim).ok_or_else(|| RainfallError::Parse {
                line,
                message: format!("missing {name}"),
            })
        };
        let perr = |name: &str, e: &dyn std::fmt::Display| RainfallError::Parse {
            line,
            message: format!("{name}: {e}"),
        };
        let gage_id: u32 = field(0, "gage_id")?.parse().map_err(|e| perr("gage_id", &e))?;
        let x: f64 = field(1, "x")?.parse().map_err(|e| perr("x", &e))?;
        let y: f64 = field(2, "y")?.parse().map_err(|e| perr("y", &e))?;
        let t: i64 = field(3, "t_minutes")?.parse().map_err(|e| perr("t_minutes", &e))?;
        let depth: f64 = field(4, "depth_in")?.parse().map_err(|e| perr("depth_in", &e))?;
        let entry = records.entry(gage_id).or_insert_with(|| GageRecord {
            gage_id,
            location: (x, y),
            samples: Vec::new(),
        });
        if entry.location != (x, y) {
            return Err(RainfallError::Parse {
                line,
                message: format!("gage {gage_id} changes location"),
            });
        }
        entry.samples.push(Sample { t_minutes: t, depth });
    }
    let mut out: Vec<GageRecord> = records.into_values().collect();
    for r in &mut out {
        r.samples.sort_by_key(|s| s.t_minutes);
        r.validate()?;
    }
    let ids: HashSet<u32> = out.iter().map(|r| r.gage_id).collect();
    debug_assert_eq!(ids.len(), out.len());
    Ok(out)
}

pub fn write_gages_csv<W: Write>(gages: &[GageRecord], out: W) -> Result<(), RainfallError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["gage_id", "x", "y", "t_minutes", "depth_in"])?;
    for g in gages {
        for s in &g.samples {
            w.write_record([
                g.gage_id.to_string(),
                g.location.0.to_string(),
                g.location.1.to_string(),
                s.t_minutes.to_string(),
                s.depth.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
