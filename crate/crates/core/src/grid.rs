//! Study-area mesh: cells, cell kinds, watershed regions and channel drainage links.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("watershed {0} out of range")]
    WatershedOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WatershedId(pub usize);

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for WatershedId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Channel,
    #[serde(rename = "nonchannel")]
    NonChannel,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Channel => "channel",
            CellKind::NonChannel => "nonchannel",
        }
    }
}

impl FromStr for CellKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "channel" => Ok(CellKind::Channel),
            "nonchannel" | "non-channel" | "non_channel" => Ok(CellKind::NonChannel),
            other => Err(format!("unknown cell kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub id: CellId,
    pub centroid: (f64, f64),
    /// Square feet.
    pub area: f64,
    pub kind: CellKind,
    pub watershed: WatershedId,
    /// Drainage successor; only channel cells carry one.
    pub downstream: Option<CellId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Watershed {
    pub id: WatershedId,
    pub name: String,
    /// Sum of member cell areas, square feet.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub cells: Vec<Cell>,
    pub watersheds: Vec<Watershed>,
    pub n_channel: usize,
    pub n_non_channel: usize,
}

impl Grid {
    /// Builds a grid from cells and watershed names, deriving watershed areas and kind counts.
    /// The result is validated.
    pub fn new(cells: Vec<Cell>, watershed_names: Vec<String>) -> Result<Self, GridError> {
        let mut watersheds: Vec<Watershed> = watershed_names
            .into_iter()
            .enumerate()
            .map(|(i, name)| Watershed {
                id: WatershedId(i),
                name,
                area: 0.0,
            })
            .collect();
        for cell in &cells {
            let w = watersheds
                .get_mut(cell.watershed.0)
                .ok_or(GridError::WatershedOutOfRange(cell.watershed.0))?;
            w.area += cell.area;
        }
        let n_channel = cells.iter().filter(|c| c.kind == CellKind::Channel).count();
        let grid = Grid {
            n_non_channel: cells.len() - n_channel,
            n_channel,
            cells,
            watersheds,
        };
        let violations = validate_grid(&grid);
        if violations.is_empty() {
            Ok(grid)
        } else {
            Err(GridError::Invalid(violations.join("; ")))
        }
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_watersheds(&self) -> usize {
        self.watersheds.len()
    }

    pub fn cell(&self, id: CellId) -> Option<&Cell> {
        self.cells.get(id.0)
    }

    pub fn members(&self, w: WatershedId) -> impl Iterator<Item = &Cell> + '_ {
        self.cells.iter().filter(move |c| c.watershed == w)
    }

    /// Upstream neighbours of every cell along channel drainage links.
    pub fn upstream_lists(&self) -> Vec<Vec<CellId>> {
        let mut up = vec![Vec::new(); self.cells.len()];
        for cell in &self.cells {
            if let Some(d) = cell.downstream {
                up[d.0].push(cell.id);
            }
        }
        up
    }

    /// Writes the grid CSV (`cell_id,x,y,area_sqft,kind,watershed_id,downstream_id`).
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "cell_id",
            "x",
            "y",
            "area_sqft",
            "kind",
            "watershed_id",
            "downstream_id",
        ])?;
        for c in &self.cells {
            w.write_record([
                c.id.0.to_string(),
                c.centroid.0.to_string(),
                c.centroid.1.to_string(),
                c.area.to_string(),
                c.kind.as_str().to_string(),
                c.watershed.0.to_string(),
                c.downstream.map(|d| d.0.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the watershed CSV (`watershed_id,name`).
    pub fn write_watersheds_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["watershed_id", "name"])?;
        for ws in &self.watersheds {
            w.write_record([ws.id.0.to_string(), ws.name.clone()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, cells_path: &Path, watersheds_path: &Path) -> Result<(), GridError> {
        let io_err = |p: &Path| {
            let p = p.display().to_string();
            move |source| GridError::Io { path: p, source }
        };
        let cells = std::fs::File::create(cells_path).map_err(io_err(cells_path))?;
        self.write_cells_csv(cells)
            .map_err(|e| GridError::Invalid(e.to_string()))?;
        let ws = std::fs::File::create(watersheds_path).map_err(io_err(watersheds_path))?;
        self.write_watersheds_csv(ws)
            .map_err(|e| GridError::Invalid(e.to_string()))?;
        Ok(())
    }
}

fn parse_field<T: FromStr>(record: &csv::StringRecord, idx: usize, name: &str, line: usize) -> Result<T, GridError>
where
    T::Err: fmt::Display,
{
    let raw = record.get(idx).ok_or_else(|| GridError::Parse {
        line,
        message: format!("missing column {name}"),
    })?;
    raw.trim().parse::<T>().map_err(|e| GridError::Parse {
        line,
        message: format!("bad {name} {raw:?}: {e}"),
    })
}

fn check_header(record: &csv::StringRecord, expected: &[&str]) -> Result<(), GridError> {
    let got: Vec<&str> = record.iter().map(str::trim).collect();
    if got != expected {
        return Err(GridError::Parse {
            line: 1,
            message: format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

/// Parses the watershed CSV into names ordered by id. Ids must be dense from 0.
pub fn read_watersheds<R: Read>(input: R) -> Result<Vec<String>, GridError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| GridError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    check_header(header, &["watershed_id", "name"])?;
    let mut names = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| GridError::Parse {
            line,
            message: e.to_string(),
        })?;
        let id: usize = parse_field(&rec, 0, "watershed_id", line)?;
        if id != names.len() {
            return Err(GridError::Parse {
                line,
                message: format!("watershed ids must be dense and ordered; expected {}, found {id}", names.len()),
            });
        }
        names.push(rec.get(1).unwrap_or_default().trim().to_string());
    }
    Ok(names)
}

/// Parses the grid CSV. `n_watersheds` bounds the watershed column.
pub fn read_cells<R: Read>(input: R, n_watersheds: usize) -> Result<Vec<Cell>, GridError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| GridError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    check_header(
        header,
        &["cell_id", "x", "y", "area_sqft", "kind", "watershed_id", "downstream_id"],
    )?;
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| GridError::Parse {
            line,
            message: e.to_string(),
        })?;
        let id: usize = parse_field(&rec, 0, "cell_id", line)?;
        if id != cells.len() {
            return Err(GridError::Parse {
                line,
                message: format!("cell ids must be dense and in file order; expected {}, found {id}", cells.len()),
            });
        }
        let x: f64 = parse_field(&rec, 1, "x", line)?;
        let y: f64 = parse_field(&rec, 2, "y", line)?;
        let area: f64 = parse_field(&rec, 3, "area_sqft", line)?;
        let kind: CellKind = parse_field(&rec, 4, "kind", line)?;
        let watershed: usize = parse_field(&rec, 5, "watershed_id", line)?;
        if watershed >= n_watersheds {
            return Err(GridError::Parse {
                line,
                message: format!("watershed_id {watershed} out of range (have {n_watersheds})"),
            });
        }
        let downstream = match rec.get(6).map(str::trim) {
            None | Some("") => None,
            Some(_) => Some(CellId(parse_field(&rec, 6, "downstream_id", line)?)),
        };
        cells.push(Cell {
            id: CellId(id),
            centroid: (x, y),
            area,
            kind,
            watershed: WatershedId(watershed),
            downstream,
        });
    }
    Ok(cells)
}

/// Loads a grid from its cell CSV and watershed CSV.
pub fn load_grid(cells_path: &Path, watersheds_path: &Path) -> Result<Grid, GridError> {
    let open = |p: &Path| {
        std::fs::File::open(p).map_err(|source| GridError::Io {
            path: p.display().to_string(),
            source,
        })
    };
    let names = read_watersheds(open(watersheds_path)?)?;
    let cells = read_cells(open(cells_path)?, names.len())?;
    Grid::new(cells, names)
}

/// Lists every invariant violation. An empty list means the grid is valid.
pub fn validate_grid(grid: &Grid) -> Vec<String> {
    let mut out = Vec::new();
    let n = grid.cells.len();

    for (i, c) in grid.cells.iter().enumerate() {
        if c.id.0 != i {
            out.push(format!("cell at position {i} has id {}", c.id));
        }
        if !(c.area > 0.0) || !c.area.is_finite() {
            out.push(format!("cell {} has non-positive area", c.id));
        }
        if !c.centroid.0.is_finite() || !c.centroid.1.is_finite() {
            out.push(format!("cell {} has non-finite centroid", c.id));
        }
        if c.watershed.0 >= grid.watersheds.len() {
            out.push(format!("cell {} references missing watershed {}", c.id, c.watershed));
        }
        if let Some(d) = c.downstream {
            if c.kind == CellKind::NonChannel {
                out.push(format!("non-channel cell {} has downstream", c.id));
            }
            match grid.cells.get(d.0) {
                None => out.push(format!("cell {} drains to missing cell {d}", c.id)),
                Some(t) if t.kind != CellKind::Channel => {
                    out.push(format!("cell {} drains to non-channel cell {d}", c.id))
                }
                _ => {}
            }
        }
    }

    // Forest check: following downstream links from any cell must terminate.
    let mut state = vec![0u8; n]; // 0 unvisited, 1 on current path, 2 done
    let mut cycle_reported = HashSet::new();
    for start in 0..n {
        if state[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut cur = Some(start);
        while let Some(i) = cur {
            if i >= n || state[i] == 2 {
                break;
            }
            if state[i] == 1 {
                let min_on_cycle = path
                    .iter()
                    .skip_while(|&&p| p != i)
                    .copied()
                    .min()
                    .unwrap_or(i);
                if cycle_reported.insert(min_on_cycle) {
                    out.push(format!("drainage cycle through cell {min_on_cycle}"));
                }
                break;
            }
            state[i] = 1;
            path.push(i);
            cur = grid.cells[i].downstream.map(|d| d.0);
        }
        for p in path {
            state[p] = 2;
        }
    }

    let mut sums = vec![0.0; grid.watersheds.len()];
    for c in &grid.cells {
        if let Some(s) = sums.get_mut(c.watershed.0) {
            *s += c.area;
        }
    }
    for (i, ws) in grid.watersheds.iter().enumerate() {
        if ws.id.0 != i {
            out.push(format!("watershed at position {i} has id {}", ws.id));
        }
        let expected = sums[i];
        let tol = 1e-9 * expected.abs().max(1.0);
        if (ws.area - expected).abs() > tol {
            out.push(format!(
                "watershed {} area {} differs from member sum {}",
                ws.id, ws.area, expected
            ));
        }
    }

    let n_channel = grid.cells.iter().filter(|c| c.kind == CellKind::Channel).count();
    if grid.n_channel != n_channel || grid.n_non_channel != n - n_channel {
        out.push(format!(
            "kind counts {}+{} do not match cells ({n_channel} channel of {n})",
            grid.n_channel, grid.n_non_channel
        ));
    }
    out
}

/// Exact sum of the member cell areas of `w`.
pub fn watershed_area(grid: &Grid, w: WatershedId) -> Result<f64, GridError> {
    if w.0 >= grid.watersheds.len() {
        return Err(GridError::WatershedOutOfRange(w.0));
    }
    Ok(grid.members(w).map(|c| c.area).sum())
}
