//! On-disk event corpus:
//!
//! ```text
//! <dir>/corpus.json
//! <dir>/grid.csv, <dir>/watersheds.csv
//! <dir>/events/<id>/rainfall.csv   cell_id,hour,intensity_in_per_hr
//! <dir>/events/<id>/depth.csv      cell_id,peak_depth_ft
//! ```

use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::{read_cells, read_watersheds, Grid};
use crate::rainfall::RainfallField;

use super::response::{simulate_with_drainage, Drainage, OracleParams};
use super::storm::{generate_events, StormConfig};
use super::OracleError;

pub const CORPUS_FORMAT: &str = "flood-surrogate-corpus";
pub const CORPUS_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "corpus.json";
const GRID_FILE: &str = "grid.csv";
const WATERSHED_FILE: &str = "watersheds.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    pub storm: StormConfig,
    pub oracle: OracleParams,
    pub seed: u64,
    pub n_events: usize,
    pub n_null_events: usize,
    pub grid_file: String,
    pub watershed_file: String,
    /// SHA-256 of the canonical JSON of the storm and oracle configuration.
    pub config_hash: String,
    /// SHA-256 over the grid files and every event file, in event order.
    pub corpus_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub id: usize,
    pub field: RainfallField,
    /// Peak depth per cell, feet.
    pub depth: Vec<f64>,
}

impl Event {
    pub fn is_null(&self) -> bool {
        (0..self.field.n_cells).all(|c| self.field.row(c).iter().all(|&v| v == 0.0))
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub grid: Grid,
    pub events: Vec<Event>,
    pub manifest: CorpusManifest,
}

fn to_hex(bytes: &[u8]) -> String {
    hex::encode(bytes)
}

pub fn config_hash(storm: &StormConfig, oracle: &OracleParams) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        storm: &'a StormConfig,
        oracle: &'a OracleParams,
    }
    let bytes = serde_json::to_vec(&Key { storm, oracle }).expect("config serializes");
    to_hex(&Sha256::digest(&bytes))
}

pub fn write_depth_csv(depth: &[f64]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["cell_id", "peak_depth_ft"]).expect("in-memory write");
    for (c, d) in depth.iter().enumerate() {
        w.write_record([c.to_string(), d.to_string()]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Reads `cell_id,<value>` CSV with dense cell ids into a vector.
pub fn read_cell_values<R: Read>(input: R, column: &str) -> Result<Vec<f64>, OracleError> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    if header != ["cell_id", column] {
        return Err(OracleError::Corpus(format!("expected header cell_id,{column}, found {header:?}")));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let id: usize = rec
            .get(0)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| OracleError::Corpus(format!("line {line}: cell_id: {e}")))?;
        if id != out.len() {
            return Err(OracleError::Corpus(format!("line {line}: expected cell {}, found {id}", out.len())));
        }
        let v: f64 = rec
            .get(1)
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|e| OracleError::Corpus(format!("line {line}: {column}: {e}")))?;
        out.push(v);
    }
    Ok(out)
}

struct EventFiles {
    rainfall: Vec<u8>,
    depth: Vec<u8>,
}

fn grid_files(grid: &Grid) -> Result<(Vec<u8>, Vec<u8>), OracleError> {
    let mut cells = Vec::new();
    grid.write_cells_csv(&mut cells)?;
    let mut ws = Vec::new();
    grid.write_watersheds_csv(&mut ws)?;
    Ok((cells, ws))
}

fn hash_files<'a>(parts: impl Iterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    to_hex(&h.finalize())
}

fn event_files(events: &[Event]) -> Result<Vec<EventFiles>, OracleError> {
    events
        .par_iter()
        .map(|e| {
            let mut rainfall = Vec::new();
            e.field.write_csv(&mut rainfall).map_err(|err| OracleError::Corpus(err.to_string()))?;
            Ok(EventFiles {
                rainfall,
                depth: write_depth_csv(&e.depth),
            })
        })
        .collect()
}

fn corpus_hash(grid_cells: &[u8], grid_ws: &[u8], files: &[EventFiles]) -> String {
    let parts = [grid_cells, grid_ws]
        .into_iter()
        .chain(files.iter().flat_map(|f| [f.rainfall.as_slice(), f.depth.as_slice()]));
    hash_files(parts)
}

/// Generates storms and oracle depths for a grid.
pub fn generate_corpus(grid: &Grid, storm: &StormConfig, oracle: &OracleParams) -> Result<Corpus, OracleError> {
    oracle.validate()?;
    let fields = generate_events(grid, storm)?;
    let drainage = Drainage::new(grid);
    let events = fields
        .into_par_iter()
        .enumerate()
        .map(|(id, field)| {
            let depth = simulate_with_drainage(grid, &drainage, &field, oracle)?;
            Ok(Event { id, field, depth })
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let (cells_csv, ws_csv) = grid_files(grid)?;
    let files = event_files(&events)?;
    let manifest = CorpusManifest {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        storm: storm.clone(),
        oracle: oracle.clone(),
        seed: storm.seed,
        n_events: events.len(),
        n_null_events: events.iter().filter(|e| e.is_null()).count(),
        grid_file: GRID_FILE.into(),
        watershed_file: WATERSHED_FILE.into(),
        config_hash: config_hash(storm, oracle),
        corpus_hash: corpus_hash(&cells_csv, &ws_csv, &files),
    };
    Ok(Corpus {
        grid: grid.clone(),
        events,
        manifest,
    })
}

fn event_dir(dir: &Path, id: usize) -> PathBuf {
    dir.join("events").join(id.to_string())
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> OracleError + '_ {
    move |e| OracleError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

/// Writes a corpus directory. Refuses to overwrite an existing corpus unless `force`.
pub fn write_corpus(dir: &Path, corpus: &Corpus, force: bool) -> Result<(), OracleError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        if !force {
            return Err(OracleError::Exists(dir.display().to_string()));
        }
        let events = dir.join("events");
        if events.exists() {
            std::fs::remove_dir_all(&events).map_err(io_err(&events))?;
        }
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (cells_csv, ws_csv) = grid_files(&corpus.grid)?;
    let files = event_files(&corpus.events)?;
    let p = dir.join(GRID_FILE);
    std::fs::write(&p, &cells_csv).map_err(io_err(&p))?;
    let p = dir.join(WATERSHED_FILE);
    std::fs::write(&p, &ws_csv).map_err(io_err(&p))?;
    for (e, f) in corpus.events.iter().zip(&files) {
        let d = event_dir(dir, e.id);
        std::fs::create_dir_all(&d).map_err(io_err(&d))?;
        let p = d.join("rainfall.csv");
        std::fs::write(&p, &f.rainfall).map_err(io_err(&p))?;
        let p = d.join("depth.csv");
        std::fs::write(&p, &f.depth).map_err(io_err(&p))?;
    }
    let mut manifest = corpus.manifest.clone();
    manifest.corpus_hash = corpus_hash(&cells_csv, &ws_csv, &files);
    let bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, &manifest_path).map_err(io_err(&manifest_path))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<CorpusManifest, OracleError> {
    let p = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&p).map_err(io_err(&p))?;
    let manifest: CorpusManifest =
        serde_json::from_slice(&bytes).map_err(|e| OracleError::Corpus(format!("{}: {e}", p.display())))?;
    if manifest.format != CORPUS_FORMAT {
        return Err(OracleError::Corpus(format!("unexpected corpus format {:?}", manifest.format)));
    }
    if manifest.version > CORPUS_VERSION {
        return Err(OracleError::Corpus(format!(
            "corpus version {} is newer than supported {CORPUS_VERSION}",
            manifest.version
        )));
    }
    Ok(manifest)
}

/// Reads a corpus and checks its files against the manifest hash.
pub fn read_corpus(dir: &Path) -> Result<Corpus, OracleError> {
    let manifest = read_manifest(dir)?;
    let p = dir.join(&manifest.grid_file);
    let cells_csv = std::fs::read(&p).map_err(io_err(&p))?;
    let p = dir.join(&manifest.watershed_file);
    let ws_csv = std::fs::read(&p).map_err(io_err(&p))?;
    let names = read_watersheds(ws_csv.as_slice())?;
    let grid = Grid::new(read_cells(cells_csv.as_slice(), names.len())?, names)?;

    let loaded = (0..manifest.n_events)
        .into_par_iter()
        .map(|id| {
            let d = event_dir(dir, id);
            let p = d.join("rainfall.csv");
            let rainfall = std::fs::read(&p).map_err(io_err(&p))?;
            let p = d.join("depth.csv");
            let depth_bytes = std::fs::read(&p).map_err(io_err(&p))?;
            let field = RainfallField::read_csv(rainfall.as_slice())
                .map_err(|e| OracleError::Corpus(format!("event {id}: {e}")))?;
            let depth = read_cell_values(depth_bytes.as_slice(), "peak_depth_ft")?;
            if field.n_cells != grid.n_cells() || depth.len() != grid.n_cells() {
                return Err(OracleError::Corpus(format!("event {id} does not match the grid")));
            }
            Ok((
                Event { id, field, depth },
                EventFiles {
                    rainfall,
                    depth: depth_bytes,
                },
            ))
        })
        .collect::<Result<Vec<_>, OracleError>>()?;
    let (events, files): (Vec<Event>, Vec<EventFiles>) = loaded.into_iter().unzip();
    let hash = corpus_hash(&cells_csv, &ws_csv, &files);
    if hash != manifest.corpus_hash {
        return Err(OracleError::HashMismatch {
            expected: manifest.corpus_hash.clone(),
            found: hash,
        });
    }
    Ok(Corpus { grid, events, manifest })
}
