use std::path::Path;

use flood_surrogate::features::Experiment;
use flood_surrogate::gbdt::Hyperparams;
use flood_surrogate::grid::{Cell, CellId, CellKind, Grid, WatershedId};
use flood_surrogate::oracle::{generate_corpus, Corpus, OracleParams, StormConfig};
use flood_surrogate::pipeline::store::{cell_path, read_store_manifest};
use flood_surrogate::pipeline::{
    build_combined, predict_event, train_all, CellStatus, CombinedPredictor, PipelineError, SplitSpec, TrainOptions,
};
use flood_surrogate::rainfall::RainfallField;

/// `n_channel` channel cells chained west to east, then `n_non` non-channel cells, in
/// two watersheds.
fn line_grid(n_channel: usize, n_non: usize) -> Grid {
    let n = n_channel + n_non;
    let cells = (0..n)
        .map(|i| Cell {
            id: CellId(i),
            centroid: (i as f64 * 1500.0, (i % 3) as f64 * 1500.0),
            area: 1500.0 * 1500.0,
            kind: if i < n_channel { CellKind::Channel } else { CellKind::NonChannel },
            watershed: WatershedId(usize::from(i >= n / 2)),
            downstream: (i + 1 < n_channel).then(|| CellId(i + 1)),
        })
        .collect();
    Grid::new(cells, vec!["west".into(), "east".into()]).unwrap()
}

fn corpus(grid: &Grid, n_events: usize, seed: u64) -> Corpus {
    let storm = StormConfig {
        n_events,
        null_fraction: 0.1,
        seed,
        ..StormConfig::default()
    };
    generate_corpus(grid, &storm, &OracleParams::default()).unwrap()
}

fn small_hp() -> Hyperparams {
    Hyperparams {
        learning_rate: 0.1,
        n_trees: 150,
        ..Hyperparams::default()
    }
}

fn train_both(c: &Corpus, store: &Path) {
    for e in Experiment::ALL {
        let s = train_all(c, e, &small_hp(), &SplitSpec::default(), store, &TrainOptions::default()).unwrap();
        assert_eq!(s.failed(), 0);
    }
}

fn store_bytes(store: &Path, grid: &Grid) -> Vec<Vec<u8>> {
    let mut out = vec![std::fs::read(store.join("manifest.json")).unwrap()];
    for e in Experiment::ALL {
        for c in 0..grid.n_cells() {
            out.push(std::fs::read(cell_path(store, e, c)).unwrap());
        }
    }
    out
}

#[test]
fn training_completes_and_resumes_without_retraining() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(1, 2);
    let c = corpus(&grid, 20, 3);
    let store = dir.path().join("store");
    let first = train_all(&c, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    assert_eq!((first.trained, first.skipped), (3, 0));
    let manifest = read_store_manifest(&store).unwrap();
    assert!(manifest.experiments[&Experiment::Exp1].is_complete(3));

    let again = train_all(&c, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    assert_eq!((again.trained, again.skipped), (0, 3));
}

#[test]
fn resuming_after_deleted_files_rebuilds_an_identical_store() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(2, 4);
    let c = corpus(&grid, 20, 5);
    let store = dir.path().join("store");
    train_both(&c, &store);
    let before = store_bytes(&store, &grid);

    std::fs::remove_file(cell_path(&store, Experiment::Exp1, 4)).unwrap();
    std::fs::remove_file(cell_path(&store, Experiment::Exp2, 0)).unwrap();
    let s = train_all(&c, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    assert_eq!(s.trained, 1);
    let s = train_all(&c, Experiment::Exp2, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    assert_eq!(s.trained, 1);
    assert_eq!(store_bytes(&store, &grid), before);
}

#[test]
fn combined_predictor_takes_channel_cells_from_exp2() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(2, 8);
    let c = corpus(&grid, 20, 9);
    let store = dir.path().join("store");
    train_both(&c, &store);

    let p = build_combined(&store, &store, &grid).unwrap();
    let sources: Vec<Experiment> = p.models().iter().map(|m| m.experiment).collect();
    assert_eq!(&sources[..2], &[Experiment::Exp2; 2]);
    assert!(sources[2..].iter().all(|&e| e == Experiment::Exp1));

    std::fs::remove_file(cell_path(&store, Experiment::Exp2, 1)).unwrap();
    match build_combined(&store, &store, &grid) {
        Err(e @ PipelineError::MissingModel { cell: 1, .. }) => assert!(e.to_string().contains("cell 1")),
        other => panic!("expected a missing model for cell 1, got {other:?}"),
    }
}

#[test]
fn all_non_channel_grid_predicts_exactly_as_exp1() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(0, 6);
    let c = corpus(&grid, 20, 11);
    let store = dir.path().join("store");
    train_both(&c, &store);
    let combined = build_combined(&store, &store, &grid).unwrap();
    let exp1 = CombinedPredictor::single(&grid, &store, Experiment::Exp1).unwrap();
    for ev in &c.events {
        let a = predict_event(&combined, &grid, &ev.field).unwrap();
        let b = predict_event(&exp1, &grid, &ev.field).unwrap();
        assert_eq!(a.depth, b.depth);
    }
}

#[test]
fn zero_rain_predicts_near_zero_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(2, 4);
    let storm = StormConfig {
        n_events: 200,
        null_fraction: 0.2,
        seed: 13,
        ..StormConfig::default()
    };
    let c = generate_corpus(&grid, &storm, &OracleParams::default()).unwrap();
    assert!(c.events.iter().filter(|e| e.is_null()).count() >= 20);
    let store = dir.path().join("store");
    for e in Experiment::ALL {
        train_all(&c, e, &Hyperparams::default(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    }
    let p = build_combined(&store, &store, &grid).unwrap();

    let dry = RainfallField::zeros(grid.n_cells(), 24);
    let map = predict_event(&p, &grid, &dry).unwrap();
    assert!(map.depth.iter().all(|d| d.abs() < 0.5), "{:?}", map.depth);

    let field = &c.events[0].field;
    let a = predict_event(&p, &grid, field).unwrap();
    let b = predict_event(&p, &grid, &field.clone()).unwrap();
    assert_eq!(a.depth, b.depth);

    let wrong = RainfallField::zeros(grid.n_cells() + 1, 24);
    assert!(predict_event(&p, &grid, &wrong).is_err());
}

#[test]
fn store_from_another_corpus_is_rejected_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(1, 2);
    let store = dir.path().join("store");
    let a = corpus(&grid, 20, 1);
    let b = corpus(&grid, 20, 2);
    train_all(&a, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    let err = train_all(&b, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default());
    assert!(matches!(err, Err(PipelineError::CorpusMismatch { .. })));
    let forced = TrainOptions {
        force: true,
        ..TrainOptions::default()
    };
    let s = train_all(&b, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &forced).unwrap();
    assert_eq!(s.trained, 3);
    assert_eq!(read_store_manifest(&store).unwrap().corpus_hash, b.manifest.corpus_hash);
}

#[test]
fn a_cell_with_bad_targets_is_recorded_as_failed() {
    let dir = tempfile::tempdir().unwrap();
    let grid = line_grid(1, 3);
    let mut c = corpus(&grid, 20, 4);
    c.events[0].depth[2] = f64::NAN;
    let store = dir.path().join("store");
    let s = train_all(&c, Experiment::Exp1, &small_hp(), &SplitSpec::default(), &store, &TrainOptions::default()).unwrap();
    assert_eq!(s.failed(), 1);
    let rec = &read_store_manifest(&store).unwrap().experiments[&Experiment::Exp1];
    let bad: Vec<usize> = rec.failed().map(|r| r.cell_id).collect();
    assert_eq!(bad, vec![2]);
    assert!(rec.cells[2].error.is_some());
    assert!(rec.cells.iter().filter(|r| r.cell_id != 2).all(|r| r.status == CellStatus::Trained));
    assert!(!rec.is_complete(4));
}
