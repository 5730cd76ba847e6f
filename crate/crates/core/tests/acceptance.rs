//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flood_surrogate::cli::{cmd_evaluate, cmd_generate, cmd_importance, cmd_train};
use flood_surrogate::config::{GridSource, RunConfig};
use flood_surrogate::features::{event_features, heavy_ratio, Experiment, HEAVY_THRESHOLD_IN};
use flood_surrogate::gbdt::{train, train_with_history, Hyperparams};
use flood_surrogate::grid::{Cell, CellId, CellKind, Grid, WatershedId};
use flood_surrogate::matrix::Matrix;
use flood_surrogate::metrics::{binned_report, kind_aggregate, mape, r_squared, rmse, CellMetrics};
use flood_surrogate::oracle::layout::SyntheticGridSpec;
use flood_surrogate::oracle::storm::Range;
use flood_surrogate::oracle::{generate_corpus, read_corpus, OracleParams, StormConfig};
use flood_surrogate::pipeline::{
    build_combined, corpus_features, evaluate_store, predict_event, split_events, train_all, train_cell, SplitSpec,
    TrainOptions, TrainingData,
};
use flood_surrogate::rainfall::RainfallField;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- 1

fn random_grid(rng: &mut ChaCha8Rng, n: usize, n_ws: usize) -> Grid {
    let cells = (0..n)
        .map(|i| Cell {
            id: CellId(i),
            centroid: (rng.gen_range(0.0..1e5), rng.gen_range(0.0..1e5)),
            area: rng.gen_range(1.0..5000.0),
            kind: CellKind::NonChannel,
            // First n_ws cells seed every watershed so none is empty.
            watershed: WatershedId(if i < n_ws { i } else { rng.gen_range(0..n_ws) }),
            downstream: None,
        })
        .collect();
    Grid::new(cells, (0..n_ws).map(|w| format!("w{w}")).collect()).unwrap()
}

fn brute_force_ratio(grid: &Grid, mask: &[bool], w: usize) -> f64 {
    let mut heavy = 0.0;
    let mut total = 0.0;
    for (i, c) in grid.cells.iter().enumerate() {
        if c.watershed.0 == w {
            total += c.area;
            if mask[i] {
                heavy += c.area;
            }
        }
    }
    heavy / total
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=1000);
        let n_ws = rng.gen_range(1..=n.min(12));
        let grid = random_grid(&mut rng, n, n_ws);
        let p = rng.gen_range(0.0..1.0);
        let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        for w in 0..n_ws {
            checked += 1;
            if heavy_ratio(&grid, &mask, WatershedId(w)).unwrap() != brute_force_ratio(&grid, &mask, w) {
                mismatches += 1;
            }
        }
        // The event pipeline must agree with the same counting on a rainfall field.
        let depth: Vec<f64> = mask.iter().map(|&h| if h { HEAVY_THRESHOLD_IN + 0.5 } else { 1.0 }).collect();
        let field = RainfallField::from_rows(depth.iter().map(|&d| vec![d]).collect()).unwrap();
        let ev = event_features(&grid, &field).unwrap();
        for w in 0..n_ws {
            checked += 1;
            if ev.ratios.heavy_cumulative[w] != brute_force_ratio(&grid, &mask, w) {
                mismatches += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        mismatches == 0 && t < Duration::from_secs(5),
        format!("{checked} ratios, {mismatches} mismatches, {:.3} s (limit 5 s)", t.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 2

fn soft(g: f64, a: f64) -> f64 {
    g.signum() * (g.abs() - a).max(0.0)
}

fn score(g: f64, h: f64, a: f64, l: f64) -> f64 {
    soft(g, a).powi(2) / (h + l)
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

/// Every split between consecutive distinct values of every feature.
fn exhaustive_splits(rows: &[[f64; 2]], grad: &[f64], a: f64, l: f64) -> Vec<Candidate> {
    let n = rows.len() as f64;
    let g_all: f64 = grad.iter().sum();
    let mut out = Vec::new();
    for f in 0..2 {
        let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl) = (0.0, 0.0);
            for (r, g) in rows.iter().zip(grad) {
                if r[f] < thr {
                    gl += g;
                    hl += 1.0;
                }
            }
            let gain = 0.5 * (score(gl, hl, a, l) + score(g_all - gl, n - hl, a, l) - score(g_all, n, a, l));
            out.push(Candidate {
                feature: f,
                threshold: thr,
                gain,
            });
        }
    }
    out
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (alpha, lambda) = (1.0, 1.0);
    let hp = Hyperparams {
        learning_rate: 1.0,
        n_trees: 1,
        max_depth: 1,
        l1_alpha: alpha,
        l2_lambda: lambda,
        colsample_bytree: 1.0,
        min_split_gain: 0.0,
        seed: 0,
    };
    let mut failures = Vec::new();
    let mut max_leaf_err: f64 = 0.0;
    let mut ties = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=8);
        let rows: Vec<[f64; 2]> = (0..n)
            .map(|_| [f64::from(rng.gen_range(0..5u8)), rng.gen_range(-3.0..3.0)])
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let model = train(&Matrix::from_rows(&rows), &y, &Matrix::with_cols(2), &[], &hp).unwrap();
        let base = model.base_score;
        let grad: Vec<f64> = y.iter().map(|v| base - v).collect();
        let cands = exhaustive_splits(&rows, &grad, alpha, lambda);
        let best = cands.iter().map(|c| c.gain).fold(f64::NEG_INFINITY, f64::max);
        let tree = &model.trees[0];

        if !(best > 0.0) {
            if tree.n_nodes() != 1 {
                failures.push(format!("case {case}: split found but no candidate has positive gain"));
            }
            let leaf = -soft(grad.iter().sum(), alpha) / (n as f64 + lambda);
            max_leaf_err = max_leaf_err.max((tree.value[0] - leaf).abs());
            continue;
        }
        if tree.n_nodes() != 3 {
            failures.push(format!("case {case}: expected a split, tree has {} nodes", tree.n_nodes()));
            continue;
        }
        let (f, thr) = (tree.split_feature[0] as usize, tree.threshold[0]);
        // Candidates whose gain equals the maximum up to summation-order rounding.
        let tol = 1e-9 * best.abs().max(1.0);
        let argmax: Vec<&Candidate> = cands.iter().filter(|c| best - c.gain <= tol).collect();
        if argmax.len() > 1 {
            ties += 1;
        }
        // A split is its feature plus the rows it sends left; any threshold strictly
        // between the two neighbouring values is the same split.
        let goes_left = |feature: usize, t: f64| -> Vec<bool> { rows.iter().map(|r| r[feature] < t).collect() };
        let chosen = goes_left(f, thr);
        let first = argmax[0];
        let chosen_ok = argmax
            .iter()
            .any(|c| c.feature == f && goes_left(c.feature, c.threshold) == chosen);
        if !chosen_ok {
            failures.push(format!(
                "case {case}: chose f{f} < {thr}, oracle f{} < {} (gain {best})",
                first.feature, first.threshold
            ));
            continue;
        }
        if (tree.gain[0] - best).abs() > tol {
            failures.push(format!("case {case}: gain {} vs {best}", tree.gain[0]));
        }
        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
        for (r, g) in rows.iter().zip(&grad) {
            if r[f] < thr {
                gl += g;
                hl += 1.0;
            } else {
                gr += g;
                hr += 1.0;
            }
        }
        let wl = -soft(gl, alpha) / (hl + lambda);
        let wr = -soft(gr, alpha) / (hr + lambda);
        let (l, r) = (tree.left[0] as usize, tree.right[0] as usize);
        max_leaf_err = max_leaf_err.max((tree.value[l] - wl).abs()).max((tree.value[r] - wr).abs());
    }
    let pass = failures.is_empty() && max_leaf_err <= 1e-12;
    let mut detail = format!(
        "200 cases, {} split mismatches, {ties} gain ties, max leaf weight error {max_leaf_err:.1e} (limit 1e-12)",
        failures.len()
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; first: {f}"));
    }
    outcome(pass, detail)
}

// ---------------------------------------------------------------- 3

fn criterion_3() -> Outcome {
    let mut worst_increase: f64 = 0.0;
    let mut violations = 0;
    for d in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + d);
        let n = 150;
        let n_features = 2 + d as usize;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n_features).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r[0].sin() * 3.0 + r[1] * r[1] - 0.5 * r[n_features - 1] + rng.gen_range(-0.3..0.3))
            .collect();
        let hp = Hyperparams {
            colsample_bytree: 1.0,
            seed: d,
            ..Hyperparams::default()
        };
        let x = Matrix::from_rows(&rows);
        let (_, hist) = train_with_history(&x, &y, &Matrix::with_cols(n_features), &[], &hp).unwrap();
        assert_eq!(hist.train_rmse.len(), 1001);
        for w in hist.train_rmse.windows(2) {
            if w[1] > w[0] {
                violations += 1;
                worst_increase = worst_increase.max(w[1] - w[0]);
            }
        }
    }
    outcome(
        violations == 0,
        format!("5 datasets x 1000 rounds, {violations} increases (largest {worst_increase:.1e})"),
    )
}

// ---------------------------------------------------------------- 4, 5, 7

fn list_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != ".lock") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

struct DeskRun {
    cfg: RunConfig,
    elapsed: Duration,
}

fn desk_run(root: &Path, workers: usize) -> DeskRun {
    let mut cfg = RunConfig::desk(root);
    cfg.workers = workers;
    let start = Instant::now();
    cmd_generate(&cfg, false).unwrap();
    for e in Experiment::ALL {
        cmd_train(&cfg, e, false).unwrap();
    }
    cmd_evaluate(&cfg, &cfg.bins).unwrap();
    cmd_importance(&cfg, 0.10, None, None, &cfg.output_dir.join("importance.csv")).unwrap();
    DeskRun {
        cfg,
        elapsed: start.elapsed(),
    }
}

fn criteria_4_5(run: &DeskRun) -> (Outcome, Outcome) {
    let corpus = read_corpus(&run.cfg.corpus_dir).unwrap();
    let grid = &corpus.grid;
    let ev = evaluate_store(&corpus, &run.cfg.store_dir, &run.cfg.bins).unwrap();
    let comb = ev.combined.as_ref().unwrap().aggregate.clone();
    let e1 = ev.exp1.as_ref().unwrap().aggregate.clone();
    let e2 = ev.exp2.as_ref().unwrap().aggregate.clone();
    let r2 = |g: &Option<flood_surrogate::metrics::GroupMean>| g.as_ref().and_then(|g| g.r2).unwrap_or(f64::NAN);
    let (nc, ch) = (r2(&comb.non_channel), r2(&comb.channel));
    let c4 = outcome(
        grid.n_cells() == 400
            && grid.n_channel == 40
            && corpus.events.len() == 200
            && nc >= 0.90
            && ch >= 0.80
            && run.elapsed < Duration::from_secs(30 * 60),
        format!(
            "{} cells ({} channel), {} events: combined non-channel R2 {nc:.4} (>= 0.90), channel R2 {ch:.4} (>= 0.80), run {:.1} s (limit 1800 s)",
            grid.n_cells(),
            grid.n_channel,
            corpus.events.len(),
            run.elapsed.as_secs_f64()
        ),
    );
    let gain = r2(&e2.channel) - r2(&e1.channel);
    let nc1 = r2(&e1.non_channel);
    let nc2 = r2(&e2.non_channel);
    let c5 = outcome(
        gain >= 0.03 && nc1 >= nc2 - 0.01,
        format!(
            "channel R2 exp1 {:.4} -> exp2 {:.4} (gain {gain:.4}, need >= 0.03); non-channel exp1 {nc1:.4} vs exp2 {nc2:.4} (need exp1 >= exp2 - 0.01)",
            r2(&e1.channel),
            r2(&e2.channel)
        ),
    );
    (c4, c5)
}

fn criterion_7(a: &DeskRun, b: &DeskRun) -> Outcome {
    let mut compared = 0;
    let mut differing = Vec::new();
    for (ra, rb) in [
        (&a.cfg.corpus_dir, &b.cfg.corpus_dir),
        (&a.cfg.store_dir, &b.cfg.store_dir),
        (&a.cfg.output_dir, &b.cfg.output_dir),
    ] {
        let fa = list_files(ra);
        let fb = list_files(rb);
        if fa != fb {
            differing.push(format!("file sets differ under {}", ra.display()));
            continue;
        }
        for f in fa {
            compared += 1;
            if std::fs::read(ra.join(&f)).unwrap() != std::fs::read(rb.join(&f)).unwrap() {
                differing.push(f.display().to_string());
            }
        }
    }
    let model_files = list_files(&a.cfg.store_dir)
        .iter()
        .filter(|p| p.to_string_lossy().ends_with(".model.json"))
        .count();
    let mut detail = format!(
        "1 vs 8 workers: {compared} files compared ({model_files} model files), {} differ",
        differing.len()
    );
    if let Some(d) = differing.first() {
        detail.push_str(&format!("; first: {d}"));
    }
    outcome(differing.is_empty() && model_files == 800, detail)
}

// ---------------------------------------------------------------- 6

/// Upstream block (watershed 0) whose channel drains into a small target channel cell
/// (watershed 2) sitting far away beside an unrelated block (watershed 1).
fn cell10_grid() -> (Grid, usize) {
    let spacing = 1200.0;
    let mut cells = Vec::new();
    let mut push = |centroid: (f64, f64), area: f64, kind: CellKind, ws: usize, down: Option<usize>| {
        let id = cells.len();
        cells.push(Cell {
            id: CellId(id),
            centroid,
            area,
            kind,
            watershed: WatershedId(ws),
            downstream: down.map(CellId),
        });
        id
    };
    let target = push((58_800.0, 6_000.0), 1.0, CellKind::Channel, 2, None);
    for (ws, x0) in [(0usize, 0.0), (1, 60_000.0)] {
        for y in 0..10 {
            for x in 0..10 {
                let is_channel = x == 5;
                // Column 5 flows toward y = 0; watershed 0's outlet feeds the target.
                let down = if !is_channel {
                    None
                } else if y > 0 {
                    Some(1 + (ws * 100) + (y - 1) * 10 + 5)
                } else if ws == 0 {
                    Some(target)
                } else {
                    None
                };
                push(
                    (x0 + (x as f64 + 0.5) * spacing, (y as f64 + 0.5) * spacing),
                    spacing * spacing,
                    if is_channel { CellKind::Channel } else { CellKind::NonChannel },
                    ws,
                    down,
                );
            }
        }
    }
    let grid = Grid::new(cells, vec!["upstream".into(), "neighbour".into(), "target".into()]).unwrap();
    assert!(flood_surrogate::grid::validate_grid(&grid).is_empty());
    (grid, target)
}

fn criterion_6() -> Outcome {
    let (grid, target) = cell10_grid();
    let storm = StormConfig {
        n_events: 200,
        radius: Range::new(3_000.0, 20_000.0),
        seed: 606,
        ..StormConfig::default()
    };
    let corpus = generate_corpus(&grid, &storm, &OracleParams::default()).unwrap();
    // Sanity: the target's depth is insensitive to its own rainfall.
    let drainage_area: f64 = 100.0 * 1200.0 * 1200.0;
    let local_share = grid.cells[target].area / (grid.cells[target].area + drainage_area);

    let features = corpus_features(&corpus).unwrap();
    let split = split_events(corpus.events.len(), &SplitSpec::default()).unwrap();
    let data = TrainingData {
        grid: &grid,
        events: &features,
        depth: corpus.events.iter().map(|e| e.depth.as_slice()).collect(),
        split: &split,
        corpus_hash: &corpus.manifest.corpus_hash,
    };
    let model = train_cell(&data, target, Experiment::Exp2, &Hyperparams::default()).unwrap();
    let imp = model.model.feature_importance();
    let get = |name: &str| imp.names.iter().position(|n| n == name).map_or(0.0, |i| imp.fractions[i]);
    let upstream = get("heavy_cum_ratio_0") + get("heavy_peak_ratio_0");
    let local = get("cumulative") + get("peak");
    outcome(
        upstream > local && !imp.degenerate,
        format!(
            "target cell {target} (local area share {local_share:.1e}): upstream ratio importance {upstream:.3} vs local cumulative+peak {local:.3}"
        ),
    )
}

// ---------------------------------------------------------------- 8

fn criterion_8() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let mut checks: Vec<(&str, bool)> = Vec::new();
    checks.push(("r2 perfect", r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() == 1.0));
    checks.push(("r2 mean", r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap() == 0.0));
    checks.push((
        "r2 0.98",
        close(r_squared(&[1.0, 2.0, 3.0, 4.0], &[1.1, 1.9, 3.2, 3.8]).unwrap(), 0.98),
    ));
    checks.push(("rmse zero", rmse(&[4.0, 5.0], &[4.0, 5.0]).unwrap() == 0.0));
    checks.push(("rmse [3,-4]", close(rmse(&[3.0, -4.0], &[0.0, 0.0]).unwrap(), 12.5f64.sqrt())));
    checks.push(("rmse single", rmse(&[2.0], &[-1.25]).unwrap() == 3.25));
    checks.push(("mape 10%", close(mape(&[10.0, 20.0], &[11.0, 18.0]).unwrap().value.unwrap(), 10.0)));
    checks.push(("mape exact", mape(&[2.0, 7.0], &[2.0, 7.0]).unwrap().value == Some(0.0)));
    let m = mape(&[0.0, 10.0], &[1.0, 10.0]).unwrap();
    checks.push(("mape exclusion", m.value == Some(0.0) && m.n_excluded == 1));

    let b = binned_report(&[(10.0, 10.0), (20.0, 20.0), (30.0, 30.0)], &[15.0, 25.0]).unwrap();
    checks.push(("bins 1/1/1", b.iter().map(|b| b.n).collect::<Vec<_>>() == [1, 1, 1]));
    let b = binned_report(&[(15.0, 15.0)], &[15.0, 25.0]).unwrap();
    checks.push(("15 ft in >= 15 bin", b[0].n == 0 && b[1].n == 1));
    let pts = [(5.0, 6.0), (10.0, 8.0), (16.0, 15.0), (24.0, 27.0), (30.0, 26.0), (40.0, 40.0)];
    let b = binned_report(&pts, &[15.0, 25.0]).unwrap();
    checks.push((
        "six-point bins",
        close(b[0].rmse.unwrap(), (5.0f64 / 2.0).sqrt())
            && close(b[1].rmse.unwrap(), (10.0f64 / 2.0).sqrt())
            && close(b[2].rmse.unwrap(), (16.0f64 / 2.0).sqrt())
            && close(b[0].mape.unwrap(), 20.0)
            && close(b[1].mape.unwrap(), 100.0 * (1.0 / 16.0 + 3.0 / 24.0) / 2.0)
            && close(b[2].mape.unwrap(), 100.0 * (4.0 / 30.0) / 2.0),
    ));
    let cm = |id: usize, kind: CellKind, r2: f64| CellMetrics {
        cell_id: id,
        kind,
        r2: Some(r2),
        rmse: 1.0,
        n: 3,
    };
    let agg = kind_aggregate(&[
        cm(0, CellKind::Channel, 0.8),
        cm(1, CellKind::NonChannel, 1.0),
        cm(2, CellKind::NonChannel, 1.0),
        cm(3, CellKind::NonChannel, 1.0),
    ]);
    checks.push((
        "kind aggregate",
        close(agg.channel.unwrap().r2.unwrap(), 0.8)
            && close(agg.non_channel.unwrap().r2.unwrap(), 1.0)
            && close(agg.overall.unwrap().r2.unwrap(), 0.95),
    ));
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        format!("{} hand checks, failed: {failed:?}", checks.len()),
    )
}

// ---------------------------------------------------------------- 9

fn criterion_9() -> Outcome {
    let a = split_events(592, &SplitSpec::default()).unwrap();
    let b = split_events(10, &SplitSpec::default()).unwrap();
    let ca = (a.train.len(), a.valid.len(), a.test.len());
    let cb = (b.train.len(), b.valid.len(), b.test.len());
    outcome(
        ca == (356, 118, 118) && cb == (6, 2, 2),
        format!("592 -> {ca:?} (want 356/118/118), 10 -> {cb:?} (want 6/2/2)"),
    )
}

// ---------------------------------------------------------------- 10

fn criterion_10(root: &Path) -> Outcome {
    let mut cfg = RunConfig::desk(root);
    cfg.grid = GridSource::Synthetic(SyntheticGridSpec {
        nx: 40,
        ny: 25,
        ..SyntheticGridSpec::default()
    });
    cmd_generate(&cfg, false).unwrap();
    let corpus = read_corpus(&cfg.corpus_dir).unwrap();
    for e in Experiment::ALL {
        let s = train_all(
            &corpus,
            e,
            cfg.hyperparams.get(e),
            &cfg.split,
            &cfg.store_dir,
            &TrainOptions::default(),
        )
        .unwrap();
        assert_eq!(s.failed(), 0);
    }
    let grid = cfg.grid.load().unwrap();
    let split = split_events(corpus.events.len(), &cfg.split).unwrap();
    let field = &corpus.events[split.test[0]].field;

    let start = Instant::now();
    let predictor = build_combined(&cfg.store_dir, &cfg.store_dir, &grid).unwrap();
    let map = predict_event(&predictor, &grid, field).unwrap();
    let total = start.elapsed();
    let predict = map.elapsed;
    outcome(
        grid.n_cells() == 1000 && predict < Duration::from_secs(1) && total < Duration::from_secs(10),
        format!(
            "{} cells: prediction {:.3} s (limit 1 s), with model load {:.3} s (limit 10 s)",
            grid.n_cells(),
            predict.as_secs_f64(),
            total.as_secs_f64()
        ),
    )
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        println!("criterion {n:>2} [{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };

    report(1, "heavy-ratio oracle equivalence", criterion_1());
    report(2, "depth-1 split oracle", criterion_2());
    report(3, "training RMSE monotone", criterion_3());
    let run1 = desk_run(&tmp.path().join("desk_w1"), 1);
    let run8 = desk_run(&tmp.path().join("desk_w8"), 8);
    let (c4, c5) = criteria_4_5(&run1);
    report(4, "desk pipeline recovery", c4);
    report(5, "Exp2 channel gain without non-channel loss", c5);
    report(6, "upstream ratios outrank local rainfall", criterion_6());
    report(7, "determinism across worker counts", criterion_7(&run1, &run8));
    report(8, "metric hand checks", criterion_8());
    report(9, "split counts", criterion_9());
    report(10, "1000-cell prediction time", criterion_10(&tmp.path().join("grid1000")));

    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
