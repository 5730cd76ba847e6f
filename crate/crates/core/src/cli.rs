//! Command-line front end: `generate`, `train`, `predict`, `evaluate`, `importance`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::config::RunConfig;
use crate::features::Experiment;
use crate::grid::Grid;
use crate::metrics::{write_diff_csv, EvaluationReport, KindAggregate};
use crate::oracle::{generate_corpus, read_corpus, write_corpus};
use crate::pipeline::{
    build_combined, combined_source, corpus_features, evaluate_predictor, evaluate_store, predict_event,
    split_events, train_all, CombinedPredictor, TrainOptions,
};
use crate::rainfall::{build_field, read_gages_csv, thiessen_assign, RainfallField};

#[derive(Debug, Parser)]
#[command(name = "flood-surrogate", version, about = "Per-cell boosted-tree surrogate for peak flood depth")]
pub struct Cli {
    /// Run configuration (JSON). Without it the desk preset is used under ./run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; overrides the config.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Overwrite an existing corpus, or retrain cells that already have models.
    #[arg(long, global = true)]
    pub force: bool,
    /// Replaces every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Exp1,
    Exp2,
}

impl From<ExperimentArg> for Experiment {
    fn from(e: ExperimentArg) -> Self {
        match e {
            ExperimentArg::Exp1 => Experiment::Exp1,
            ExperimentArg::Exp2 => Experiment::Exp2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainTarget {
    Exp1,
    Exp2,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic event corpus.
    Generate,
    /// Train one model per cell.
    Train {
        #[arg(value_enum)]
        experiment: TrainTarget,
    },
    /// Predict a peak-depth map for one rainfall event.
    Predict {
        /// Per-cell hourly field (`cell_id,hour,intensity_in_per_hr`).
        #[arg(long, required_unless_present = "gages", conflicts_with = "gages")]
        rainfall: Option<PathBuf>,
        /// Gage records (`gage_id,x,y,t_minutes,depth_in`), assigned to cells by nearest gage.
        #[arg(long)]
        gages: Option<PathBuf>,
        /// Exp2 models on channel cells, Exp1 models elsewhere.
        #[arg(long, conflicts_with = "experiment")]
        combined: bool,
        #[arg(long, value_enum, required_unless_present = "combined")]
        experiment: Option<ExperimentArg>,
        /// Defaults to `<output_dir>/prediction.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate stored models on the held-out test events.
    Evaluate {
        /// Depth bin edges in feet, e.g. `15,25`.
        #[arg(long, value_delimiter = ',')]
        bins: Option<Vec<f64>>,
    },
    /// List the features carrying at least `threshold` of each model's split gain.
    Importance {
        #[arg(long, default_value_t = 0.10)]
        threshold: f64,
        /// Cell ids; all cells when omitted.
        #[arg(long, value_delimiter = ',')]
        cells: Option<Vec<usize>>,
        /// Defaults to the combined choice per cell kind.
        #[arg(long, value_enum)]
        experiment: Option<ExperimentArg>,
        /// Defaults to `<output_dir>/importance.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Loads the config named on the command line (or the desk preset) and applies overrides.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::desk(Path::new("run")),
    };
    if let Some(w) = cli.workers {
        if w == 0 {
            bail!("--workers must be >= 1");
        }
        cfg.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    match &cli.command {
        Command::Generate => cmd_generate(&cfg, cli.force),
        Command::Train { experiment } => {
            let exps: &[Experiment] = match experiment {
                TrainTarget::Exp1 => &[Experiment::Exp1],
                TrainTarget::Exp2 => &[Experiment::Exp2],
                TrainTarget::All => &Experiment::ALL,
            };
            for &e in exps {
                cmd_train(&cfg, e, cli.force)?;
            }
            Ok(())
        }
        Command::Predict {
            rainfall,
            gages,
            combined,
            experiment,
            out,
        } => {
            let input = match (rainfall, gages) {
                (Some(p), _) => RainfallInput::Field(p),
                (None, Some(p)) => RainfallInput::Gages(p),
                (None, None) => bail!("one of --rainfall or --gages is required"),
            };
            let experiment = if *combined { None } else { experiment.map(Experiment::from) };
            let out = out.clone().unwrap_or_else(|| cfg.output_dir.join("prediction.csv"));
            cmd_predict(&cfg, input, experiment, &out)
        }
        Command::Evaluate { bins } => {
            let bins = bins.clone().unwrap_or_else(|| cfg.bins.clone());
            cmd_evaluate(&cfg, &bins)
        }
        Command::Importance {
            threshold,
            cells,
            experiment,
            out,
        } => {
            let out = out.clone().unwrap_or_else(|| cfg.output_dir.join("importance.csv"));
            cmd_importance(&cfg, *threshold, cells.as_deref(), experiment.map(Experiment::from), &out)
        }
    }
}

pub fn cmd_generate(cfg: &RunConfig, force: bool) -> Result<()> {
    let grid = cfg.grid.load().context("loading grid")?;
    let start = Instant::now();
    let corpus = generate_corpus(&grid, &cfg.storm, &cfg.oracle)?;
    let n_null = corpus.manifest.n_null_events;
    if n_null == corpus.events.len() {
        warn!("every event in the corpus has zero rainfall");
    }
    write_corpus(&cfg.corpus_dir, &corpus, force)?;
    let written = crate::oracle::corpus::read_manifest(&cfg.corpus_dir)?;
    println!(
        "generated {} events ({} null) over {} cells in {:.2?}",
        corpus.events.len(),
        n_null,
        grid.n_cells(),
        start.elapsed()
    );
    println!("corpus {}", cfg.corpus_dir.display());
    println!("corpus_hash {}", written.corpus_hash);
    Ok(())
}

fn print_aggregate(title: &str, a: &KindAggregate) {
    println!("{title}");
    println!("  {:<12} {:>6} {:>8} {:>9}", "kind", "cells", "R2", "RMSE_ft");
    for (name, g) in [("channel", &a.channel), ("non-channel", &a.non_channel), ("overall", &a.overall)] {
        match g {
            Some(g) => {
                let r2 = g.r2.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!("  {:<12} {:>6} {:>8} {:>9.3}", name, g.n_cells, r2, g.rmse);
                if g.n_r2_undefined > 0 {
                    println!("  {:<12} {} cells with undefined R2 excluded", "", g.n_r2_undefined);
                }
            }
            None => println!("  {name:<12} absent"),
        }
    }
}

pub fn cmd_train(cfg: &RunConfig, experiment: Experiment, force: bool) -> Result<()> {
    let corpus = read_corpus(&cfg.corpus_dir).with_context(|| format!("reading corpus {}", cfg.corpus_dir.display()))?;
    let hp = cfg.hyperparams.get(experiment);
    let start = Instant::now();
    let summary = train_all(
        &corpus,
        experiment,
        hp,
        &cfg.split,
        &cfg.store_dir,
        &TrainOptions {
            workers: cfg.workers,
            force,
        },
    )?;
    println!(
        "{experiment}: trained {}, reused {}, failed {} in {:.2?}",
        summary.trained - summary.failed(),
        summary.skipped,
        summary.failed(),
        start.elapsed()
    );
    for c in summary.record.failed() {
        warn!("cell {} failed: {}", c.cell_id, c.error.as_deref().unwrap_or(""));
    }
    if summary.failed() > 0 {
        return Ok(());
    }
    let split = split_events(corpus.events.len(), &cfg.split)?;
    let predictor = CombinedPredictor::single(&corpus.grid, &cfg.store_dir, experiment)?;
    let features = corpus_features(&corpus)?;
    let report = evaluate_predictor(experiment.as_str(), &predictor, &corpus, &features, &split.test, &cfg.bins)?;
    print_aggregate(
        &format!("{experiment} test metrics ({} events)", split.test.len()),
        &report.aggregate,
    );
    Ok(())
}

pub enum RainfallInput<'a> {
    Field(&'a Path),
    Gages(&'a Path),
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn read_rainfall(grid: &Grid, input: RainfallInput<'_>) -> Result<RainfallField> {
    Ok(match input {
        RainfallInput::Field(p) => RainfallField::read_csv(open(p)?).with_context(|| format!("reading {}", p.display()))?,
        RainfallInput::Gages(p) => {
            let gages = read_gages_csv(open(p)?).with_context(|| format!("reading {}", p.display()))?;
            build_field(grid, &gages, &thiessen_assign(grid, &gages)?)?
        }
    })
}

/// `experiment = None` selects the combined predictor.
pub fn cmd_predict(cfg: &RunConfig, input: RainfallInput<'_>, experiment: Option<Experiment>, out: &Path) -> Result<()> {
    let grid = cfg.grid.load().context("loading grid")?;
    let field = read_rainfall(&grid, input)?;
    let load_start = Instant::now();
    let predictor = match experiment {
        None => build_combined(&cfg.store_dir, &cfg.store_dir, &grid)?,
        Some(e) => CombinedPredictor::single(&grid, &cfg.store_dir, e)?,
    };
    let load = load_start.elapsed();
    let map = predict_event(&predictor, &grid, &field)?;
    let mut w = create(out)?;
    map.write_csv(&mut w)?;
    w.flush()?;
    println!("wrote {} cells to {}", map.depth.len(), out.display());
    println!(
        "prediction time {:.3} s (model load {:.3} s)",
        map.elapsed.as_secs_f64(),
        load.as_secs_f64()
    );
    Ok(())
}

fn write_report_files(dir: &Path, report: &EvaluationReport) -> Result<()> {
    let mut w = create(&dir.join(format!("{}_cells.csv", report.label)))?;
    report.write_cells_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join(format!("{}_bins.csv", report.label)))?;
    report.write_bins_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn print_bins(report: &EvaluationReport) {
    println!("  {:<14} {:>7} {:>9} {:>9}", "true depth ft", "n", "RMSE_ft", "MAPE_%");
    for b in &report.bins {
        let range = match (b.lower, b.upper) {
            (None, Some(u)) => format!("< {u}"),
            (Some(l), Some(u)) => format!("{l} to < {u}"),
            (Some(l), None) => format!(">= {l}"),
            (None, None) => "all".to_string(),
        };
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        println!("  {:<14} {:>7} {:>9} {:>9}", range, b.n, f(b.rmse), f(b.mape));
    }
}

pub fn cmd_evaluate(cfg: &RunConfig, bins: &[f64]) -> Result<()> {
    let corpus = read_corpus(&cfg.corpus_dir).with_context(|| format!("reading corpus {}", cfg.corpus_dir.display()))?;
    let ev = evaluate_store(&corpus, &cfg.store_dir, bins)?;
    let reports: Vec<&EvaluationReport> = [&ev.exp1, &ev.exp2, &ev.combined].into_iter().flatten().collect();
    if reports.is_empty() {
        bail!("store {} holds no complete experiment", cfg.store_dir.display());
    }
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    for r in &reports {
        write_report_files(&cfg.output_dir, r)?;
        print_aggregate(&format!("{} test metrics", r.label), &r.aggregate);
        print_bins(r);
    }
    if let Some(diff) = &ev.diff {
        let mut w = create(&cfg.output_dir.join("exp1_exp2_diff.csv"))?;
        write_diff_csv(diff, &mut w)?;
        w.flush()?;
    }
    let json = serde_json::json!({
        "exp1": ev.exp1,
        "exp2": ev.exp2,
        "combined": ev.combined,
        "diff": ev.diff,
    });
    let mut w = create(&cfg.output_dir.join("evaluation.json"))?;
    serde_json::to_writer_pretty(&mut w, &json)?;
    w.write_all(b"\n")?;
    w.flush()?;
    println!("reports written to {}", cfg.output_dir.display());
    Ok(())
}

pub fn cmd_importance(
    cfg: &RunConfig,
    threshold: f64,
    cells: Option<&[usize]>,
    experiment: Option<Experiment>,
    out: &Path,
) -> Result<()> {
    let grid = cfg.grid.load().context("loading grid")?;
    let selected: Vec<usize> = match cells {
        Some(c) => {
            if let Some(bad) = c.iter().find(|&&id| id >= grid.n_cells()) {
                bail!("unknown cell id {bad} (grid has {} cells)", grid.n_cells());
            }
            c.to_vec()
        }
        None => (0..grid.n_cells()).collect(),
    };
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["cell_id", "experiment", "rank", "feature", "fraction"])?;
    for &cell in &selected {
        let exp = experiment.unwrap_or_else(|| combined_source(grid.cells[cell].kind));
        let model = crate::pipeline::store::read_cell_model(&cfg.store_dir, exp, cell)?;
        let imp = model.model.feature_importance();
        if imp.degenerate {
            warn!("cell {cell} {exp}: model has no splits; importance is uniform");
        }
        for (rank, (name, frac)) in imp.above(threshold).into_iter().enumerate() {
            w.write_record([cell.to_string(), exp.to_string(), (rank + 1).to_string(), name.to_string(), frac.to_string()])?;
        }
    }
    w.flush()?;
    info!("importance for {} cells", selected.len());
    println!("wrote {}", out.display());
    Ok(())
}
