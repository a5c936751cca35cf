use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gksvm_core::data::{dataset_stats, parse_tu_dataset};
use gksvm_core::harness::{accuracy, run_cv, HyperGrid};
use gksvm_core::kernel::mean_map_grid;
use gksvm_core::trainer::{train_observed, Checkpoint, Classifier, DatasetRef, EpochRecord, TrainConfig};
use gksvm_core::{DatasetStats, EmbeddingSet};
use log::info;

/// Graph classification with an end-to-end trained multi-scale set-kernel SVM.
#[derive(Parser)]
#[command(name = "gksvm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print dataset statistics as CSV.
    Info {
        /// Directory holding the TU-format files.
        dir: PathBuf,
        /// Dataset name(s), e.g. MUTAG.
        #[arg(required = true)]
        names: Vec<String>,
    },
    /// Train on a whole dataset and write a checkpoint.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation with grid search.
    Cv(CvArgs),
    /// Evaluate one graph's mean map on a 2-D grid.
    Meanmap(MeanmapArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 25)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    dir: PathBuf,
    name: String,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    /// Number of kernel scales.
    #[arg(long, default_value_t = 2)]
    s: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write the training curve (epoch,objective,train_accuracy) here.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    dir: PathBuf,
    name: String,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Single configuration (lambda 0.5, s 2) instead of the full grid.
    #[arg(long)]
    fast: bool,
    #[command(flatten)]
    model: ModelArgs,
    /// Report CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeanmapArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset index of the graph to map.
    #[arg(long)]
    graph_index: usize,
    #[arg(long)]
    sigma: f64,
    #[arg(long, allow_hyphen_values = true)]
    grid_min: f64,
    #[arg(long, allow_hyphen_values = true)]
    grid_max: f64,
    /// Grid points per axis.
    #[arg(long)]
    grid_steps: usize,
    #[arg(long)]
    out: PathBuf,
    /// Dataset directory; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Dataset name; defaults to the one recorded in the checkpoint.
    #[arg(long)]
    name: Option<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Info { dir, names } => info_cmd(&dir, &names),
        Command::Train(args) => train_cmd(args),
        Command::Cv(args) => cv_cmd(args),
        Command::Meanmap(args) => meanmap_cmd(args),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn info_cmd(dir: &Path, names: &[String]) -> Result<()> {
    let rows = names
        .iter()
        .map(|name| {
            let bundle = parse_tu_dataset(dir, name).with_context(|| format!("loading {name}"))?;
            Ok(dataset_stats(&bundle)?.csv_row())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = io::stdout().lock();
    writeln!(out, "{}", DatasetStats::CSV_HEADER)?;
    for row in rows {
        writeln!(out, "{row}")?;
    }
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let bundle = parse_tu_dataset(&args.dir, &args.name).with_context(|| format!("loading {}", args.name))?;
    let config = TrainConfig {
        epochs: args.model.epochs,
        learning_rate: args.model.lr,
        lambda: args.lambda,
        scale_count: args.s,
        hidden_dim: args.model.hidden_dim,
        seed: args.model.seed,
    };
    let mut curve = Vec::with_capacity(config.epochs);
    let params = train_observed(&config, &bundle.graphs, &bundle.class_labels, bundle.alphabet_size, |rec, _| {
        if rec.epoch % 25 == 0 || rec.epoch == 1 {
            info!("epoch {}: objective {:.4}, train accuracy {:.4}", rec.epoch, rec.objective, rec.train_accuracy);
        }
        curve.push(*rec);
    })?;

    let model = Classifier::from_params(params, &bundle.graphs, bundle.alphabet_size)?;
    let train_acc = accuracy(&model.predict(&bundle.graphs)?, &bundle.class_labels)?;
    println!("training accuracy {train_acc}");

    if let Some(path) = &args.curve {
        let mut w = output(Some(path))?;
        writeln!(w, "{}", EpochRecord::CSV_HEADER)?;
        for rec in &curve {
            writeln!(w, "{}", rec.csv_row())?;
        }
    }

    let directory = args.dir.canonicalize().unwrap_or(args.dir.clone());
    let dataset = DatasetRef {
        directory: directory.to_string_lossy().into_owned(),
        name: args.name.clone(),
        train_indices: (0..bundle.len()).collect(),
    };
    Checkpoint::new(config, bundle.alphabet_size, model.params, Some(dataset)).save(&args.checkpoint)?;
    info!("wrote {}", args.checkpoint.display());
    Ok(())
}

fn cv_cmd(args: CvArgs) -> Result<()> {
    let bundle = parse_tu_dataset(&args.dir, &args.name).with_context(|| format!("loading {}", args.name))?;
    let grid = if args.fast { HyperGrid::fast() } else { HyperGrid::default() };
    let config = TrainConfig {
        epochs: args.model.epochs,
        learning_rate: args.model.lr,
        hidden_dim: args.model.hidden_dim,
        seed: args.model.seed,
        ..TrainConfig::default()
    };
    let report = run_cv(&bundle, args.k, &grid, &config, args.model.seed)?;
    let mut w = output(args.out.as_deref())?;
    w.write_all(report.to_csv().as_bytes())?;
    w.flush()?;
    eprintln!(
        "{}: mean accuracy {:.4} ± {:.4} over {} folds",
        args.name,
        report.mean_accuracy,
        report.std_accuracy,
        report.per_fold.len()
    );
    Ok(())
}

/// Evenly spaced points from `min` to `max` inclusive.
fn axis(min: f64, max: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![min];
    }
    (0..steps).map(|i| min + (max - min) * i as f64 / (steps - 1) as f64).collect()
}

fn meanmap_cmd(args: MeanmapArgs) -> Result<()> {
    if args.grid_steps == 0 {
        bail!("--grid-steps must be at least 1");
    }
    if !(args.grid_max >= args.grid_min) {
        bail!("--grid-max must not be below --grid-min");
    }
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let recorded = ckpt.dataset.as_ref();
    let dir = match (&args.data_dir, recorded) {
        (Some(d), _) => d.clone(),
        (None, Some(r)) => PathBuf::from(&r.directory),
        (None, None) => bail!("checkpoint records no dataset; pass --data-dir and --name"),
    };
    let name = match (&args.name, recorded) {
        (Some(n), _) => n.clone(),
        (None, Some(r)) => r.name.clone(),
        (None, None) => bail!("checkpoint records no dataset; pass --data-dir and --name"),
    };
    let bundle = parse_tu_dataset(&dir, &name).with_context(|| format!("loading {name}"))?;
    let Some(graph) = bundle.graphs.get(args.graph_index) else {
        bail!("graph index {} out of range ({} graphs)", args.graph_index, bundle.len());
    };
    let set = gksvm_core::conv::stack_forward(graph, &ckpt.params.stack, ckpt.alphabet_size)?;
    if set.dim() < 2 {
        bail!("embedding dimension {} too small for a 2-D grid", set.dim());
    }
    // the grid spans the first two embedding coordinates
    let planar: Vec<Vec<f64>> = set.rows().map(|r| vec![r[0], r[1]]).collect();
    let planar = EmbeddingSet::from_rows(&planar)?;

    let ticks = axis(args.grid_min, args.grid_max, args.grid_steps);
    let grid: Vec<Vec<f64>> = ticks.iter().flat_map(|&x| ticks.iter().map(move |&y| vec![x, y])).collect();
    let values = mean_map_grid(&planar, args.sigma, &grid)?;

    let mut w = output(Some(&args.out))?;
    writeln!(w, "x,y,value")?;
    for (p, v) in grid.iter().zip(values) {
        writeln!(w, "{},{},{}", p[0], p[1], v)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_endpoints() {
        assert_eq!(axis(-1.0, 1.0, 3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(axis(2.0, 5.0, 1), vec![2.0]);
    }
}
