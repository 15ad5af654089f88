//! `opr` — run online partially rewarded learning experiments.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use opr::data::{l1_row_normalize, load_citation_graph, load_csv, CsvOptions, Dataset, LabelColumn};
use opr::harness::{
    emit_results, parse_key_values, run_experiment, synthetic_blobs, Algorithm, ExperimentConfig,
    ImputerKind,
};
use opr::{OprError, Result};

#[derive(Parser)]
#[command(name = "opr", version, about = "Online partially rewarded learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write curve.csv and summary.json.
    Run(RunArgs),
}

/// Input dataset format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DataFormat {
    /// Delimited rows with a label column.
    Csv,
    /// Citation graph: a `.content` file plus its `.cites` edge list.
    Cora,
    /// Generated Gaussian blobs; the dataset argument is `KxNxD[xNOISE[xSEP]]`.
    Synth,
}

impl FromStr for DataFormat {
    type Err = OprError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "cora" => Ok(Self::Cora),
            "synth" => Ok(Self::Synth),
            other => Err(OprError::Config(format!(
                "unknown format '{other}' (expected csv|cora|synth)"
            ))),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Key = value config file; every key matches a flag name, and flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset path, or a blob spec like 3x200x10 when --format synth.
    #[arg(long)]
    dataset: Option<String>,
    /// Input format: csv, cora, or synth [default: csv].
    #[arg(long)]
    format: Option<DataFormat>,
    /// Policy: linucb, rogcn, bilinucb, or gcnucb [default: linucb].
    #[arg(long)]
    algorithm: Option<Algorithm>,
    /// Missing-reward estimator for bilinucb: none, kmeans, gcn, random, or
    /// oracle [default: none].
    #[arg(long)]
    imputer: Option<ImputerKind>,
    /// Clip imputed rewards into mu +/- sigma of the predicted arm
    /// [default: true].
    #[arg(long)]
    bounded: Option<bool>,
    /// Fraction of online observations with withheld feedback [default: 0.25].
    #[arg(long)]
    missing: Option<f64>,
    /// Exploration weight of the UCB scorers [default: 0.25].
    #[arg(long)]
    alpha: Option<f64>,
    /// Online steps during which bandit policies mirror the baseline
    /// [default: 300].
    #[arg(long)]
    warmup: Option<usize>,
    /// Neighbors per node in the similarity graph [default: 5].
    #[arg(long)]
    knn: Option<usize>,
    /// GCN hidden width [default: 16].
    #[arg(long)]
    hidden: Option<usize>,
    /// GCN learning rate [default: 0.01].
    #[arg(long)]
    lr: Option<f64>,
    /// GCN weight decay on the first layer [default: 0.0005].
    #[arg(long = "weight-decay")]
    weight_decay: Option<f64>,
    /// GCN dropout probability [default: 0.5].
    #[arg(long)]
    dropout: Option<f64>,
    /// GCN optimizer steps per observation [default: 5].
    #[arg(long = "train-steps")]
    train_steps: Option<usize>,
    /// Independent replicas to average over [default: 10].
    #[arg(long)]
    resamples: Option<usize>,
    /// Master seed; replica seeds derive from it [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for curve.csv and summary.json [default: out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV label column, by header name or 0-based index [default: 0].
    #[arg(long = "label-column")]
    label_column: Option<String>,
    /// Whether the CSV file has a header row [default: false].
    #[arg(long = "has-header")]
    has_header: Option<bool>,
    /// Comma-separated CSV columns to drop, by name or 0-based index.
    #[arg(long = "drop-columns", value_delimiter = ',')]
    drop_columns: Option<Vec<String>>,
    /// Scale every feature row to unit l1 norm before streaming
    /// [default: true].
    #[arg(long)]
    normalize: Option<bool>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run_command(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::FAILURE
            }
        },
    }
}

/// Flag value if given, else the config-file entry, else the default.
fn resolve<T>(flag: Option<T>, file: &HashMap<String, String>, key: &str, default: T) -> Result<T>
where
    T: FromStr,
    T::Err: fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(raw) => raw
            .parse()
            .map_err(|e| OprError::Config(format!("config key '{key}': {e}"))),
        None => Ok(default),
    }
}

fn run_command(args: RunArgs) -> Result<()> {
    let file: HashMap<String, String> = match &args.config {
        Some(path) => parse_key_values(&std::fs::read_to_string(path)?)?
            .into_iter()
            .collect(),
        None => HashMap::new(),
    };

    let config = ExperimentConfig {
        algorithm: resolve(args.algorithm, &file, "algorithm", Algorithm::LinUcb)?,
        imputer: resolve(args.imputer, &file, "imputer", ImputerKind::None)?,
        bounded: resolve(args.bounded, &file, "bounded", true)?,
        missing_fraction: resolve(args.missing, &file, "missing", 0.25)?,
        alpha: resolve(args.alpha, &file, "alpha", 0.25)?,
        warmup: resolve(args.warmup, &file, "warmup", 300)?,
        knn: resolve(args.knn, &file, "knn", 5)?,
        hidden: resolve(args.hidden, &file, "hidden", 16)?,
        learning_rate: resolve(args.lr, &file, "lr", 0.01)?,
        weight_decay: resolve(args.weight_decay, &file, "weight-decay", 5e-4)?,
        dropout: resolve(args.dropout, &file, "dropout", 0.5)?,
        train_steps: resolve(args.train_steps, &file, "train-steps", 5)?,
        resamples: resolve(args.resamples, &file, "resamples", 10)?,
        seed: resolve(args.seed, &file, "seed", 0)?,
    };
    config.validate()?;

    let format = resolve(args.format, &file, "format", DataFormat::Csv)?;
    let dataset_spec = args
        .dataset
        .or_else(|| file.get("dataset").cloned())
        .ok_or_else(|| OprError::Config("--dataset is required".into()))?;
    let csv_opts = CsvOptions {
        has_header: resolve(args.has_header, &file, "has-header", false)?,
        label_column: parse_label_column(&resolve(
            args.label_column,
            &file,
            "label-column",
            "0".to_string(),
        )?),
        drop_columns: match args.drop_columns {
            Some(cols) => cols,
            None => file
                .get("drop-columns")
                .map(|s| s.split(',').map(|c| c.trim().to_string()).collect())
                .unwrap_or_default(),
        },
    };
    let normalize = resolve(args.normalize, &file, "normalize", true)?;
    let out = resolve(args.out, &file, "out", PathBuf::from("out"))?;

    let dataset = load_dataset(format, &dataset_spec, &csv_opts, normalize, config.seed)?;
    let result = run_experiment(&dataset, &config)?;
    emit_results(&result, &out)?;

    let s = &result.summary;
    println!(
        "{} ({}{}) on {} at {:.0}% missing: final accuracy {:.4} ± {:.4} over {} resamples ({} online steps, {:.1}s)",
        s.algorithm,
        s.imputer,
        if s.algorithm == Algorithm::BiLinUcb && !s.bounded {
            ", unbounded"
        } else {
            ""
        },
        s.dataset,
        s.missing_fraction * 100.0,
        s.mean_final_accuracy,
        s.std_final_accuracy,
        s.resamples,
        s.online_steps,
        s.wall_seconds,
    );
    println!("wrote {}", out.join("curve.csv").display());
    println!("wrote {}", out.join("summary.json").display());
    Ok(())
}

fn parse_label_column(spec: &str) -> LabelColumn {
    spec.parse::<usize>()
        .map(LabelColumn::Index)
        .unwrap_or_else(|_| LabelColumn::Name(spec.to_string()))
}

fn load_dataset(
    format: DataFormat,
    spec: &str,
    csv_opts: &CsvOptions,
    normalize: bool,
    seed: u64,
) -> Result<Dataset> {
    let mut dataset = match format {
        DataFormat::Csv => load_csv(Path::new(spec), csv_opts)?,
        DataFormat::Cora => load_citation_graph(Path::new(spec))?,
        DataFormat::Synth => blobs_from_spec(spec, seed)?,
    };
    if normalize {
        l1_row_normalize(&mut dataset.features);
    }
    Ok(dataset)
}

/// Parse `KxNxD[xNOISE[xSEP]]`, e.g. `3x200x10` or `3x200x10x0.1x1.0`.
fn blobs_from_spec(spec: &str, seed: u64) -> Result<Dataset> {
    let bad = || {
        OprError::Config(format!(
            "blob spec '{spec}' should look like KxNxD, KxNxDxNOISE, or KxNxDxNOISExSEP"
        ))
    };
    let parts: Vec<&str> = spec.split('x').collect();
    if !(3..=5).contains(&parts.len()) {
        return Err(bad());
    }
    let classes: usize = parts[0].parse().map_err(|_| bad())?;
    let per_class: usize = parts[1].parse().map_err(|_| bad())?;
    let dim: usize = parts[2].parse().map_err(|_| bad())?;
    let noise: f64 = match parts.get(3) {
        Some(p) => p.parse().map_err(|_| bad())?,
        None => 0.1,
    };
    let separation: f64 = match parts.get(4) {
        Some(p) => p.parse().map_err(|_| bad())?,
        None => 1.0,
    };
    synthetic_blobs(classes, per_class, dim, separation, noise, seed)
}
