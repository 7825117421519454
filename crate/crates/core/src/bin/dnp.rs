//! Command-line front end. Every subcommand is a thin wrapper over
//! `dnp_core::pipeline`.
//!
//! Any long flag may also come from a JSON object passed with `--config`,
//! either at the top level or inside a section named after the subcommand
//! (`{"k": 3, "score": {"mode": "cdnp"}}`). Flags on the command line win
//! over the section, which wins over the top level.

use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use dnp_core::knn::{DistanceMetric, KnnConfig};
use dnp_core::pipeline::{
    cmd_build_ref, cmd_eval, cmd_fit_norm, cmd_score, generate_synthetic, run_sweep,
    write_sweep_csv, BuildRefOptions, Mode, PipelineConfig, SweepGrid, SynthSpec,
};
use dnp_core::sampler::{SamplingMethod, SamplingSpec};
use dnp_core::scorer::ParametricKind;
use dnp_core::tensor_store::scan_dataset;
use dnp_core::{Error, Result};

const DEFAULT_K: usize = 3;
const DEFAULT_BUDGET: usize = 100_000;
const THREADS_ENV: &str = "DNP_THREADS";

#[derive(Parser)]
#[command(name = "dnp", version, about = "Dense kNN out-of-distribution scoring")]
struct Cli {
    /// JSON file supplying default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (capped by DNP_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Subsample training features into a reference set.
    BuildRef(BuildRefArgs),
    /// Fit normalization extrema on the training set.
    FitNorm(FitNormArgs),
    /// Write one score map per image.
    Score(ScoreArgs),
    /// Pixel-level AP, FPR95 and AUROC of score maps against anomaly masks.
    Eval(EvalArgs),
    /// Evaluate a grid of sampling and kNN settings.
    Sweep(SweepArgs),
    /// Generate the synthetic Gaussian-cluster dataset.
    Synth(SynthArgs),
}

impl Command {
    fn section(&self) -> &'static str {
        match self {
            Command::BuildRef(_) => "build-ref",
            Command::FitNorm(_) => "fit-norm",
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Synth(_) => "synth",
        }
    }
}

fn one_or_many<'de, D, T>(d: D) -> std::result::Result<Option<Vec<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(Option::<OneOrMany<T>>::deserialize(d)?.map(|v| match v {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(xs) => xs,
    }))
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct BuildRefArgs {
    /// Training dataset root.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<PathBuf>,
    /// Output prefix for the reference files.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// random, gcs or pcgcs.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    method: Option<SamplingMethod>,
    /// Reference budget N.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    /// Metric recorded in the manifest: l2, l1 or cosine.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<DistanceMetric>,
    /// Run greedy selection in a random projection of this dimension.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    projection_dim: Option<usize>,
    /// Cap on pool rows per training image.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_per_image: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct FitNormArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<PathBuf>,
    /// Reference set prefix.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<PathBuf>,
    /// Output stats JSON.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<DistanceMetric>,
    /// msp, entropy, maxlogit or lse.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parametric: Option<ParametricKind>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct ScoreArgs {
    /// Dataset root to score.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    reference: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<PathBuf>,
    /// Output directory for `<id>.npy` score maps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    /// dnp, parametric or cdnp.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    metric: Option<DistanceMetric>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parametric: Option<ParametricKind>,
    /// Comma-separated image ids; all images when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(
        skip_serializing_if = "Option::is_none",
        deserialize_with = "one_or_many"
    )]
    ids: Option<Vec<String>>,
    /// Also write a false-color PNG per image.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    png: bool,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct EvalArgs {
    /// Directory of `<id>.npy` score maps.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<PathBuf>,
    /// Directory of `<id>.npy` anomaly masks, or a dataset root.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    masks: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct SweepArgs {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train: Option<PathBuf>,
    /// Evaluation dataset with anomaly masks.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<PathBuf>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    #[serde(
        skip_serializing_if = "Option::is_none",
        deserialize_with = "one_or_many"
    )]
    method: Option<Vec<SamplingMethod>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(
        skip_serializing_if = "Option::is_none",
        deserialize_with = "one_or_many"
    )]
    n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(
        skip_serializing_if = "Option::is_none",
        deserialize_with = "one_or_many"
    )]
    seed: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(
        skip_serializing_if = "Option::is_none",
        deserialize_with = "one_or_many"
    )]
    k: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(
        skip_serializing_if = "Option::is_none",
        deserialize_with = "one_or_many"
    )]
    metric: Option<Vec<DistanceMetric>>,
    /// dnp or cdnp.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<Mode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    parametric: Option<ParametricKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    projection_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_per_image: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct SynthArgs {
    /// Output directory; `train/` and `test/` are created inside.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    train_images: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    test_images: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    grid: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    channels: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    sigma: Option<f32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    inlier_separation: Option<f32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ood_distance: Option<f32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ood_cells: Option<usize>,
}

fn normalize_keys(map: &Map<String, Value>) -> Map<String, Value> {
    map.iter()
        .map(|(k, v)| (k.replace('-', "_"), v.clone()))
        .collect()
}

/// Layers command-line values over the config file.
fn merge<T: Serialize + DeserializeOwned>(
    cli: &T,
    config: Option<&Map<String, Value>>,
    section: &str,
) -> Result<T> {
    let mut merged = Map::new();
    if let Some(config) = config {
        merged.extend(
            normalize_keys(config)
                .into_iter()
                .filter(|(_, v)| !v.is_object()),
        );
        if let Some(Value::Object(sub)) = config.get(section) {
            merged.extend(normalize_keys(sub));
        }
    }
    if let Value::Object(flags) = serde_json::to_value(cli)? {
        merged.extend(flags);
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::Config(format!("{section} options: {e}")))
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::Config(format!("--{flag} is required")))
}

fn load_config(path: &Path) -> Result<Map<String, Value>> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match serde_json::from_slice(&bytes)? {
        Value::Object(map) => Ok(map),
        _ => Err(Error::Config(format!(
            "{}: expected a JSON object",
            path.display()
        ))),
    }
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    let cap = match std::env::var(THREADS_ENV) {
        Ok(v) => Some(
            v.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| {
                    Error::Config(format!("{THREADS_ENV}={v:?} is not a positive integer"))
                })?,
        ),
        Err(_) => None,
    };
    if flag == Some(0) {
        return Err(Error::Config("--threads must be positive".into()));
    }
    Ok(match (flag, cap) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    })
}

fn run(cli: Cli) -> Result<()> {
    let config = cli.config.as_deref().map(load_config).transpose()?;
    let config = config.as_ref();
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => config
            .and_then(|c| c.get("threads"))
            .map(|v| {
                v.as_u64()
                    .map(|t| t as usize)
                    .ok_or_else(|| Error::Config("threads must be an integer".into()))
            })
            .transpose()?,
    };
    if let Some(n) = thread_count(threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }

    let section = cli.command.section();
    match &cli.command {
        Command::BuildRef(args) => {
            let a = merge(args, config, section)?;
            let mut sampling = SamplingSpec::new(
                a.method.unwrap_or_default(),
                a.n.unwrap_or(DEFAULT_BUDGET),
                a.seed.unwrap_or(0),
            );
            sampling.projection_dim = a.projection_dim;
            let opts = BuildRefOptions {
                train_root: require(a.train, "train")?,
                sampling,
                metric: a.metric.unwrap_or_default(),
                max_per_image: a.max_per_image,
            };
            let out = require(a.out, "out")?;
            let refs = cmd_build_ref(&opts, &out)?;
            println!(
                "{} reference rows x {} channels -> {}",
                refs.count(),
                refs.channels(),
                out.display()
            );
        }
        Command::FitNorm(args) => {
            let a = merge(args, config, section)?;
            let knn = KnnConfig::new(a.k.unwrap_or(DEFAULT_K), a.metric.unwrap_or_default());
            let out = require(a.out, "out")?;
            let file = cmd_fit_norm(
                &require(a.train, "train")?,
                &require(a.reference, "reference")?,
                &knn,
                a.parametric.unwrap_or_default(),
                &out,
            )?;
            println!(
                "knn_max {} param_min {} param_max {} -> {}",
                file.knn_max,
                file.param_min,
                file.param_max,
                out.display()
            );
        }
        Command::Score(args) => {
            let a = merge(args, config, section)?;
            let cfg = PipelineConfig {
                dataset_root: require(a.data, "data")?,
                reference_path: a.reference,
                stats_path: a.stats,
                knn: KnnConfig::new(a.k.unwrap_or(DEFAULT_K), a.metric.unwrap_or_default()),
                sampling: SamplingSpec::new(SamplingMethod::default(), DEFAULT_BUDGET, 0),
                parametric_kind: a.parametric.unwrap_or_default(),
                mode: a.mode.unwrap_or_default(),
            };
            let out = require(a.out, "out")?;
            let summary = cmd_score(&cfg, &a.ids.unwrap_or_default(), &out, a.png)?;
            println!(
                "scored {} images -> {}",
                summary.written.len(),
                out.display()
            );
            if !summary.failures.is_empty() {
                let count = summary.failures.len();
                let summary = summary
                    .failures
                    .iter()
                    .map(|(id, e)| format!("{id}: {e}"))
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(Error::Batch { count, summary });
            }
        }
        Command::Eval(args) => {
            let a = merge(args, config, section)?;
            let report = cmd_eval(&require(a.scores, "scores")?, &require(a.masks, "masks")?)?;
            print!("{}", report.table());
            if let Some(out) = a.out {
                report.save(&out)?;
            }
        }
        Command::Sweep(args) => {
            let a = merge(args, config, section)?;
            let grid = SweepGrid {
                methods: a.method.unwrap_or_else(|| vec![SamplingMethod::default()]),
                budgets: a.n.unwrap_or_else(|| vec![DEFAULT_BUDGET]),
                seeds: a.seed.unwrap_or_else(|| vec![0]),
                ks: a.k.unwrap_or_else(|| vec![DEFAULT_K]),
                metrics: a.metric.unwrap_or_else(|| vec![DistanceMetric::default()]),
                mode: a.mode.unwrap_or_default(),
                parametric_kind: a.parametric.unwrap_or_default(),
                projection_dim: a.projection_dim,
                max_per_image: a.max_per_image,
            };
            grid.validate()?;
            let train = scan_dataset(&require(a.train, "train")?)?;
            let test = scan_dataset(&require(a.test, "test")?)?;
            let rows = run_sweep(&train, &test, &grid)?;
            match a.out {
                Some(path) => {
                    let file = File::create(&path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    write_sweep_csv(&rows, BufWriter::new(file))?;
                }
                None => write_sweep_csv(&rows, io::stdout().lock())?,
            }
        }
        Command::Synth(args) => {
            let a = merge(args, config, section)?;
            let d = SynthSpec::default();
            let spec = SynthSpec {
                seed: a.seed.unwrap_or(d.seed),
                train_images: a.train_images.unwrap_or(d.train_images),
                test_images: a.test_images.unwrap_or(d.test_images),
                grid: a.grid.unwrap_or(d.grid),
                stride: a.stride.unwrap_or(d.stride),
                channels: a.channels.unwrap_or(d.channels),
                num_classes: a.num_classes.unwrap_or(d.num_classes),
                sigma: a.sigma.unwrap_or(d.sigma),
                inlier_separation: a.inlier_separation.unwrap_or(d.inlier_separation),
                ood_distance: a.ood_distance.unwrap_or(d.ood_distance),
                ood_cells: a.ood_cells.unwrap_or(d.ood_cells),
            };
            let out = require(a.out, "out")?;
            generate_synthetic(&out, &spec)?;
            println!("synthetic dataset -> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
