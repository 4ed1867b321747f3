//! Command-line harness around the `tscluster` engine.
//!
//! Four subcommands: `cluster` runs the pipeline on a UCR-format dataset,
//! `elbow` sweeps k, `scale-test` times the fast profile on generated data,
//! and `noise-test` measures accuracy under additive Gaussian noise. Every
//! command writes CSV and is deterministic given `--seed` (timings aside).

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tscluster::io_ucr::{load_ucr_with_stats, znormalize};
use tscluster::metrics::elbow_curve;
use tscluster::pipeline::{self, RunReport};
use tscluster::{generate_cbf, inject_noise, pad_with_noise, rand_index, Hyperparams, TimeSeriesDataset};

/// Header of the run-record CSV.
pub const RUN_RECORD_HEADER: &str = "dataset,n,m,k,B,sr,seed,rand_index,selected_S,wall_time_ms";
pub const DEFAULT_NOISE_SCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5];
pub const SCALE_REPS: usize = 3;
/// Series per dataset in length-mode scale tests.
pub const LENGTH_MODE_N: usize = 120;
/// Base length of generated series before noise padding.
pub const CBF_LENGTH: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Pipeline(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Pipeline(_) => 3,
        }
    }
}

impl From<tscluster::Error> for CliError {
    fn from(e: tscluster::Error) -> Self {
        match e {
            tscluster::Error::Io(_) | tscluster::Error::Parse { .. } => CliError::Io(e.to_string()),
            other => CliError::Pipeline(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "tscluster", version, about = "Training-free time series clustering")]
pub struct Cli {
    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a UCR-format dataset.
    Cluster(ClusterArgs),
    /// WCSS of the consensus over a range of k.
    Elbow(ElbowArgs),
    /// Wall time against dataset size or series length, with a linear fit.
    ScaleTest(ScaleArgs),
    /// Mean Rand Index under increasing Gaussian noise.
    NoiseTest(NoiseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// Number of random feature-extraction branches.
    #[arg(long, default_value_t = 800)]
    pub branches: usize,
    /// Fraction of branches guaranteed to reach the consensus.
    #[arg(long, default_value_t = 0.1)]
    pub sr: f64,
    /// Smallest tolerated cluster size, as a multiple of n/k.
    #[arg(long, default_value_t = 0.3)]
    pub lower_mult: f64,
    /// Largest tolerated cluster size, as a multiple of n/k.
    #[arg(long, default_value_t = 1.5)]
    pub upper_mult: f64,
    /// Master seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// 100 branches and a single k-means restart (overrides --branches); for
    /// scaling studies only.
    #[arg(long)]
    pub fast: bool,
    /// Z-normalize every series before clustering.
    #[arg(long)]
    pub znorm: bool,
}

impl PipelineArgs {
    pub fn hyperparams(&self, k: usize) -> Hyperparams {
        let mut hp = if self.fast {
            Hyperparams::fast(k)
        } else {
            Hyperparams::new(k).with_branches(self.branches)
        };
        hp.selection_rate = self.sr;
        hp.lower_mult = self.lower_mult;
        hp.upper_mult = self.upper_mult;
        hp.with_seed(self.seed)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Training split in UCR format (tab or comma separated, label first).
    #[arg(long, conflicts_with = "cbf")]
    pub train: Option<PathBuf>,
    /// Test split, appended to the training split.
    #[arg(long, requires = "train")]
    pub test: Option<PathBuf>,
    /// Use generated cylinder-bell-funnel data with this many series per class.
    #[arg(long)]
    pub cbf: Option<usize>,
    /// Seed of the generated data.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

impl SourceArgs {
    fn load(&self, znorm: bool) -> Result<TimeSeriesDataset, CliError> {
        let data = match (&self.train, self.cbf) {
            (Some(train), _) => {
                let (data, stats) =
                    load_ucr_with_stats(train, self.test.as_deref()).map_err(|e| match e {
                        tscluster::Error::Io(io) => {
                            let test = self.test.as_ref().map(|t| format!(" / {}", t.display()));
                            CliError::Io(format!("reading {}{}: {io}", train.display(), test.unwrap_or_default()))
                        }
                        other => other.into(),
                    })?;
                if stats.missing_values > 0 || stats.padded_rows > 0 {
                    eprintln!(
                        "warning: {} missing values and {} short rows zero-padded",
                        stats.missing_values, stats.padded_rows
                    );
                }
                data
            }
            (None, Some(per_class)) => generate_cbf(per_class, CBF_LENGTH, self.data_seed)
                .map_err(|e| CliError::Usage(e.to_string()))?,
            (None, None) => return Err(CliError::Usage("one of --train or --cbf is required".into())),
        };
        if znorm {
            Ok(znormalize(&data)?)
        } else {
            Ok(data)
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of clusters.
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Append a run record to this CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write consensus labels, one per line, in input order.
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
    /// Persist finished branches here and resume from it.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Branches computed between checkpoint writes.
    #[arg(long, default_value_t = 50, requires = "checkpoint")]
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ElbowArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 2)]
    pub k_min: usize,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the `k,wcss` curve here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleMode {
    Instances,
    Length,
}

#[derive(Debug, Clone, Args)]
pub struct ScaleArgs {
    /// Vary the number of series or the series length.
    #[arg(long, value_enum)]
    pub mode: ScaleMode,
    /// At least four ascending sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Write the per-size timings as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of clusters.
    #[arg(long)]
    pub k: usize,
    /// Noise standard deviations, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_NOISE_SCALES)]
    pub scales: Vec<f64>,
    /// Seeds averaged per noise level.
    #[arg(long, default_value_t = 10)]
    pub seeds: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Write the `scale,rand_index` table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One row of the run-record CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    #[serde(rename = "B")]
    pub branches: usize,
    pub sr: f64,
    pub seed: u64,
    pub rand_index: Option<f64>,
    #[serde(rename = "selected_S")]
    pub selected: usize,
    pub wall_time_ms: u64,
}

impl RunRecord {
    pub fn from_report(dataset: &TimeSeriesDataset, report: &RunReport) -> Self {
        let hp = &report.hyperparams;
        Self {
            dataset: dataset.name().to_string(),
            n: dataset.n(),
            m: dataset.m(),
            k: hp.k,
            branches: hp.branches,
            sr: hp.selection_rate,
            seed: hp.master_seed,
            rand_index: report.rand_index_vs_truth,
            selected: report.selected_count,
            wall_time_ms: report.wall_time_ms,
        }
    }
}

/// Appends `record` to `path`, writing the header first if the file is new or empty.
pub fn append_run_record(path: &Path, record: &RunRecord) -> Result<(), CliError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    w.serialize(record).map_err(|e| io_err(path, e))?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_run_records(path: &Path) -> Result<Vec<RunRecord>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize()
        .collect::<Result<Vec<RunRecord>, _>>()
        .map_err(|e| io_err(path, e))
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<(), CliError> {
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Writes CSV rows to `path`, or stdout when `None`.
fn emit_csv<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| io_err(p, e))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn check_hyperparams(hp: &Hyperparams, n: usize) -> Result<(), CliError> {
    hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if hp.k > n {
        return Err(CliError::Usage(format!("k={} exceeds the {n} instances", hp.k)));
    }
    Ok(())
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<RunReport, CliError> {
    let data = args.source.load(args.pipeline.znorm)?;
    let hp = args.pipeline.hyperparams(args.k);
    check_hyperparams(&hp, data.n())?;
    let report = match &args.checkpoint {
        Some(path) => pipeline::run_with_checkpoint(&data, &hp, path, args.checkpoint_every)?,
        None => pipeline::run(&data, &hp)?,
    };
    if let Some(path) = &args.labels_out {
        write_labels(path, report.assignment.labels())?;
    }
    if let Some(path) = &args.out {
        append_run_record(path, &RunRecord::from_report(&data, &report))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowRow {
    pub k: usize,
    pub wcss: f64,
}

pub fn cmd_elbow(args: &ElbowArgs) -> Result<Vec<ElbowRow>, CliError> {
    let data = args.source.load(args.pipeline.znorm)?;
    if args.k_min == 0 || args.k_min > args.k_max {
        return Err(CliError::Usage(format!(
            "need 1 <= --k-min <= --k-max (got {}..{})",
            args.k_min, args.k_max
        )));
    }
    if args.k_max > data.n() {
        return Err(CliError::Usage(format!(
            "--k-max {} exceeds the {} instances",
            args.k_max,
            data.n()
        )));
    }
    let hp = args.pipeline.hyperparams(args.k_min);
    hp.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let ks: Vec<usize> = (args.k_min..=args.k_max).collect();
    let curve = elbow_curve(&data, &hp, &ks)?;
    Ok(curve
        .ks
        .iter()
        .zip(&curve.wcss)
        .map(|(&k, &wcss)| ElbowRow { k, wcss })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub size: usize,
    pub mean_ms: f64,
    pub rand_index: f64,
}

/// Ordinary least squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - (slope * a + intercept);
            r * r
        })
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

fn scale_dataset(mode: ScaleMode, size: usize, seed: u64) -> Result<TimeSeriesDataset, CliError> {
    match mode {
        ScaleMode::Instances => Ok(generate_cbf((size / 3).max(1), CBF_LENGTH, seed)?),
        ScaleMode::Length => {
            if size < CBF_LENGTH {
                return Err(CliError::Usage(format!(
                    "length-mode sizes must be at least {CBF_LENGTH} (got {size})"
                )));
            }
            let base = generate_cbf(LENGTH_MODE_N / 3, CBF_LENGTH, seed)?;
            Ok(pad_with_noise(&base, size, seed ^ 0x5ca1e)?)
        }
    }
}

pub fn cmd_scale_test(args: &ScaleArgs) -> Result<(Vec<ScaleRow>, LinearFit), CliError> {
    if args.sizes.len() < 4 {
        return Err(CliError::Usage(format!(
            "--sizes needs at least 4 values (got {})",
            args.sizes.len()
        )));
    }
    if args.sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Usage("--sizes must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(args.sizes.len());
    for &size in &args.sizes {
        let mut total_ms = 0.0;
        let mut total_ri = 0.0;
        for rep in 0..SCALE_REPS {
            let seed = args.seed.wrapping_add(rep as u64);
            let data = scale_dataset(args.mode, size, seed)?;
            let hp = Hyperparams::fast(args.k).with_seed(seed);
            check_hyperparams(&hp, data.n())?;
            let report = pipeline::run(&data, &hp)?;
            total_ms += report.wall_time_ms as f64;
            total_ri += report.rand_index_vs_truth.unwrap_or(f64::NAN);
        }
        rows.push(ScaleRow {
            size,
            mean_ms: total_ms / SCALE_REPS as f64,
            rand_index: total_ri / SCALE_REPS as f64,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.size as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
    let fit = linear_fit(&x, &y).ok_or_else(|| CliError::Pipeline("degenerate timing data".into()))?;
    Ok((rows, fit))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub scale: f64,
    pub rand_index: f64,
}

pub fn cmd_noise_test(args: &NoiseArgs) -> Result<Vec<NoiseRow>, CliError> {
    if let Some(bad) = args.scales.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CliError::Usage(format!("noise scale {bad} must be finite and >= 0")));
    }
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let clean = args.source.load(args.pipeline.znorm)?;
    let truth = clean
        .truth()
        .ok_or_else(|| CliError::Usage("noise-test needs labelled data".into()))?;
    let base = args.pipeline.hyperparams(args.k);
    check_hyperparams(&base, clean.n())?;
    args.scales
        .iter()
        .map(|&scale| {
            let mut sum = 0.0;
            for s in 0..args.seeds {
                let seed = base.master_seed.wrapping_add(s as u64);
                let noisy = inject_noise(&clean, scale, seed)?;
                let report = pipeline::run(&noisy, &base.clone().with_seed(seed))?;
                sum += rand_index(&report.assignment, &truth)?;
            }
            Ok(NoiseRow {
                scale,
                rand_index: sum / args.seeds as f64,
            })
        })
        .collect()
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Cluster(args) => {
            let report = cmd_cluster(args)?;
            match report.rand_index_vs_truth {
                Some(ri) => println!("rand_index {ri:.6}"),
                None => println!("clustered {} instances", report.assignment.n()),
            }
            println!("selected {} of {} branches", report.selected_count, report.hyperparams.branches);
        }
        Command::Elbow(args) => {
            let rows = cmd_elbow(args)?;
            emit_csv(args.out.as_deref(), &rows)?;
        }
        Command::ScaleTest(args) => {
            let (rows, fit) = cmd_scale_test(args)?;
            emit_csv(args.out.as_deref(), &rows)?;
            println!(
                "slope {:.6} intercept {:.3} r_squared {:.4}",
                fit.slope, fit.intercept, fit.r_squared
            );
        }
        Command::NoiseTest(args) => {
            let rows = cmd_noise_test(args)?;
            emit_csv(args.out.as_deref(), &rows)?;
        }
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be positive".into())),
        Some(jobs) => match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(CliError::Pipeline(e.to_string())),
        },
        None => dispatch(&cli),
    };
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
