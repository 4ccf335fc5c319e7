//! `ventriq`: phantom generation, cycle analysis, segmentation metrics,
//! noise corruption and method agreement from the command line.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error, 3 I/O error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand};
use ventriq::cycle::MetricKind;
use ventriq::fitting::FitMethod;
use ventriq::noise::{NoiseModel, SnrReference};
use ventriq::stackio::ReportFormat;

use crate::config::PipelineConfig;

pub const EXIT_DOMAIN: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ventriq::Error> for CliError {
    fn from(e: ventriq::Error) -> Self {
        let code = if e.is_io() { EXIT_IO } else { EXIT_DOMAIN };
        Self { code, message: e.to_string() }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ventriq", version, about = "Left-ventricular cycle analysis from segmented cine stacks")]
struct Cli {
    /// JSON pipeline configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic beating-ventricle dataset with ground truth.
    Phantom(PhantomArgs),
    /// Select ED/ES phases and estimate the ejection fraction.
    Analyze(AnalyzeArgs),
    /// Dice and Hausdorff distance between two segmentations.
    Metrics(MetricsArgs),
    /// Corrupt the intensity stacks of a dataset with MRI noise.
    Noise(NoiseArgs),
    /// Bland-Altman agreement between paired measurements.
    Agree(AgreeArgs),
}

fn metric_parser() -> impl TypedValueParser<Value = MetricKind> {
    PossibleValuesParser::new(["volume", "surface-area", "slice-area"]).map(|s| s.parse().expect("listed value"))
}

fn fit_parser() -> impl TypedValueParser<Value = FitMethod> {
    PossibleValuesParser::new(["gp", "poly4", "poly"]).map(|s| s.parse().expect("listed value"))
}

fn model_parser() -> impl TypedValueParser<Value = NoiseModel> {
    PossibleValuesParser::new(["gaussian", "rician", "rayleigh", "mixed"]).map(|s| s.parse().expect("listed value"))
}

fn snr_on_parser() -> impl TypedValueParser<Value = SnrReference> {
    PossibleValuesParser::new(["raw", "normalized"]).map(|s| match s.as_str() {
        "raw" => SnrReference::Raw,
        _ => SnrReference::Normalized,
    })
}

fn format_parser() -> impl TypedValueParser<Value = ReportFormat> {
    PossibleValuesParser::new(["json", "csv"]).map(|s| match s.as_str() {
        "json" => ReportFormat::Json,
        _ => ReportFormat::Csv,
    })
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
    pub phases: Option<u32>,
    /// Target ejection fraction, percent.
    #[arg(long)]
    pub ef: Option<f64>,
    /// Target end-diastolic volume, mm³.
    #[arg(long)]
    pub ved: Option<f64>,
    /// End-systolic phase as a fraction of the cycle.
    #[arg(long)]
    pub es_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    /// Dataset manifest.
    #[arg(long)]
    pub stacks: PathBuf,
    #[arg(long, value_parser = metric_parser())]
    pub metric: Option<MetricKind>,
    #[arg(long, value_parser = fit_parser())]
    pub fit: Option<FitMethod>,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Observed points and fitted samples as CSV.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Evaluate EF on the fitted curve at the unsnapped extrema.
    #[arg(long)]
    pub interpolate: bool,
    /// Skip opening and hole filling of probability maps.
    #[arg(long)]
    pub no_postprocess: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = format_parser())]
    pub format: Option<ReportFormat>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Predicted segmentation manifest.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference segmentation manifest.
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_postprocess: bool,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, value_parser = format_parser())]
    pub format: Option<ReportFormat>,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    #[arg(long)]
    pub stacks: PathBuf,
    #[arg(long, value_parser = model_parser())]
    pub model: Option<NoiseModel>,
    /// Mean foreground intensity over noise σ; 20 for `mixed`, else 30.
    #[arg(long)]
    pub snr: Option<f64>,
    /// Measure σ on raw or min-max normalized intensities.
    #[arg(long, value_parser = snr_on_parser())]
    pub snr_on: Option<SnrReference>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AgreeArgs {
    /// CSV with columns subject,reference,estimate.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Differences-versus-means CSV; defaults to `<out stem>_differences.csv`.
    #[arg(long)]
    pub diffs: Option<PathBuf>,
    #[arg(long, value_parser = format_parser())]
    pub format: Option<ReportFormat>,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("VENTRIQ_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("VENTRIQ_THREADS must be a positive integer, got {raw:?}")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Phantom(a) => commands::phantom(cfg, a),
        Command::Analyze(a) => commands::analyze(cfg, a),
        Command::Metrics(a) => commands::metrics(cfg, a),
        Command::Noise(a) => commands::noise(cfg, a),
        Command::Agree(a) => commands::agree(cfg, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
