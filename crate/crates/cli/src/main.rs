//! `sauc`: generate or ingest count panels, forecast, calibrate prediction
//! intervals, and evaluate calibration quality.
//!
//! Configuration comes from a JSON file (`--config`); command-line flags
//! override individual fields. Logging is controlled by the `SAUC_LOG`
//! environment variable (`error|info|debug`).

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sauc_core::calib::CalibratorKind;
use sauc_core::data::CsvLayout;
use sauc_core::metrics::MetricsFilter;
use sauc_core::pipeline::{
    cmd_calibrate, cmd_evaluate, cmd_forecast, cmd_generate, cmd_ingest, cmd_pipeline,
    cmd_sweep_bins, RunConfig,
};

#[derive(Parser)]
#[command(name = "sauc", version, about = "Sparsity-aware calibration of count forecast intervals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config path plus the flag overrides shared by most subcommands.
/// Flags win over the config file.
#[derive(Args)]
struct ConfigArgs {
    /// Run configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Generator seed (mandatory for synthetic datasets)
    #[arg(long)]
    seed: Option<u64>,
    /// Calibrator kind: sauc|qr|isotonic|platt|temp_scaling|hist_binning|identity
    #[arg(long)]
    calibrator: Option<String>,
    /// Zero/non-zero segmentation threshold
    #[arg(long)]
    zero_threshold: Option<f64>,
    /// Width-to-standard-error factor used by ENCE
    #[arg(long)]
    c: Option<f64>,
    /// Output directory (falls back to `out_dir` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let mut config = RunConfig::from_json_file(&self.config)
            .with_context(|| format!("reading config `{}`", self.config.display()))?;
        if let Some(seed) = self.seed {
            config.seed = Some(seed);
        }
        if let Some(kind) = &self.calibrator {
            config.calibrator.kind = CalibratorKind::parse(kind)?;
        }
        if let Some(zt) = self.zero_threshold {
            config.calibrator.zero_threshold = zt;
        }
        if let Some(c) = self.c {
            config.metrics.c = c;
        }
        let out = match self.out.clone().or_else(|| config.out_dir.clone()) {
            Some(dir) => dir,
            None => bail!("no output directory: pass --out or set `out_dir` in the config"),
        };
        Ok((config, out))
    }
}

/// Config plus the scalar `--bins` override used by calibrating commands.
#[derive(Args)]
struct CalibArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of bins for the calibrator and metrics
    #[arg(long)]
    bins: Option<usize>,
}

impl CalibArgs {
    fn load(&self) -> Result<(RunConfig, PathBuf)> {
        let (mut config, out) = self.config.load()?;
        if let Some(bins) = self.bins {
            config.calibrator.n_bins = bins;
            config.metrics.n_bins = bins;
        }
        Ok((config, out))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic panel and write it with its truth distributions
    Generate(ConfigArgs),
    /// Validate a count CSV and write the normalized wide panel
    Ingest {
        /// Input CSV path
        #[arg(long)]
        input: PathBuf,
        /// CSV layout: wide|long
        #[arg(long)]
        layout: String,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the forecaster and write calibration/test forecast CSVs
    Forecast(ConfigArgs),
    /// Fit the configured calibrator and write the model plus intervals
    Calibrate(CalibArgs),
    /// Run the full chain and write metrics reports
    Evaluate {
        #[command(flatten)]
        config: CalibArgs,
        /// Which report to print to stdout: all|zero|nonzero
        #[arg(long, default_value = "all")]
        filter: String,
    },
    /// Full run: data, forecasts, calibration, reports, reliability curves
    Pipeline(CalibArgs),
    /// Re-fit and evaluate per bin count, writing one CSV row per N
    SweepBins {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated bin counts
        #[arg(long, value_delimiter = ',', required = true)]
        bins: Vec<usize>,
        /// Parallel sweep workers
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => {
            let (config, out) = args.load()?;
            let manifest = cmd_generate(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
        }
        Command::Ingest { input, layout, out } => {
            let layout = match layout.as_str() {
                "wide" => CsvLayout::Wide,
                "long" => CsvLayout::Long,
                other => bail!("unknown layout `{other}` (expected wide|long)"),
            };
            let summary = cmd_ingest(&input, layout, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Forecast(args) => {
            let (config, out) = args.load()?;
            let files = cmd_forecast(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&files)?);
        }
        Command::Calibrate(args) => {
            let (config, out) = args.load()?;
            let (model, _) = cmd_calibrate(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&model)?);
        }
        Command::Evaluate { config, filter } => {
            let filter = MetricsFilter::parse(&filter)?;
            let (config, out) = config.load()?;
            let summary = cmd_evaluate(&config, &out)?;
            let report = match filter {
                MetricsFilter::All => summary.post_all,
                MetricsFilter::ZeroOnly => summary.post_zero,
                MetricsFilter::NonzeroOnly => sauc_core::pipeline::post_report(&config, filter)?,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Pipeline(args) => {
            let (config, out) = args.load()?;
            let summary = cmd_pipeline(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::SweepBins { config, bins, jobs } => {
            let (config, out) = config.load()?;
            let rows = cmd_sweep_bins(&config, &bins, jobs.max(1), &out)?;
            println!("{}", serde_json::to_string_pretty(&rows)?);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SAUC_LOG", "warn"))
        .format_timestamp(None)
        .init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
