//! End-to-end commands behind the CLI.
//!
//! Every command is deterministic given `(config, seed)`: outputs are
//! written atomically (temp file then rename), recorded with SHA-256
//! checksums in a run manifest, and contain no wall-clock data (sweep
//! timings go to a separate file that is not part of the determinism
//! contract).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::{
    fit_apply, fit_apply_identity, CalibratedIntervals, CalibratorKind, CalibratorModel,
    SaucOptions,
};
use crate::data::{
    counts_to_f64, generate_synthetic, ingest_csv, split, CountPanel, CsvLayout, SplitIndex,
    SyntheticSpec,
};
use crate::dist::PredictiveDistribution;
use crate::error::{Error, Result};
use crate::forecaster::{
    fit_seasonal_nb, oracle_forecast, predict, targets_for, DistortionSpec, ForecastSet,
    ForecastSidecar, SplitTag,
};
use crate::metrics::{ence, reliability_curve, risk_by_node, MetricsFilter, MetricsReport, DEFAULT_C};

// ─── configuration ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetConfig {
    Synthetic(SyntheticSpec),
    Csv { path: PathBuf, layout: CsvLayout },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterConfig {
    /// Moment-matched seasonal NB with the given period.
    Seasonal { period: usize },
    /// Replay the generator truth with multiplicative distortion
    /// (synthetic datasets only).
    Oracle { b_mu: f64, b_alpha: f64 },
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig::Seasonal { period: 24 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratorConfig {
    #[serde(default = "default_kind")]
    pub kind: CalibratorKind,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default = "default_zero_threshold")]
    pub zero_threshold: f64,
    /// Disable the zero/non-zero split (JSON cannot carry -inf).
    #[serde(default)]
    pub disable_zero_split: bool,
    #[serde(default)]
    pub bin_on: crate::calib::BinOn,
    #[serde(default)]
    pub mu_star: crate::calib::MuStarMode,
}

fn default_kind() -> CalibratorKind {
    CalibratorKind::Sauc
}

fn default_bins() -> usize {
    crate::calib::DEFAULT_N_BINS
}

fn default_zero_threshold() -> f64 {
    crate::calib::DEFAULT_ZERO_THRESHOLD
}

impl Default for CalibratorConfig {
    fn default() -> Self {
        CalibratorConfig {
            kind: default_kind(),
            n_bins: default_bins(),
            zero_threshold: default_zero_threshold(),
            disable_zero_split: false,
            bin_on: Default::default(),
            mu_star: Default::default(),
        }
    }
}

impl CalibratorConfig {
    pub fn sauc_options(&self) -> SaucOptions {
        SaucOptions {
            n_bins: self.n_bins,
            zero_threshold: if self.disable_zero_split {
                f64::NEG_INFINITY
            } else {
                self.zero_threshold
            },
            bin_on: self.bin_on,
            mu_star: self.mu_star,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    #[serde(default = "default_c")]
    pub c: f64,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
}

fn default_c() -> f64 {
    DEFAULT_C
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { c: DEFAULT_C, n_bins: default_bins() }
    }
}

fn default_split() -> [f64; 3] {
    [0.6, 0.2, 0.2]
}

/// Full run configuration; a single JSON file with flag overrides on top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub forecaster: ForecasterConfig,
    #[serde(default)]
    pub calibrator: CalibratorConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    /// Mandatory for synthetic datasets.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.dataset, DatasetConfig::Synthetic(_)) && self.seed.is_none() {
            return Err(Error::domain("synthetic runs require an explicit seed"));
        }
        if let DatasetConfig::Csv { path, .. } = &self.dataset {
            if !path.exists() {
                return Err(Error::domain(format!("dataset file `{}` does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding; stamped into manifests.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn dataset_id(&self) -> String {
        match &self.dataset {
            DatasetConfig::Synthetic(spec) => format!(
                "synthetic-{}x{}-seed{}",
                spec.nodes,
                spec.steps,
                self.seed.unwrap_or_default()
            ),
            DatasetConfig::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }
}

// ─── file helpers ───────────────────────────────────────────────────────────

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write atomically: temp file in the same directory, then rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects written files and their checksums for the run manifest.
struct OutputWriter {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl OutputWriter {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputWriter { dir: dir.to_path_buf(), checksums: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        atomic_write(&self.dir.join(name), bytes)?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Wide panel CSV: `timestep,<node>,...` with one row per timestep.
pub fn panel_to_wide_csv(panel: &CountPanel) -> String {
    let mut out = String::from("timestep");
    for id in panel.node_ids() {
        out.push(',');
        out.push_str(id);
    }
    out.push('\n');
    for t in 0..panel.n_steps() {
        out.push_str(&t.to_string());
        for node in 0..panel.n_nodes() {
            out.push(',');
            out.push_str(&panel.get(node, t).to_string());
        }
        out.push('\n');
    }
    out
}

/// Truth CSV covering every panel cell (`node_id,timestep,family,mu,alpha`).
fn truth_to_csv(panel: &CountPanel, truth: &[PredictiveDistribution]) -> String {
    let mut out = String::from("node_id,timestep,family,mu,alpha\n");
    for node in 0..panel.n_nodes() {
        let id = &panel.node_ids()[node];
        for t in 0..panel.n_steps() {
            match truth[node * panel.n_steps() + t] {
                PredictiveDistribution::NegBinomial { mu, alpha } => {
                    out.push_str(&format!("{id},{t},nb,{mu},{alpha}\n"));
                }
                other => {
                    // The generator only emits NB truths.
                    let m = other.mean();
                    out.push_str(&format!("{id},{t},nb,{m},1\n"));
                }
            }
        }
    }
    out
}

fn reliability_csv(points: &[crate::metrics::ReliabilityPoint]) -> String {
    let mut out = String::from("bin,c_mpiw,rmse,n\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.bin, p.c_mpiw, p.rmse, p.n));
    }
    out
}

fn risk_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("node_id,mean_risk_score\n");
    for (id, rs) in rows {
        out.push_str(&format!("{id},{rs}\n"));
    }
    out
}

// ─── stages ─────────────────────────────────────────────────────────────────

/// Everything the calibrate/evaluate stages need, computed once.
pub struct StageData {
    pub panel: CountPanel,
    pub split: SplitIndex,
    pub truth: Option<Vec<PredictiveDistribution>>,
    pub fc_calib: ForecastSet,
    pub fc_test: ForecastSet,
    pub y_calib: Vec<f64>,
    pub y_test: Vec<f64>,
}

pub fn load_dataset(config: &RunConfig) -> Result<(CountPanel, Option<Vec<PredictiveDistribution>>)> {
    config.validate()?;
    match &config.dataset {
        DatasetConfig::Synthetic(spec) => {
            let (panel, truth) = generate_synthetic(spec, config.seed.expect("validated"))?;
            Ok((panel, Some(truth)))
        }
        DatasetConfig::Csv { path, layout } => Ok((ingest_csv(path, *layout)?, None)),
    }
}

/// Run dataset load, split, and forecasting.
pub fn run_stages(config: &RunConfig) -> Result<StageData> {
    let (panel, truth) = load_dataset(config).map_err(|e| e.in_stage("dataset"))?;
    let split_idx = split(&panel, (config.split[0], config.split[1], config.split[2]))
        .map_err(|e| e.in_stage("split"))?;
    log::info!(
        "dataset: {} nodes x {} steps, sparsity {:.3}",
        panel.n_nodes(),
        panel.n_steps(),
        panel.sparsity()
    );

    let (fc_calib, fc_test) = match config.forecaster {
        ForecasterConfig::Seasonal { period } => {
            let model = fit_seasonal_nb(&panel, &split_idx, period)
                .map_err(|e| e.in_stage("forecast"))?;
            let c = predict(&model, &panel, &split_idx, SplitTag::Calib)
                .map_err(|e| e.in_stage("forecast"))?;
            let t = predict(&model, &panel, &split_idx, SplitTag::Test)
                .map_err(|e| e.in_stage("forecast"))?;
            (c, t)
        }
        ForecasterConfig::Oracle { b_mu, b_alpha } => {
            let truth_ref = truth.as_deref().ok_or_else(|| {
                Error::domain("oracle forecaster requires a synthetic dataset").in_stage("forecast")
            })?;
            let d = DistortionSpec { b_mu, b_alpha };
            let c = oracle_forecast(truth_ref, &panel, &split_idx, SplitTag::Calib, d)
                .map_err(|e| e.in_stage("forecast"))?;
            let t = oracle_forecast(truth_ref, &panel, &split_idx, SplitTag::Test, d)
                .map_err(|e| e.in_stage("forecast"))?;
            (c, t)
        }
    };

    let y_calib = counts_to_f64(&targets_for(&panel, &split_idx, SplitTag::Calib));
    let y_test = counts_to_f64(&targets_for(&panel, &split_idx, SplitTag::Test));
    Ok(StageData { panel, split: split_idx, truth, fc_calib, fc_test, y_calib, y_test })
}

fn stamped(mut report: MetricsReport, config: &RunConfig, calibrator_id: &str) -> MetricsReport {
    report.dataset_id = config.dataset_id();
    report.calibrator_id = calibrator_id.to_string();
    report.config_hash = config.config_hash();
    report
}

// ─── commands ───────────────────────────────────────────────────────────────

/// Manifest of `generate`: spec echo, seed, panel stats, file checksums.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub spec: SyntheticSpec,
    pub seed: u64,
    pub sparsity: f64,
    pub mean: f64,
    pub config_hash: String,
    pub files: BTreeMap<String, String>,
}

pub fn cmd_generate(config: &RunConfig, out_dir: &Path) -> Result<GenerateManifest> {
    config.validate()?;
    let DatasetConfig::Synthetic(spec) = &config.dataset else {
        return Err(Error::domain("generate requires a synthetic dataset config"));
    };
    let seed = config.seed.expect("validated");
    let (panel, truth) = generate_synthetic(spec, seed)?;

    let mut writer = OutputWriter::new(out_dir)?;
    writer.write("panel.csv", panel_to_wide_csv(&panel).as_bytes())?;
    writer.write("truth.csv", truth_to_csv(&panel, &truth).as_bytes())?;
    let manifest = GenerateManifest {
        spec: spec.clone(),
        seed,
        sparsity: panel.sparsity(),
        mean: panel.mean(),
        config_hash: config.config_hash(),
        files: writer.checksums.clone(),
    };
    writer.write_json("manifest.json", &manifest)?;
    Ok(manifest)
}

/// Summary of `ingest`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestSummary {
    pub nodes: usize,
    pub steps: usize,
    pub sparsity: f64,
    pub mean: f64,
    pub files: BTreeMap<String, String>,
}

pub fn cmd_ingest(input: &Path, layout: CsvLayout, out_dir: &Path) -> Result<IngestSummary> {
    let panel = ingest_csv(input, layout)?;
    let mut writer = OutputWriter::new(out_dir)?;
    writer.write("panel.csv", panel_to_wide_csv(&panel).as_bytes())?;
    let summary = IngestSummary {
        nodes: panel.n_nodes(),
        steps: panel.n_steps(),
        sparsity: panel.sparsity(),
        mean: panel.mean(),
        files: writer.checksums.clone(),
    };
    writer.write_json("ingest_summary.json", &summary)?;
    Ok(summary)
}

fn write_forecast(writer: &mut OutputWriter, name: &str, fc: &ForecastSet, seed: Option<u64>) -> Result<()> {
    writer.write(name, fc.to_csv_string().as_bytes())?;
    let sidecar = ForecastSidecar { model_id: fc.model_id.clone(), split_tag: fc.split_tag, seed };
    let meta_name = name.replace(".csv", ".meta.json");
    writer.write_json(&meta_name, &sidecar)
}

pub fn cmd_forecast(config: &RunConfig, out_dir: &Path) -> Result<BTreeMap<String, String>> {
    let stages = run_stages(config)?;
    let mut writer = OutputWriter::new(out_dir)?;
    writer.write("panel.csv", panel_to_wide_csv(&stages.panel).as_bytes())?;
    write_forecast(&mut writer, "forecast_calib.csv", &stages.fc_calib, config.seed)?;
    write_forecast(&mut writer, "forecast_test.csv", &stages.fc_test, config.seed)?;
    Ok(writer.checksums)
}

pub fn cmd_calibrate(config: &RunConfig, out_dir: &Path) -> Result<(CalibratorModel, BTreeMap<String, String>)> {
    let stages = run_stages(config)?;
    let opts = config.calibrator.sauc_options();
    let (model, intervals) =
        fit_apply(config.calibrator.kind, &stages.fc_calib, &stages.y_calib, &stages.fc_test, &opts)
            .map_err(|e| e.in_stage("calibrate"))?;
    let mut writer = OutputWriter::new(out_dir)?;
    writer.write_json("model.json", &model)?;
    writer.write("intervals_post.csv", intervals.to_csv_string().as_bytes())?;
    Ok((model, writer.checksums))
}

/// Reports for one intervals set under the `{all, zero_only}` filters.
fn evaluate_pair(
    config: &RunConfig,
    intervals: &CalibratedIntervals,
    y: &[f64],
) -> Result<(MetricsReport, MetricsReport)> {
    let m = &config.metrics;
    let all = stamped(
        ence(intervals, y, m.n_bins, m.c, MetricsFilter::All)?,
        config,
        &intervals.calibrator_id,
    );
    let zero = stamped(
        ence(intervals, y, m.n_bins, m.c, MetricsFilter::ZeroOnly)?,
        config,
        &intervals.calibrator_id,
    );
    Ok((all, zero))
}

/// Everything `pipeline` computed, for callers that want the numbers as well
/// as the files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub config_hash: String,
    pub dataset_id: String,
    pub calibrator_id: String,
    pub pre_all: MetricsReport,
    pub pre_zero: MetricsReport,
    pub post_all: MetricsReport,
    pub post_zero: MetricsReport,
    pub files: BTreeMap<String, String>,
}

pub fn cmd_pipeline(config: &RunConfig, out_dir: &Path) -> Result<PipelineSummary> {
    let stages = run_stages(config)?;
    let opts = config.calibrator.sauc_options();

    let (_, pre) = fit_apply_identity(&stages.fc_test).map_err(|e| e.in_stage("calibrate"))?;
    let (model, post) =
        fit_apply(config.calibrator.kind, &stages.fc_calib, &stages.y_calib, &stages.fc_test, &opts)
            .map_err(|e| e.in_stage("calibrate"))?;

    let (pre_all, pre_zero) =
        evaluate_pair(config, &pre, &stages.y_test).map_err(|e| e.in_stage("evaluate"))?;
    let (post_all, post_zero) =
        evaluate_pair(config, &post, &stages.y_test).map_err(|e| e.in_stage("evaluate"))?;
    log::info!(
        "pipeline: ENCE all {:.4} -> {:.4}, coverage {:.3} -> {:.3}",
        pre_all.ence,
        post_all.ence,
        pre_all.coverage,
        post_all.coverage
    );

    let m = &config.metrics;
    let mut writer = OutputWriter::new(out_dir)?;
    writer.write("panel.csv", panel_to_wide_csv(&stages.panel).as_bytes())?;
    write_forecast(&mut writer, "forecast_calib.csv", &stages.fc_calib, config.seed)?;
    write_forecast(&mut writer, "forecast_test.csv", &stages.fc_test, config.seed)?;
    writer.write_json("model.json", &model)?;
    writer.write("intervals_pre.csv", pre.to_csv_string().as_bytes())?;
    writer.write("intervals_post.csv", post.to_csv_string().as_bytes())?;
    writer.write_json("report_pre_all.json", &pre_all)?;
    writer.write_json("report_pre_zero.json", &pre_zero)?;
    writer.write_json("report_post_all.json", &post_all)?;
    writer.write_json("report_post_zero.json", &post_zero)?;
    writer.write(
        "reliability_pre_all.csv",
        reliability_csv(&reliability_curve(&pre, &stages.y_test, m.n_bins, m.c)?).as_bytes(),
    )?;
    writer.write(
        "reliability_post_all.csv",
        reliability_csv(&reliability_curve(&post, &stages.y_test, m.n_bins, m.c)?).as_bytes(),
    )?;
    let zero_idx: Vec<usize> =
        (0..stages.y_test.len()).filter(|&i| stages.y_test[i] == 0.0).collect();
    writer.write(
        "reliability_pre_zero.csv",
        reliability_csv(&restrict_curve(&pre, &stages.y_test, &zero_idx, m)?).as_bytes(),
    )?;
    writer.write(
        "reliability_post_zero.csv",
        reliability_csv(&restrict_curve(&post, &stages.y_test, &zero_idx, m)?).as_bytes(),
    )?;
    writer.write("risk_by_node.csv", risk_csv(&risk_by_node(&post)).as_bytes())?;

    let summary = PipelineSummary {
        config_hash: config.config_hash(),
        dataset_id: config.dataset_id(),
        calibrator_id: model.calibrator_id(),
        pre_all,
        pre_zero,
        post_all,
        post_zero,
        files: writer.checksums.clone(),
    };
    writer.write_json("run_manifest.json", &RunManifest {
        config_hash: summary.config_hash.clone(),
        seed: config.seed,
        dataset_id: summary.dataset_id.clone(),
        calibrator_id: summary.calibrator_id.clone(),
        files: writer.checksums.clone(),
    })?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: Option<u64>,
    pub dataset_id: String,
    pub calibrator_id: String,
    pub files: BTreeMap<String, String>,
}

fn restrict_curve(
    intervals: &CalibratedIntervals,
    y: &[f64],
    keep: &[usize],
    m: &MetricsConfig,
) -> Result<Vec<crate::metrics::ReliabilityPoint>> {
    let report = ence(intervals, y, m.n_bins, m.c, MetricsFilter::ZeroOnly);
    match report {
        Ok(r) => Ok(r
            .bins
            .iter()
            .map(|b| crate::metrics::ReliabilityPoint {
                bin: b.bin,
                c_mpiw: m.c * b.mpiw,
                rmse: b.rmse,
                n: b.n,
            })
            .collect()),
        // No zero targets in this dataset: emit an empty curve.
        Err(Error::Domain(_)) if keep.is_empty() => Ok(Vec::new()),
        Err(e) => Err(e),
    }
}

pub fn cmd_evaluate(config: &RunConfig, out_dir: &Path) -> Result<PipelineSummary> {
    // Evaluation re-runs the deterministic chain; reports and reliability
    // data are exactly the pipeline's.
    cmd_pipeline(config, out_dir)
}

/// Post-calibration report under an arbitrary filter, without file output.
pub fn post_report(config: &RunConfig, filter: MetricsFilter) -> Result<MetricsReport> {
    let stages = run_stages(config)?;
    let opts = config.calibrator.sauc_options();
    let (model, post) =
        fit_apply(config.calibrator.kind, &stages.fc_calib, &stages.y_calib, &stages.fc_test, &opts)
            .map_err(|e| e.in_stage("calibrate"))?;
    let report = ence(&post, &stages.y_test, config.metrics.n_bins, config.metrics.c, filter)
        .map_err(|e| e.in_stage("evaluate"))?;
    Ok(stamped(report, config, &model.calibrator_id()))
}

/// One row of the bin sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_bins: usize,
    pub ence_all: f64,
    pub ence_zero: f64,
    pub wall_ms: u128,
}

/// Re-fit, apply, and evaluate per bin count. Both the calibrator bins and
/// the metric bins follow the swept value. Rows are emitted in input order
/// regardless of `jobs`.
pub fn cmd_sweep_bins(
    config: &RunConfig,
    bins: &[usize],
    jobs: usize,
    out_dir: &Path,
) -> Result<Vec<SweepRow>> {
    if bins.is_empty() {
        return Err(Error::domain("sweep needs at least one bin count"));
    }
    let stages = run_stages(config)?;

    let run_one = |&n: &usize| -> Result<SweepRow> {
        let start = Instant::now();
        let opts = SaucOptions { n_bins: n, ..config.calibrator.sauc_options() };
        let (_, post) =
            fit_apply(config.calibrator.kind, &stages.fc_calib, &stages.y_calib, &stages.fc_test, &opts)?;
        let all = ence(&post, &stages.y_test, n, config.metrics.c, MetricsFilter::All)?;
        let zero = ence(&post, &stages.y_test, n, config.metrics.c, MetricsFilter::ZeroOnly)?;
        Ok(SweepRow {
            n_bins: n,
            ence_all: all.ence,
            ence_zero: zero.ence,
            wall_ms: start.elapsed().as_millis(),
        })
    };

    let rows: Vec<SweepRow> = if jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            bins.par_iter().map(run_one).collect::<Result<Vec<_>>>()
        })?
    } else {
        bins.iter().map(run_one).collect::<Result<Vec<_>>>()?
    };

    let mut csv = String::from("n_bins,ence_all,ence_zero,wall_ms\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{}\n", r.n_bins, r.ence_all, r.ence_zero, r.wall_ms));
    }
    let mut writer = OutputWriter::new(out_dir)?;
    writer.write("sweep.csv", csv.as_bytes())?;
    Ok(rows)
}
