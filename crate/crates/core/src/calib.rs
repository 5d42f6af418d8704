//! Post-hoc calibration of prediction intervals.
//!
//! The sparsity-aware calibrator bins the calibration set by predicted mean,
//! splits each bin at the zero/non-zero rounding threshold, and fits a pair
//! of quantile lines (5% and 95%) per non-empty cell; test points are routed
//! through the same thresholds. Five baselines are provided for comparison:
//! global quantile regression, isotonic regression, Platt scaling,
//! temperature scaling, and histogram binning, plus an identity passthrough.
//!
//! All calibrators emit [`CalibratedIntervals`]; crossed bounds are swapped
//! per point and count-family bounds are clamped at zero.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dist::{PredictionInterval, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::forecaster::ForecastSet;
use crate::qr::{fit_quantile, QuantileFit};

/// Calibrated band levels; the artifact calibrates the 5%–95% band only.
pub const LO_P: f64 = 0.05;
pub const HI_P: f64 = 0.95;

/// Default number of predicted-mean bins.
pub const DEFAULT_N_BINS: usize = 15;
/// Default zero/non-zero segmentation threshold (rounding boundary).
pub const DEFAULT_ZERO_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibratorKind {
    Sauc,
    Qr,
    Isotonic,
    Platt,
    TempScaling,
    HistBinning,
    Identity,
}

impl CalibratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CalibratorKind::Sauc => "sauc",
            CalibratorKind::Qr => "qr",
            CalibratorKind::Isotonic => "isotonic",
            CalibratorKind::Platt => "platt",
            CalibratorKind::TempScaling => "temp_scaling",
            CalibratorKind::HistBinning => "hist_binning",
            CalibratorKind::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sauc" => Ok(CalibratorKind::Sauc),
            "qr" => Ok(CalibratorKind::Qr),
            "isotonic" => Ok(CalibratorKind::Isotonic),
            "platt" => Ok(CalibratorKind::Platt),
            "temp_scaling" | "temp-scaling" | "temp" => Ok(CalibratorKind::TempScaling),
            "hist_binning" | "hist-binning" | "histbin" => Ok(CalibratorKind::HistBinning),
            "identity" => Ok(CalibratorKind::Identity),
            other => Err(Error::domain(format!("unknown calibrator `{other}`"))),
        }
    }

    pub fn all() -> [CalibratorKind; 7] {
        [
            CalibratorKind::Sauc,
            CalibratorKind::Qr,
            CalibratorKind::Isotonic,
            CalibratorKind::Platt,
            CalibratorKind::TempScaling,
            CalibratorKind::HistBinning,
            CalibratorKind::Identity,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Zero,
    NonZero,
}

/// Which quantity the bin thresholds are computed from. Routing always uses
/// the predicted mean (the only per-point feature observable at test time);
/// `CalibTargets` keeps the alternate reading where the edges come from the
/// calibration targets' percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinOn {
    #[default]
    MuHat,
    CalibTargets,
}

/// Post-calibration point prediction policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuStarMode {
    /// Midpoint of the calibrated band (clamped at 0 for count families).
    #[default]
    Midpoint,
    /// Keep the raw predicted mean.
    Passthrough,
}

/// Knobs for the segmented calibrator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaucOptions {
    pub n_bins: usize,
    /// Set to `f64::NEG_INFINITY` to disable the zero/non-zero split.
    pub zero_threshold: f64,
    pub bin_on: BinOn,
    pub mu_star: MuStarMode,
}

impl Default for SaucOptions {
    fn default() -> Self {
        SaucOptions {
            n_bins: DEFAULT_N_BINS,
            zero_threshold: DEFAULT_ZERO_THRESHOLD,
            bin_on: BinOn::default(),
            mu_star: MuStarMode::default(),
        }
    }
}

/// An affine map stored in model files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub intercept: f64,
    pub slope: f64,
}

impl From<&QuantileFit> for LineParams {
    fn from(f: &QuantileFit) -> Self {
        LineParams { intercept: f.intercept, slope: f.slope }
    }
}

impl LineParams {
    fn apply(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// One (bin, segment) cell of the segmented calibrator. Cells without enough
/// calibration points fall back to the pre-calibration interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaucCell {
    pub bin: usize,
    pub segment: Segment,
    pub p05: Option<LineParams>,
    pub p95: Option<LineParams>,
    pub n_points: usize,
    pub fallback: bool,
}

/// A fitted calibration map, serializable as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorModel {
    pub kind: CalibratorKind,
    pub n_bins: usize,
    /// `None` means the zero/non-zero split is disabled.
    pub zero_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub cells: Vec<SaucCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qr_low: Option<LineParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qr_high: Option<LineParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotonic_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub isotonic_g: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platt_a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platt_b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_shifts: Option<Vec<f64>>,
    #[serde(default)]
    pub mu_star_mode: MuStarMode,
}

impl CalibratorModel {
    fn empty(kind: CalibratorKind, n_bins: usize) -> Self {
        CalibratorModel {
            kind,
            n_bins,
            zero_threshold: None,
            thresholds: Vec::new(),
            cells: Vec::new(),
            qr_low: None,
            qr_high: None,
            isotonic_x: None,
            isotonic_g: None,
            platt_a: None,
            platt_b: None,
            temperature: None,
            bin_shifts: None,
            mu_star_mode: MuStarMode::default(),
        }
    }

    /// Short identifier used in report provenance.
    pub fn calibrator_id(&self) -> String {
        match self.kind {
            CalibratorKind::Sauc => match self.zero_threshold {
                Some(zt) => format!("sauc-b{}-zt{zt}", self.n_bins),
                None => format!("sauc-b{}-nosplit", self.n_bins),
            },
            CalibratorKind::HistBinning => format!("hist_binning-b{}", self.n_bins),
            other => other.as_str().to_string(),
        }
    }
}

/// Per-point calibrated `[lower, upper]` band and point prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub node: u32,
    pub timestep: u32,
    pub mu_star: f64,
    pub lower: f64,
    pub upper: f64,
}

impl IntervalRow {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedIntervals {
    pub model_id: String,
    pub calibrator_id: String,
    node_ids: Vec<String>,
    rows: Vec<IntervalRow>,
}

impl CalibratedIntervals {
    pub fn new(
        model_id: String,
        calibrator_id: String,
        node_ids: Vec<String>,
        rows: Vec<IntervalRow>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("calibrated intervals must be non-empty"));
        }
        if let Some(bad) =
            rows.iter().find(|r| r.lower.is_nan() || r.upper.is_nan() || r.lower > r.upper)
        {
            return Err(Error::domain(format!(
                "interval row has lower > upper: {:?}",
                (bad.lower, bad.upper)
            )));
        }
        Ok(CalibratedIntervals { model_id, calibrator_id, node_ids, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[IntervalRow] {
        &self.rows
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    /// CSV `node_id,timestep,mu_star,lower,upper`.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("node_id,timestep,mu_star,lower,upper\n");
        for r in &self.rows {
            let id = &self.node_ids[r.node as usize];
            out.push_str(&format!("{id},{},{},{},{}\n", r.timestep, r.mu_star, r.lower, r.upper));
        }
        out
    }

    pub fn from_csv_str(s: &str, model_id: String, calibrator_id: String) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(s.as_bytes());
        let headers: Vec<&str> = reader.headers()?.iter().collect();
        if headers != ["node_id", "timestep", "mu_star", "lower", "upper"] {
            return Err(Error::Parse { line: 1, msg: "unrecognized intervals CSV header".into() });
        }
        let mut node_ids: Vec<String> = Vec::new();
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let id = record[0].trim().to_string();
            let node = *index.entry(id.clone()).or_insert_with(|| {
                node_ids.push(id);
                (node_ids.len() - 1) as u32
            });
            let parse_f = |i: usize| -> Result<f64> {
                record[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse { line, msg: format!("malformed number `{}`", &record[i]) })
            };
            let timestep = record[1]
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::Parse { line, msg: format!("malformed timestep `{}`", &record[1]) })?;
            rows.push(IntervalRow {
                node,
                timestep,
                mu_star: parse_f(2)?,
                lower: parse_f(3)?,
                upper: parse_f(4)?,
            });
        }
        CalibratedIntervals::new(model_id, calibrator_id, node_ids, rows)
    }
}

// ─── shared helpers ─────────────────────────────────────────────────────────

/// Quantile edges splitting `values` into `k` groups: the `i/k` empirical
/// quantiles (smallest order statistic with at least that cumulative mass)
/// for `i in 1..k`.
pub(crate) fn quantile_edges(values: &[f64], k: usize) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    (1..k)
        .map(|i| {
            let q = i as f64 / k as f64;
            let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
            sorted[idx]
        })
        .collect()
}

/// Bin index of `x` given ascending edges; ties route upward, values outside
/// the edge range clamp to the first/last bin.
pub(crate) fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|&e| e <= x)
}

/// Swap crossed bounds, then clamp at zero for count families (including the
/// point prediction).
fn finalize_row(is_count: bool, mu_star: f64, lower: f64, upper: f64) -> (f64, f64, f64) {
    let (mut lo, mut hi) = if lower <= upper { (lower, upper) } else { (upper, lower) };
    let mut m = mu_star;
    if is_count {
        lo = lo.max(0.0);
        hi = hi.max(lo);
        m = m.max(0.0);
    }
    (m, lo, hi)
}

/// Pre-calibration intervals of a forecast set: per-point distribution
/// quantiles at 5%/95% with the mean as point prediction. Distinct parameter
/// vectors are memoized; seasonal forecasts repeat heavily.
pub fn pre_intervals(fc: &ForecastSet) -> Result<CalibratedIntervals> {
    let mut memo: HashMap<(u64, u64, u64), PredictionInterval> = HashMap::new();
    let mut rows = Vec::with_capacity(fc.len());
    for i in 0..fc.len() {
        let d = fc.dists()[i];
        let key = match d {
            PredictiveDistribution::NegBinomial { mu, alpha } => (0u64, mu.to_bits(), alpha.to_bits()),
            PredictiveDistribution::Poisson { lambda } => (1, lambda.to_bits(), 0),
            PredictiveDistribution::Gaussian { mu, sigma } => (2, mu.to_bits(), sigma.to_bits()),
        };
        let iv = match memo.get(&key) {
            Some(iv) => *iv,
            None => {
                let iv = d.interval(LO_P, HI_P)?;
                memo.insert(key, iv);
                iv
            }
        };
        rows.push(IntervalRow {
            node: fc.nodes()[i],
            timestep: fc.timesteps()[i],
            mu_star: iv.point,
            lower: iv.lower,
            upper: iv.upper,
        });
    }
    CalibratedIntervals::new(fc.model_id.clone(), "pre".into(), fc.node_ids().to_vec(), rows)
}

fn check_calib_inputs(fc: &ForecastSet, y: &[f64]) -> Result<()> {
    if fc.is_empty() || y.is_empty() {
        return Err(Error::domain("calibration set must be non-empty"));
    }
    if fc.len() != y.len() {
        return Err(Error::domain(format!(
            "forecasts ({}) and targets ({}) have different lengths",
            fc.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite calibration target"));
    }
    Ok(())
}

// ─── segmented quantile-regression calibrator ───────────────────────────────

/// Fit the segmented calibrator: quantile-edge bins over the calibration
/// predicted means, a zero/non-zero split inside each bin, and a (5%, 95%)
/// quantile-line pair per cell with at least two points.
pub fn fit_sauc(fc_calib: &ForecastSet, y_calib: &[f64], opts: &SaucOptions) -> Result<CalibratorModel> {
    check_calib_inputs(fc_calib, y_calib)?;
    if opts.n_bins == 0 {
        return Err(Error::domain("n_bins must be >= 1"));
    }
    if opts.zero_threshold.is_nan() {
        return Err(Error::domain("zero_threshold must not be NaN"));
    }
    let mu = fc_calib.means();
    let thresholds = match opts.bin_on {
        BinOn::MuHat => quantile_edges(&mu, opts.n_bins),
        BinOn::CalibTargets => quantile_edges(y_calib, opts.n_bins),
    };
    let split_enabled = opts.zero_threshold.is_finite();
    let zero_threshold = split_enabled.then_some(opts.zero_threshold);

    // Bucket calibration indices per (bin, segment).
    let segments: &[Segment] =
        if split_enabled { &[Segment::Zero, Segment::NonZero] } else { &[Segment::NonZero] };
    let n_cells = opts.n_bins * segments.len();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    for (i, &m) in mu.iter().enumerate() {
        let bin = bin_of(&thresholds, m);
        let seg = segment_of(zero_threshold, m);
        members[cell_index(bin, seg, split_enabled)].push(i);
    }

    let mut cells = Vec::with_capacity(n_cells);
    for bin in 0..opts.n_bins {
        for &segment in segments {
            let idx = &members[cell_index(bin, segment, split_enabled)];
            let n_points = idx.len();
            if n_points < 2 {
                cells.push(SaucCell { bin, segment, p05: None, p95: None, n_points, fallback: true });
                continue;
            }
            let xs: Vec<f64> = idx.iter().map(|&i| mu[i]).collect();
            let ys: Vec<f64> = idx.iter().map(|&i| y_calib[i]).collect();
            let lo = fit_quantile(&xs, &ys, LO_P)?;
            let hi = fit_quantile(&xs, &ys, HI_P)?;
            cells.push(SaucCell {
                bin,
                segment,
                p05: Some(LineParams::from(&lo)),
                p95: Some(LineParams::from(&hi)),
                n_points,
                fallback: false,
            });
        }
    }

    let mut model = CalibratorModel::empty(CalibratorKind::Sauc, opts.n_bins);
    model.zero_threshold = zero_threshold;
    model.thresholds = thresholds;
    model.cells = cells;
    model.mu_star_mode = opts.mu_star;
    Ok(model)
}

fn segment_of(zero_threshold: Option<f64>, mu: f64) -> Segment {
    match zero_threshold {
        Some(zt) if mu < zt => Segment::Zero,
        _ => Segment::NonZero,
    }
}

fn cell_index(bin: usize, segment: Segment, split_enabled: bool) -> usize {
    if split_enabled {
        bin * 2 + if segment == Segment::Zero { 0 } else { 1 }
    } else {
        bin
    }
}

/// Route each test point through the fitted thresholds and apply its cell's
/// quantile lines. Fallback cells return the pre-calibration interval.
pub fn apply_sauc(model: &CalibratorModel, fc_test: &ForecastSet) -> Result<CalibratedIntervals> {
    if model.kind != CalibratorKind::Sauc {
        return Err(Error::state(format!("expected a sauc model, got {}", model.kind.as_str())));
    }
    if model.cells.is_empty() {
        return Err(Error::state("calibrator model has no fitted cells"));
    }
    let split_enabled = model.zero_threshold.is_some();
    let n_cells = model.n_bins * if split_enabled { 2 } else { 1 };
    let mut lookup: Vec<Option<&SaucCell>> = vec![None; n_cells];
    for cell in &model.cells {
        lookup[cell_index(cell.bin, cell.segment, split_enabled)] = Some(cell);
    }

    let pre = pre_intervals(fc_test)?;
    let is_count = fc_test.family().is_count();
    let mut rows = Vec::with_capacity(fc_test.len());
    for (i, pre_row) in pre.rows().iter().enumerate() {
        let mu_hat = fc_test.dists()[i].mean();
        let bin = bin_of(&model.thresholds, mu_hat);
        let seg = segment_of(model.zero_threshold, mu_hat);
        let cell = lookup[cell_index(bin, seg, split_enabled)]
            .ok_or_else(|| Error::state(format!("no cell recorded for bin {bin}")))?;
        let row = match (&cell.p05, &cell.p95) {
            (Some(lo), Some(hi)) => {
                let lower = lo.apply(mu_hat);
                let upper = hi.apply(mu_hat);
                let mu_star_raw = match model.mu_star_mode {
                    MuStarMode::Midpoint => {
                        let (l, u) = if lower <= upper { (lower, upper) } else { (upper, lower) };
                        let (l, u) = if is_count { (l.max(0.0), u.max(l.max(0.0))) } else { (l, u) };
                        0.5 * (l + u)
                    }
                    MuStarMode::Passthrough => mu_hat,
                };
                let (m, l, u) = finalize_row(is_count, mu_star_raw, lower, upper);
                IntervalRow { node: pre_row.node, timestep: pre_row.timestep, mu_star: m, lower: l, upper: u }
            }
            _ => *pre_row,
        };
        rows.push(row);
    }
    CalibratedIntervals::new(
        fc_test.model_id.clone(),
        model.calibrator_id(),
        fc_test.node_ids().to_vec(),
        rows,
    )
}

// ─── baselines ──────────────────────────────────────────────────────────────

/// Global quantile-regression baseline: one (5%, 95%) line pair fitted on the
/// whole calibration set, no binning, no segmentation.
pub fn fit_apply_qr_baseline(
    fc_calib: &ForecastSet,
    y_calib: &[f64],
    fc_test: &ForecastSet,
) -> Result<(CalibratorModel, CalibratedIntervals)> {
    check_calib_inputs(fc_calib, y_calib)?;
    let mu = fc_calib.means();
    if mu.len() < 2 {
        return Err(Error::domain("qr baseline needs at least 2 calibration points"));
    }
    let lo = fit_quantile(&mu, y_calib, LO_P)?;
    let hi = fit_quantile(&mu, y_calib, HI_P)?;

    let mut model = CalibratorModel::empty(CalibratorKind::Qr, 1);
    model.qr_low = Some(LineParams::from(&lo));
    model.qr_high = Some(LineParams::from(&hi));

    let is_count = fc_test.family().is_count();
    let rows = fc_test
        .dists()
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let mu_hat = d.mean();
            let lower = lo.apply(mu_hat);
            let upper = hi.apply(mu_hat);
            let (l0, u0) = if lower <= upper { (lower, upper) } else { (upper, lower) };
            let (l0, u0) = if is_count { (l0.max(0.0), u0.max(l0.max(0.0))) } else { (l0, u0) };
            let (m, l, u) = finalize_row(is_count, 0.5 * (l0 + u0), lower, upper);
            IntervalRow { node: fc_test.nodes()[i], timestep: fc_test.timesteps()[i], mu_star: m, lower: l, upper: u }
        })
        .collect();
    let intervals = CalibratedIntervals::new(
        fc_test.model_id.clone(),
        model.calibrator_id(),
        fc_test.node_ids().to_vec(),
        rows,
    )?;
    Ok((model, intervals))
}

/// Pool-adjacent-violators isotonic fit of targets against predicted means;
/// the fitted step function is applied to the point prediction and both
/// pre-calibration interval endpoints.
pub fn fit_apply_isotonic(
    fc_calib: &ForecastSet,
    y_calib: &[f64],
    fc_test: &ForecastSet,
) -> Result<(CalibratorModel, CalibratedIntervals)> {
    check_calib_inputs(fc_calib, y_calib)?;
    let mu = fc_calib.means();
    let (knots_x, knots_g) = pava_fit(&mu, y_calib);

    let mut model = CalibratorModel::empty(CalibratorKind::Isotonic, 1);
    model.isotonic_x = Some(knots_x.clone());
    model.isotonic_g = Some(knots_g.clone());

    let g = |x: f64| step_interpolate(&knots_x, &knots_g, x);
    let intervals = transform_intervals(fc_test, model.calibrator_id(), g)?;
    Ok((model, intervals))
}

/// Weighted PAVA over distinct x values (exact ties are pooled first).
/// Returns `(knots_x, fitted_values)` with `fitted_values` non-decreasing.
fn pava_fit(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite"));

    // Pool exact x ties: the fitted map must be a function of x.
    let mut knots_x: Vec<f64> = Vec::new();
    let mut sums: Vec<(f64, f64)> = Vec::new(); // (sum_y, weight)
    for &i in &order {
        if knots_x.last() == Some(&x[i]) {
            let last = sums.last_mut().expect("non-empty");
            last.0 += y[i];
            last.1 += 1.0;
        } else {
            knots_x.push(x[i]);
            sums.push((y[i], 1.0));
        }
    }

    // Stack-based pooling: merge while the last block mean drops below its
    // predecessor's.
    let mut blocks: Vec<(f64, f64, usize)> = Vec::new(); // (sum, weight, n_knots)
    for &(sy, w) in &sums {
        blocks.push((sy, w, 1));
        while blocks.len() >= 2 {
            let last = blocks[blocks.len() - 1];
            let prev = blocks[blocks.len() - 2];
            if last.0 / last.1 < prev.0 / prev.1 {
                blocks.pop();
                blocks.pop();
                blocks.push((prev.0 + last.0, prev.1 + last.1, prev.2 + last.2));
            } else {
                break;
            }
        }
    }

    let mut values = Vec::with_capacity(knots_x.len());
    for &(sum, w, n) in &blocks {
        let v = sum / w;
        values.extend(std::iter::repeat_n(v, n));
    }
    (knots_x, values)
}

/// Right-continuous step interpolation: the value of the last knot at or
/// below `x` (first knot's value below the range).
fn step_interpolate(knots_x: &[f64], values: &[f64], x: f64) -> f64 {
    let idx = knots_x.partition_point(|&k| k <= x);
    if idx == 0 {
        values[0]
    } else {
        values[idx - 1]
    }
}

/// Platt-style affine recalibration `g(v) = a v + b` fitted by least squares.
pub fn fit_apply_platt(
    fc_calib: &ForecastSet,
    y_calib: &[f64],
    fc_test: &ForecastSet,
) -> Result<(CalibratorModel, CalibratedIntervals)> {
    check_calib_inputs(fc_calib, y_calib)?;
    let mu = fc_calib.means();
    let (a, b) = least_squares_line(&mu, y_calib);

    let mut model = CalibratorModel::empty(CalibratorKind::Platt, 1);
    model.platt_a = Some(a);
    model.platt_b = Some(b);

    let intervals = transform_intervals(fc_test, model.calibrator_id(), |v| a * v + b)?;
    Ok((model, intervals))
}

fn least_squares_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let x_mean = x.iter().sum::<f64>() / n;
    let y_mean = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|&v| (v - x_mean) * (v - x_mean)).sum();
    if sxx == 0.0 {
        // Degenerate predictor: the best affine map is the constant mean.
        return (0.0, y_mean);
    }
    let sxy: f64 = x.iter().zip(y).map(|(&xi, &yi)| (xi - x_mean) * (yi - y_mean)).sum();
    let a = sxy / sxx;
    (a, y_mean - a * x_mean)
}

/// Temperature scaling `g(v) = v / T` with the closed-form least-squares
/// temperature; degenerate calibration targets fall back to `T = 1`.
pub fn fit_apply_temp(
    fc_calib: &ForecastSet,
    y_calib: &[f64],
    fc_test: &ForecastSet,
) -> Result<(CalibratorModel, CalibratedIntervals)> {
    check_calib_inputs(fc_calib, y_calib)?;
    let mu = fc_calib.means();
    let sxy: f64 = mu.iter().zip(y_calib).map(|(&m, &y)| m * y).sum();
    let sxx: f64 = mu.iter().map(|&m| m * m).sum();
    let t = if sxy > 0.0 { sxx / sxy } else { 1.0 };

    let mut model = CalibratorModel::empty(CalibratorKind::TempScaling, 1);
    model.temperature = Some(t);

    let intervals = transform_intervals(fc_test, model.calibrator_id(), |v| v / t)?;
    Ok((model, intervals))
}

/// Histogram binning: quantile-edge bins over calibration predicted means,
/// each bin shifted additively by its mean target minus mean prediction.
pub fn fit_apply_histbin(
    fc_calib: &ForecastSet,
    y_calib: &[f64],
    fc_test: &ForecastSet,
    n_bins: usize,
) -> Result<(CalibratorModel, CalibratedIntervals)> {
    check_calib_inputs(fc_calib, y_calib)?;
    if n_bins == 0 {
        return Err(Error::domain("n_bins must be >= 1"));
    }
    let mu = fc_calib.means();
    let edges = quantile_edges(&mu, n_bins);
    let mut sums = vec![(0.0f64, 0.0f64, 0usize); n_bins]; // (sum_y, sum_mu, n)
    for (i, &m) in mu.iter().enumerate() {
        let b = bin_of(&edges, m);
        sums[b].0 += y_calib[i];
        sums[b].1 += m;
        sums[b].2 += 1;
    }
    let shifts: Vec<f64> = sums
        .iter()
        .map(|&(sy, sm, n)| if n == 0 { 0.0 } else { (sy - sm) / n as f64 })
        .collect();

    let mut model = CalibratorModel::empty(CalibratorKind::HistBinning, n_bins);
    model.thresholds = edges.clone();
    model.bin_shifts = Some(shifts.clone());

    let is_count = fc_test.family().is_count();
    let pre = pre_intervals(fc_test)?;
    let rows = pre
        .rows()
        .iter()
        .map(|r| {
            let shift = shifts[bin_of(&edges, r.mu_star)];
            let (m, l, u) = finalize_row(is_count, r.mu_star + shift, r.lower + shift, r.upper + shift);
            IntervalRow { node: r.node, timestep: r.timestep, mu_star: m, lower: l, upper: u }
        })
        .collect();
    let intervals = CalibratedIntervals::new(
        fc_test.model_id.clone(),
        model.calibrator_id(),
        fc_test.node_ids().to_vec(),
        rows,
    )?;
    Ok((model, intervals))
}

/// Identity calibrator: reproduces the pre-calibration intervals exactly.
pub fn fit_apply_identity(fc_test: &ForecastSet) -> Result<(CalibratorModel, CalibratedIntervals)> {
    let model = CalibratorModel::empty(CalibratorKind::Identity, 1);
    let mut intervals = pre_intervals(fc_test)?;
    intervals.calibrator_id = model.calibrator_id();
    Ok((model, intervals))
}

/// Apply a monotone (or at least pointwise) transform to the point prediction
/// and both pre-calibration endpoints, then swap/clamp.
fn transform_intervals(
    fc_test: &ForecastSet,
    calibrator_id: String,
    g: impl Fn(f64) -> f64,
) -> Result<CalibratedIntervals> {
    let is_count = fc_test.family().is_count();
    let pre = pre_intervals(fc_test)?;
    let rows = pre
        .rows()
        .iter()
        .map(|r| {
            let (m, l, u) = finalize_row(is_count, g(r.mu_star), g(r.lower), g(r.upper));
            IntervalRow { node: r.node, timestep: r.timestep, mu_star: m, lower: l, upper: u }
        })
        .collect();
    CalibratedIntervals::new(fc_test.model_id.clone(), calibrator_id, fc_test.node_ids().to_vec(), rows)
}

/// Fit and apply any calibrator by kind. `opts.n_bins` feeds both the
/// segmented calibrator and histogram binning.
pub fn fit_apply(
    kind: CalibratorKind,
    fc_calib: &ForecastSet,
    y_calib: &[f64],
    fc_test: &ForecastSet,
    opts: &SaucOptions,
) -> Result<(CalibratorModel, CalibratedIntervals)> {
    match kind {
        CalibratorKind::Sauc => {
            let model = fit_sauc(fc_calib, y_calib, opts)?;
            let intervals = apply_sauc(&model, fc_test)?;
            Ok((model, intervals))
        }
        CalibratorKind::Qr => fit_apply_qr_baseline(fc_calib, y_calib, fc_test),
        CalibratorKind::Isotonic => fit_apply_isotonic(fc_calib, y_calib, fc_test),
        CalibratorKind::Platt => fit_apply_platt(fc_calib, y_calib, fc_test),
        CalibratorKind::TempScaling => fit_apply_temp(fc_calib, y_calib, fc_test),
        CalibratorKind::HistBinning => fit_apply_histbin(fc_calib, y_calib, fc_test, opts.n_bins),
        CalibratorKind::Identity => fit_apply_identity(fc_test),
    }
}

/// Empirical CDF diagnostic: per point `p_i = F_i(y_i)`, then for each grid
/// level `p` in `{0.01, ..., 0.99}` the fraction of `p_i <= p`.
pub fn empirical_cdf_curve(fc: &ForecastSet, y: &[f64]) -> Result<Vec<(f64, f64)>> {
    check_calib_inputs(fc, y)?;
    let p_values: Vec<f64> = fc.dists().iter().zip(y).map(|(d, &yi)| d.cdf(yi)).collect();
    let n = p_values.len() as f64;
    Ok((1..=99)
        .map(|i| {
            let p = i as f64 / 100.0;
            let frac = p_values.iter().filter(|&&pi| pi <= p).count() as f64 / n;
            (p, frac)
        })
        .collect())
}
