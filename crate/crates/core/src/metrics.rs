//! Interval-based evaluation: ENCE, coverage, reliability data, risk scores.
//!
//! ENCE partitions the evaluated points into evenly sized bins by sorted
//! interval width and compares each bin's RMSE against `c * MPIW`:
//!
//! ```text
//! ENCE = (1/N) sum_j |c * MPIW(j) - RMSE(j)| / (c * MPIW(j))
//! ```
//!
//! `c` defaults to `1 / 3.29`, the reciprocal width of a centered 90% band
//! in standard-error units. Coverage counts targets inside the closed
//! `[lower, upper]` band against the 0.9 target.

use serde::{Deserialize, Serialize};

use crate::calib::CalibratedIntervals;
use crate::error::{Error, Result};

/// Default width-to-standard-error factor (`1 / 3.29`), printed by reports.
pub const DEFAULT_C: f64 = 1.0 / 3.29;

/// Nominal coverage of the calibrated band.
pub const TARGET_COVERAGE: f64 = 0.9;

/// Target filter applied before binning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsFilter {
    #[default]
    All,
    ZeroOnly,
    NonzeroOnly,
}

impl MetricsFilter {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricsFilter::All => "all",
            MetricsFilter::ZeroOnly => "zero_only",
            MetricsFilter::NonzeroOnly => "nonzero_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(MetricsFilter::All),
            "zero" | "zero_only" => Ok(MetricsFilter::ZeroOnly),
            "nonzero" | "nonzero_only" => Ok(MetricsFilter::NonzeroOnly),
            other => Err(Error::domain(format!("unknown filter `{other}`"))),
        }
    }

    fn keeps(self, y: f64) -> bool {
        match self {
            MetricsFilter::All => true,
            MetricsFilter::ZeroOnly => y == 0.0,
            MetricsFilter::NonzeroOnly => y != 0.0,
        }
    }
}

/// Per-bin reliability statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin: usize,
    pub n: usize,
    pub rmse: f64,
    pub mpiw: f64,
    pub width_min: f64,
    pub width_max: f64,
}

/// Full evaluation report for one (intervals, targets) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ence: f64,
    pub c: f64,
    pub coverage: f64,
    pub c_star: f64,
    pub n_bins: usize,
    /// Bins left out of the ENCE average (zero MPIW or empty).
    pub excluded_bins: usize,
    pub filter: MetricsFilter,
    pub bins: Vec<BinStats>,
    /// Least-squares slope of RMSE against MPIW across bins, when defined.
    pub slope: Option<f64>,
    pub n_points: usize,
    #[serde(default)]
    pub dataset_id: String,
    #[serde(default)]
    pub calibrator_id: String,
    #[serde(default)]
    pub config_hash: String,
}

fn filtered_indices(y: &[f64], filter: MetricsFilter) -> Vec<usize> {
    (0..y.len()).filter(|&i| filter.keeps(y[i])).collect()
}

/// Indices grouped into `k` evenly sized bins by ascending interval width
/// (ties keep original order). Sizes differ by at most one, with remainder
/// points assigned one per bin from the first bin.
fn width_sorted_bins(widths: &[f64], indices: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = indices.to_vec();
    order.sort_by(|&a, &b| {
        widths[a].partial_cmp(&widths[b]).expect("finite widths").then(a.cmp(&b))
    });
    let n = order.len();
    let base = n / k;
    let rem = n % k;
    let mut bins = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let size = base + usize::from(j < rem);
        bins.push(order[start..start + size].to_vec());
        start += size;
    }
    bins
}

fn check_inputs(intervals: &CalibratedIntervals, y: &[f64]) -> Result<()> {
    if intervals.len() != y.len() {
        return Err(Error::domain(format!(
            "intervals ({}) and targets ({}) have different lengths",
            intervals.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite target"));
    }
    Ok(())
}

fn bin_stats(intervals: &CalibratedIntervals, y: &[f64], members: &[usize], bin: usize) -> BinStats {
    let rows = intervals.rows();
    let n = members.len();
    let mut sq = 0.0;
    let mut wsum = 0.0;
    let mut wmin = f64::INFINITY;
    let mut wmax = f64::NEG_INFINITY;
    for &i in members {
        let r = &rows[i];
        let resid = r.mu_star - y[i];
        sq += resid * resid;
        let w = r.width();
        wsum += w;
        wmin = wmin.min(w);
        wmax = wmax.max(w);
    }
    BinStats {
        bin,
        n,
        rmse: (sq / n as f64).sqrt(),
        mpiw: wsum / n as f64,
        width_min: wmin,
        width_max: wmax,
    }
}

/// Expected normalized calibration error plus the full per-bin report.
///
/// Points are filtered first (`zero_only` restricts to true-zero targets,
/// then bins), sorted by interval width, and split into `n_bins` evenly
/// sized bins. Bins with zero mean width are excluded from the average and
/// surfaced in `excluded_bins`; if every bin is excluded the metric is
/// undefined.
pub fn ence(
    intervals: &CalibratedIntervals,
    y: &[f64],
    n_bins: usize,
    c: f64,
    filter: MetricsFilter,
) -> Result<MetricsReport> {
    check_inputs(intervals, y)?;
    if n_bins == 0 {
        return Err(Error::domain("n_bins must be >= 1"));
    }
    if !c.is_finite() || c <= 0.0 {
        return Err(Error::domain(format!("c must be finite and > 0, got {c}")));
    }
    let indices = filtered_indices(y, filter);
    if indices.is_empty() {
        return Err(Error::domain(format!("no points left under filter `{}`", filter.as_str())));
    }

    let widths: Vec<f64> = intervals.rows().iter().map(|r| r.width()).collect();
    let groups = width_sorted_bins(&widths, &indices, n_bins);

    let mut bins = Vec::new();
    let mut excluded = 0usize;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (j, members) in groups.iter().enumerate() {
        if members.is_empty() {
            excluded += 1;
            continue;
        }
        let stats = bin_stats(intervals, y, members, j);
        if stats.mpiw > 0.0 {
            total += (c * stats.mpiw - stats.rmse).abs() / (c * stats.mpiw);
            counted += 1;
        } else {
            excluded += 1;
        }
        bins.push(stats);
    }
    if counted == 0 {
        return Err(Error::MetricUndefined(
            "every bin has zero interval width; ENCE is undefined".into(),
        ));
    }

    let (cov, c_star) = coverage_of(intervals, y, &indices);
    let slope = slope_of(&bins);
    Ok(MetricsReport {
        ence: total / counted as f64,
        c,
        coverage: cov,
        c_star,
        n_bins,
        excluded_bins: excluded,
        filter,
        bins,
        slope,
        n_points: indices.len(),
        dataset_id: String::new(),
        calibrator_id: intervals.calibrator_id.clone(),
        config_hash: String::new(),
    })
}

fn coverage_of(intervals: &CalibratedIntervals, y: &[f64], indices: &[usize]) -> (f64, f64) {
    let rows = intervals.rows();
    let inside = indices
        .iter()
        .filter(|&&i| rows[i].lower <= y[i] && y[i] <= rows[i].upper)
        .count();
    let cov = inside as f64 / indices.len() as f64;
    (cov, (TARGET_COVERAGE - cov).abs())
}

fn slope_of(bins: &[BinStats]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = bins.iter().filter(|b| b.n > 0).map(|b| (b.mpiw, b.rmse)).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let x_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - x_mean) * (p.0 - x_mean)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    Some(sxy / sxx)
}

/// Fraction of targets inside the closed `[lower, upper]` band, and the
/// absolute gap to the 0.9 target.
pub fn coverage(intervals: &CalibratedIntervals, y: &[f64]) -> Result<(f64, f64)> {
    check_inputs(intervals, y)?;
    if y.is_empty() {
        return Err(Error::domain("coverage of an empty set is undefined"));
    }
    let indices: Vec<usize> = (0..y.len()).collect();
    Ok(coverage_of(intervals, y, &indices))
}

/// Per-point risk score `mu_star * (upper - lower)`.
pub fn risk_scores(intervals: &CalibratedIntervals) -> Vec<f64> {
    intervals.rows().iter().map(|r| r.mu_star * r.width()).collect()
}

/// Risk scores averaged over the temporal dimension, one entry per node id.
pub fn risk_by_node(intervals: &CalibratedIntervals) -> Vec<(String, f64)> {
    let n_nodes = intervals.node_ids().len();
    let mut sums = vec![(0.0f64, 0usize); n_nodes];
    for r in intervals.rows() {
        let e = &mut sums[r.node as usize];
        e.0 += r.mu_star * r.width();
        e.1 += 1;
    }
    intervals
        .node_ids()
        .iter()
        .zip(&sums)
        .filter(|(_, &(_, n))| n > 0)
        .map(|(id, &(s, n))| (id.clone(), s / n as f64))
        .collect()
}

/// One reliability-diagram point per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityPoint {
    pub bin: usize,
    pub c_mpiw: f64,
    pub rmse: f64,
    pub n: usize,
}

/// Per-bin `(c * MPIW, RMSE)` pairs for plotting against the diagonal.
pub fn reliability_curve(
    intervals: &CalibratedIntervals,
    y: &[f64],
    n_bins: usize,
    c: f64,
) -> Result<Vec<ReliabilityPoint>> {
    let report = ence(intervals, y, n_bins, c, MetricsFilter::All)?;
    Ok(report
        .bins
        .iter()
        .map(|b| ReliabilityPoint { bin: b.bin, c_mpiw: c * b.mpiw, rmse: b.rmse, n: b.n })
        .collect())
}

/// Least-squares slope of per-group RMSE against MPIW — the empirical
/// estimate of the width-to-error constant.
pub fn width_rmse_slope(intervals: &CalibratedIntervals, y: &[f64], n_groups: usize) -> Result<f64> {
    check_inputs(intervals, y)?;
    if n_groups < 2 {
        return Err(Error::domain("width_rmse_slope needs at least 2 groups"));
    }
    let indices: Vec<usize> = (0..y.len()).collect();
    if indices.is_empty() {
        return Err(Error::domain("width_rmse_slope of an empty set is undefined"));
    }
    let widths: Vec<f64> = intervals.rows().iter().map(|r| r.width()).collect();
    let groups = width_sorted_bins(&widths, &indices, n_groups);
    let bins: Vec<BinStats> = groups
        .iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(j, m)| bin_stats(intervals, y, m, j))
        .collect();
    slope_of(&bins).ok_or_else(|| {
        Error::MetricUndefined("width variance across groups is zero; slope undefined".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calib::{pre_intervals, CalibratedIntervals, IntervalRow};
    use crate::data::{counts_to_f64, generate_synthetic, split, SyntheticSpec};
    use crate::forecaster::{oracle_forecast, targets_for, DistortionSpec, SplitTag};

    /// Rows with prescribed (residual, width) pairs against y = 0 targets.
    fn rows_from(pairs: &[(f64, f64)]) -> CalibratedIntervals {
        let rows: Vec<IntervalRow> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(resid, width))| IntervalRow {
                node: 0,
                timestep: i as u32,
                mu_star: resid,
                lower: -width / 2.0,
                upper: width / 2.0,
            })
            .collect();
        CalibratedIntervals::new("m".into(), "c".into(), vec!["n0".into()], rows).unwrap()
    }

    #[test]
    fn ence_zero_when_calibration_identity_holds() {
        // |residual| = c * width pointwise, widths constant within each bin.
        let c = DEFAULT_C;
        let pairs: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let w = (i / 5 + 1) as f64;
                (c * w, w)
            })
            .collect();
        let iv = rows_from(&pairs);
        let y = vec![0.0; 20];
        let report = ence(&iv, &y, 4, c, MetricsFilter::All).unwrap();
        assert!(report.ence < 1e-12, "ence {}", report.ence);
    }

    #[test]
    fn ence_single_bin_arithmetic() {
        // widths 3.29 and residuals 2: c*MPIW = 1, RMSE = 2, ENCE = 1
        let iv = rows_from(&[(2.0, 3.29), (2.0, 3.29), (2.0, 3.29)]);
        let y = vec![0.0; 3];
        let report = ence(&iv, &y, 1, DEFAULT_C, MetricsFilter::All).unwrap();
        assert!((report.ence - 1.0).abs() < 1e-12, "ence {}", report.ence);
    }

    #[test]
    fn ence_hand_built_two_bin_case() {
        // Bin 1 (widths 1): residuals {1, 2, 1}: RMSE = sqrt(2), MPIW = 1
        // Bin 2 (widths 4): residuals {2, 1, 2}: RMSE = sqrt(3), MPIW = 4
        let iv = rows_from(&[(1.0, 1.0), (2.0, 1.0), (1.0, 1.0), (2.0, 4.0), (1.0, 4.0), (2.0, 4.0)]);
        let y = vec![0.0; 6];
        let c = DEFAULT_C;
        let report = ence(&iv, &y, 2, c, MetricsFilter::All).unwrap();
        let expected = 0.5
            * ((c * 1.0 - 2.0f64.sqrt()).abs() / (c * 1.0)
                + (c * 4.0 - 3.0f64.sqrt()).abs() / (c * 4.0));
        assert!((report.ence - expected).abs() < 1e-12);
        assert_eq!(report.bins.len(), 2);
        assert_eq!(report.bins[0].n, 3);
    }

    #[test]
    fn ence_scale_invariance() {
        let base: Vec<(f64, f64)> =
            (1..=30).map(|i| ((i % 7) as f64 * 0.3 + 0.1, (i % 5) as f64 + 0.5)).collect();
        let y = vec![0.0; 30];
        let r1 = ence(&rows_from(&base), &y, 5, DEFAULT_C, MetricsFilter::All).unwrap();
        for &k in &[0.5, 3.0] {
            let scaled: Vec<(f64, f64)> = base.iter().map(|&(r, w)| (r * k, w * k)).collect();
            let r2 = ence(&rows_from(&scaled), &y, 5, DEFAULT_C, MetricsFilter::All).unwrap();
            assert!((r1.ence - r2.ence).abs() < 1e-12, "k={k}: {} vs {}", r1.ence, r2.ence);
        }
    }

    #[test]
    fn ence_excludes_zero_width_bins() {
        let iv = rows_from(&[(1.0, 0.0), (1.0, 0.0), (1.0, 2.0), (1.0, 2.0)]);
        let y = vec![0.0; 4];
        let report = ence(&iv, &y, 2, DEFAULT_C, MetricsFilter::All).unwrap();
        assert_eq!(report.excluded_bins, 1);
        let all_zero = rows_from(&[(1.0, 0.0), (1.0, 0.0)]);
        assert!(matches!(
            ence(&all_zero, &[0.0; 2], 1, DEFAULT_C, MetricsFilter::All),
            Err(Error::MetricUndefined(_))
        ));
    }

    #[test]
    fn filters_partition_the_points() {
        let iv = rows_from(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0), (1.0, 4.0)]);
        let y = vec![0.0, 1.0, 0.0, 2.0];
        let all = ence(&iv, &y, 1, DEFAULT_C, MetricsFilter::All).unwrap();
        let zero = ence(&iv, &y, 1, DEFAULT_C, MetricsFilter::ZeroOnly).unwrap();
        let nonzero = ence(&iv, &y, 1, DEFAULT_C, MetricsFilter::NonzeroOnly).unwrap();
        assert_eq!(zero.n_points + nonzero.n_points, all.n_points);
    }

    #[test]
    fn coverage_examples() {
        let iv = rows_from(&[(0.0, 2.0), (0.0, 2.0)]);
        let (cov, c_star) = coverage(&iv, &[0.0, 0.0]).unwrap();
        assert_eq!(cov, 1.0);
        assert!((c_star - 0.1).abs() < 1e-15);

        // degenerate [y, y] intervals still cover
        let rows = vec![IntervalRow { node: 0, timestep: 0, mu_star: 3.0, lower: 3.0, upper: 3.0 }];
        let iv = CalibratedIntervals::new("m".into(), "c".into(), vec!["n0".into()], rows).unwrap();
        assert_eq!(coverage(&iv, &[3.0]).unwrap().0, 1.0);
    }

    #[test]
    fn coverage_order_invariant() {
        let pairs: Vec<(f64, f64)> = (0..10).map(|i| (i as f64 * 0.1, 1.0 + i as f64)).collect();
        let iv = rows_from(&pairs);
        let y: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { 0.0 } else { 10.0 }).collect();
        let (cov, _) = coverage(&iv, &y).unwrap();
        // reverse both rows and targets
        let rev_rows: Vec<IntervalRow> = iv.rows().iter().rev().cloned().collect();
        let rev_iv =
            CalibratedIntervals::new("m".into(), "c".into(), vec!["n0".into()], rev_rows).unwrap();
        let rev_y: Vec<f64> = y.iter().rev().copied().collect();
        assert_eq!(cov, coverage(&rev_iv, &rev_y).unwrap().0);
    }

    #[test]
    fn oracle_nb_coverage_over_covers_mildly() {
        let spec = SyntheticSpec {
            nodes: 10,
            steps: 5000,
            mu: 3.0,
            alpha: 1.0,
            zero_inflation: 0.0,
            seasonal_amplitude: 0.0,
            seasonal_period: 24,
        };
        let (panel, truth) = generate_synthetic(&spec, 17).unwrap();
        let s = split(&panel, (0.6, 0.2, 0.2)).unwrap();
        let fc =
            oracle_forecast(&truth, &panel, &s, SplitTag::Test, DistortionSpec::default()).unwrap();
        assert!(fc.len() >= 10_000);
        let y = counts_to_f64(&targets_for(&panel, &s, SplitTag::Test));
        let iv = pre_intervals(&fc).unwrap();
        let (cov, _) = coverage(&iv, &y).unwrap();
        assert!((0.88..=0.97).contains(&cov), "coverage {cov}");
    }

    #[test]
    fn risk_score_arithmetic() {
        let rows = vec![
            IntervalRow { node: 0, timestep: 0, mu_star: 2.0, lower: 1.0, upper: 4.0 },
            IntervalRow { node: 0, timestep: 1, mu_star: 5.0, lower: 2.0, upper: 2.0 },
        ];
        let iv = CalibratedIntervals::new("m".into(), "c".into(), vec!["n0".into()], rows).unwrap();
        assert_eq!(risk_scores(&iv), vec![6.0, 0.0]);
        let by_node = risk_by_node(&iv);
        assert_eq!(by_node, vec![("n0".to_string(), 3.0)]);
    }

    #[test]
    fn reliability_curve_matches_ence_definition() {
        let pairs: Vec<(f64, f64)> =
            (1..=24).map(|i| ((i % 5) as f64 * 0.4 + 0.2, (i % 6) as f64 + 1.0)).collect();
        let iv = rows_from(&pairs);
        let y = vec![0.0; 24];
        let c = DEFAULT_C;
        let curve = reliability_curve(&iv, &y, 4, c).unwrap();
        let report = ence(&iv, &y, 4, c, MetricsFilter::All).unwrap();
        // x-coordinates non-decreasing
        for w in curve.windows(2) {
            assert!(w[0].c_mpiw <= w[1].c_mpiw + 1e-15);
        }
        // ENCE equals the mean normalized diagonal deviation of the curve
        let recomputed: f64 = curve.iter().map(|pt| (pt.c_mpiw - pt.rmse).abs() / pt.c_mpiw).sum::<f64>()
            / curve.len() as f64;
        assert!((report.ence - recomputed).abs() < 1e-12);
    }

    #[test]
    fn slope_scale_equivariance_and_errors() {
        let pairs: Vec<(f64, f64)> = (1..=40).map(|i| (0.3 * i as f64, i as f64)).collect();
        let iv = rows_from(&pairs);
        let y = vec![0.0; 40];
        let s1 = width_rmse_slope(&iv, &y, 5).unwrap();
        let doubled: Vec<(f64, f64)> = pairs.iter().map(|&(r, w)| (r, 2.0 * w)).collect();
        let s2 = width_rmse_slope(&rows_from(&doubled), &y, 5).unwrap();
        assert!((s2 - s1 / 2.0).abs() < 1e-12);

        let constant: Vec<(f64, f64)> = (1..=10).map(|i| (i as f64, 2.0)).collect();
        assert!(matches!(
            width_rmse_slope(&rows_from(&constant), &[0.0; 10], 5),
            Err(Error::MetricUndefined(_))
        ));
    }

    #[test]
    fn binning_is_even_and_ranges_ordered() {
        let pairs: Vec<(f64, f64)> = (0..17).map(|i| (1.0, (i * 13 % 17) as f64 + 1.0)).collect();
        let iv = rows_from(&pairs);
        let y = vec![0.0; 17];
        let report = ence(&iv, &y, 4, DEFAULT_C, MetricsFilter::All).unwrap();
        let sizes: Vec<usize> = report.bins.iter().map(|b| b.n).collect();
        assert_eq!(sizes, vec![5, 4, 4, 4]);
        for w in report.bins.windows(2) {
            assert!(w[0].width_max <= w[1].width_min);
        }
    }
}
