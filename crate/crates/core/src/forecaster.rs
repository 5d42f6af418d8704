//! Probabilistic forecasters for count panels.
//!
//! The production path is a moment-matched seasonal NB model: per node and
//! per phase-of-period bucket it estimates `(mu, alpha)` from training
//! means and variances. An oracle mode replays the synthetic generator's
//! true distributions, optionally distorted, to produce controllably
//! miscalibrated inputs for the calibration stages.

use serde::{Deserialize, Serialize};

use crate::data::{CountPanel, SplitIndex};
use crate::dist::{Family, PredictiveDistribution, DEFAULT_EPSILON};
use crate::error::{Error, Result};

/// Dispersion cap for near-Poisson buckets (zero or negative excess variance).
pub const ALPHA_MAX: f64 = 1e4;

/// Which panel slice a forecast set covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Calib,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Calib => "calib",
            SplitTag::Test => "test",
        }
    }
}

/// One predictive distribution per (node, timestep) of a split slice.
///
/// All predictions share one family; `(node, timestep)` pairs are unique.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastSet {
    pub split_tag: SplitTag,
    pub model_id: String,
    node_ids: Vec<String>,
    nodes: Vec<u32>,
    timesteps: Vec<u32>,
    dists: Vec<PredictiveDistribution>,
}

impl ForecastSet {
    pub fn from_parts(
        split_tag: SplitTag,
        model_id: String,
        node_ids: Vec<String>,
        nodes: Vec<u32>,
        timesteps: Vec<u32>,
        dists: Vec<PredictiveDistribution>,
    ) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::domain("forecast set must be non-empty"));
        }
        if nodes.len() != dists.len() || timesteps.len() != dists.len() {
            return Err(Error::domain("forecast set columns have unequal lengths"));
        }
        let family = dists[0].family();
        if dists.iter().any(|d| d.family() != family) {
            return Err(Error::domain("all predictions in a forecast set must share one family"));
        }
        if nodes.iter().any(|&n| n as usize >= node_ids.len()) {
            return Err(Error::domain("forecast node index out of range"));
        }
        let mut seen = std::collections::HashSet::with_capacity(dists.len());
        for (&n, &t) in nodes.iter().zip(&timesteps) {
            if !seen.insert(((n as u64) << 32) | t as u64) {
                return Err(Error::domain(format!("duplicate prediction for node {n}, timestep {t}")));
            }
        }
        Ok(ForecastSet { split_tag, model_id, node_ids, nodes, timesteps, dists })
    }

    pub fn len(&self) -> usize {
        self.dists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dists.is_empty()
    }

    pub fn family(&self) -> Family {
        self.dists[0].family()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn dists(&self) -> &[PredictiveDistribution] {
        &self.dists
    }

    pub fn nodes(&self) -> &[u32] {
        &self.nodes
    }

    pub fn timesteps(&self) -> &[u32] {
        &self.timesteps
    }

    /// Predicted means, in row order.
    pub fn means(&self) -> Vec<f64> {
        self.dists.iter().map(|d| d.mean()).collect()
    }

    /// CSV with a family-dependent header
    /// (`node_id,timestep,family,mu,alpha` / `...,lambda` / `...,mu,sigma`).
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        match self.family() {
            Family::NegBinomial => out.push_str("node_id,timestep,family,mu,alpha\n"),
            Family::Poisson => out.push_str("node_id,timestep,family,lambda\n"),
            Family::Gaussian => out.push_str("node_id,timestep,family,mu,sigma\n"),
        }
        for i in 0..self.len() {
            let id = &self.node_ids[self.nodes[i] as usize];
            let t = self.timesteps[i];
            match self.dists[i] {
                PredictiveDistribution::NegBinomial { mu, alpha } => {
                    out.push_str(&format!("{id},{t},nb,{mu},{alpha}\n"));
                }
                PredictiveDistribution::Poisson { lambda } => {
                    out.push_str(&format!("{id},{t},poisson,{lambda}\n"));
                }
                PredictiveDistribution::Gaussian { mu, sigma } => {
                    out.push_str(&format!("{id},{t},gaussian,{mu},{sigma}\n"));
                }
            }
        }
        out
    }

    /// Parse the CSV produced by [`to_csv_string`](Self::to_csv_string).
    /// Node ids are assigned indices by first appearance.
    pub fn from_csv_str(s: &str, split_tag: SplitTag, model_id: String) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(s.as_bytes());
        let headers = reader.headers()?.clone();
        let cols: Vec<&str> = headers.iter().collect();
        let family = match cols.as_slice() {
            ["node_id", "timestep", "family", "mu", "alpha"] => Family::NegBinomial,
            ["node_id", "timestep", "family", "lambda"] => Family::Poisson,
            ["node_id", "timestep", "family", "mu", "sigma"] => Family::Gaussian,
            _ => {
                return Err(Error::Parse { line: 1, msg: "unrecognized forecast CSV header".into() })
            }
        };

        let mut node_ids: Vec<String> = Vec::new();
        let mut index: std::collections::HashMap<String, u32> = std::collections::HashMap::new();
        let (mut nodes, mut timesteps, mut dists) = (Vec::new(), Vec::new(), Vec::new());
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let parse_f = |i: usize| -> Result<f64> {
                record[i]
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse { line, msg: format!("malformed number `{}`", &record[i]) })
            };
            let id = record[0].trim().to_string();
            let node = *index.entry(id.clone()).or_insert_with(|| {
                node_ids.push(id);
                (node_ids.len() - 1) as u32
            });
            let t = record[1]
                .trim()
                .parse::<u32>()
                .map_err(|_| Error::Parse { line, msg: format!("malformed timestep `{}`", &record[1]) })?;
            let row_family = Family::parse(record[2].trim())?;
            if row_family != family {
                return Err(Error::domain(format!("mixed families in forecast CSV at line {line}")));
            }
            let dist = match family {
                Family::NegBinomial => PredictiveDistribution::neg_binomial(parse_f(3)?, parse_f(4)?)?,
                Family::Poisson => PredictiveDistribution::poisson(parse_f(3)?)?,
                Family::Gaussian => PredictiveDistribution::gaussian(parse_f(3)?, parse_f(4)?)?,
            };
            nodes.push(node);
            timesteps.push(t);
            dists.push(dist);
        }
        ForecastSet::from_parts(split_tag, model_id, node_ids, nodes, timesteps, dists)
    }
}

/// Sidecar metadata written next to forecast CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSidecar {
    pub model_id: String,
    pub split_tag: SplitTag,
    pub seed: Option<u64>,
}

/// Targets aligned with a forecast set over the same slice (node-major,
/// timesteps ascending within each node).
pub fn targets_for(panel: &CountPanel, split: &SplitIndex, tag: SplitTag) -> Vec<u32> {
    let range = match tag {
        SplitTag::Calib => split.calib_range(),
        SplitTag::Test => split.test_range(panel.n_steps()),
    };
    let mut out = Vec::with_capacity(panel.n_nodes() * range.len());
    for node in 0..panel.n_nodes() {
        let row = panel.row(node);
        out.extend(row[range.clone()].iter().copied());
    }
    out
}

// ─── seasonal moment-matched NB ─────────────────────────────────────────────

/// Fitted per-(node, phase) NB parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalNbModel {
    pub model_id: String,
    pub period: usize,
    split: SplitIndex,
    node_ids: Vec<String>,
    /// `mu[node * period + phase]`
    mu: Vec<f64>,
    alpha: Vec<f64>,
}

fn mean_var(counts: impl Iterator<Item = u32> + Clone) -> (f64, f64, usize) {
    let mut n = 0usize;
    let mut sum = 0.0;
    for v in counts.clone() {
        n += 1;
        sum += v as f64;
    }
    if n == 0 {
        return (0.0, 0.0, 0);
    }
    let mean = sum / n as f64;
    if n < 2 {
        return (mean, 0.0, n);
    }
    let ss: f64 = counts.map(|v| (v as f64 - mean).powi(2)).sum();
    (mean, ss / (n - 1) as f64, n)
}

fn moment_match(mean: f64, var: f64) -> (f64, f64) {
    let mu = mean.max(DEFAULT_EPSILON);
    let alpha = if var <= mean {
        ALPHA_MAX
    } else {
        (mu * mu / (var - mu).max(DEFAULT_EPSILON)).min(ALPHA_MAX)
    };
    (mu, alpha)
}

/// Fit per-(node, phase) NB parameters on the training slice.
///
/// Buckets with fewer than two observations fall back to node-level
/// statistics, and nodes whose training slice is too short fall back to
/// panel-level statistics.
pub fn fit_seasonal_nb(panel: &CountPanel, split: &SplitIndex, period: usize) -> Result<SeasonalNbModel> {
    if period == 0 {
        return Err(Error::domain("seasonal period must be >= 1"));
    }
    SplitIndex::new(split.train_end, split.calib_end, panel.n_steps())?;
    let train_end = split.train_end;

    let panel_stats = mean_var(
        (0..panel.n_nodes()).flat_map(|n| panel.row(n)[..train_end].iter().copied()),
    );
    let mut mu = Vec::with_capacity(panel.n_nodes() * period);
    let mut alpha = Vec::with_capacity(panel.n_nodes() * period);
    for node in 0..panel.n_nodes() {
        let train = &panel.row(node)[..train_end];
        let node_stats = mean_var(train.iter().copied());
        for phase in 0..period {
            let bucket = train
                .iter()
                .copied()
                .enumerate()
                .filter(move |(t, _)| t % period == phase)
                .map(|(_, v)| v);
            let (m, v, n) = mean_var(bucket);
            let (m, v) = if n >= 2 {
                (m, v)
            } else if node_stats.2 >= 2 {
                (node_stats.0, node_stats.1)
            } else {
                (panel_stats.0, panel_stats.1)
            };
            let (mu_hat, alpha_hat) = moment_match(m, v);
            mu.push(mu_hat);
            alpha.push(alpha_hat);
        }
    }
    Ok(SeasonalNbModel {
        model_id: format!("seasonal-nb-p{period}"),
        period,
        split: *split,
        node_ids: panel.node_ids().to_vec(),
        mu,
        alpha,
    })
}

/// Emit the fitted bucket parameters for every (node, timestep) of the target
/// slice. The model must have been fitted on the same panel and split.
pub fn predict(
    model: &SeasonalNbModel,
    panel: &CountPanel,
    split: &SplitIndex,
    target: SplitTag,
) -> Result<ForecastSet> {
    if model.node_ids != panel.node_ids() {
        return Err(Error::domain("model was fitted on a different panel (node ids differ)"));
    }
    if model.split != *split {
        return Err(Error::domain("model was fitted with a different split"));
    }
    let range = match target {
        SplitTag::Calib => split.calib_range(),
        SplitTag::Test => split.test_range(panel.n_steps()),
    };
    let (mut nodes, mut timesteps, mut dists) = (Vec::new(), Vec::new(), Vec::new());
    for node in 0..panel.n_nodes() {
        for t in range.clone() {
            let k = node * model.period + (t % model.period);
            nodes.push(node as u32);
            timesteps.push(t as u32);
            dists.push(PredictiveDistribution::neg_binomial(model.mu[k], model.alpha[k])?);
        }
    }
    ForecastSet::from_parts(
        target,
        model.model_id.clone(),
        panel.node_ids().to_vec(),
        nodes,
        timesteps,
        dists,
    )
}

// ─── oracle forecasts ───────────────────────────────────────────────────────

/// Multiplicative distortion of NB oracle parameters. `(1, 1)` is the
/// perfectly calibrated oracle; `b_alpha > 1` shrinks predictive variance
/// (overconfident), `b_alpha < 1` widens it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub b_mu: f64,
    pub b_alpha: f64,
}

impl Default for DistortionSpec {
    fn default() -> Self {
        DistortionSpec { b_mu: 1.0, b_alpha: 1.0 }
    }
}

/// Slice the generator's truth list to a split and apply the distortion.
///
/// `truth` must hold one NB distribution per panel cell in node-major order
/// (what [`crate::data::generate_synthetic`] returns).
pub fn oracle_forecast(
    truth: &[PredictiveDistribution],
    panel: &CountPanel,
    split: &SplitIndex,
    target: SplitTag,
    distortion: DistortionSpec,
) -> Result<ForecastSet> {
    if truth.len() != panel.n_nodes() * panel.n_steps() {
        return Err(Error::domain(format!(
            "truth list has {} entries for a {}x{} panel",
            truth.len(),
            panel.n_nodes(),
            panel.n_steps()
        )));
    }
    if [distortion.b_mu, distortion.b_alpha].iter().any(|f| !f.is_finite() || *f <= 0.0) {
        return Err(Error::domain(format!(
            "distortion factors must be > 0, got ({}, {})",
            distortion.b_mu, distortion.b_alpha
        )));
    }
    let range = match target {
        SplitTag::Calib => split.calib_range(),
        SplitTag::Test => split.test_range(panel.n_steps()),
    };
    let (mut nodes, mut timesteps, mut dists) = (Vec::new(), Vec::new(), Vec::new());
    for node in 0..panel.n_nodes() {
        for t in range.clone() {
            let cell = truth[node * panel.n_steps() + t];
            let PredictiveDistribution::NegBinomial { mu, alpha } = cell else {
                return Err(Error::domain("oracle distortion is defined for NB truths only"));
            };
            nodes.push(node as u32);
            timesteps.push(t as u32);
            dists.push(PredictiveDistribution::neg_binomial(
                distortion.b_mu * mu,
                distortion.b_alpha * alpha,
            )?);
        }
    }
    ForecastSet::from_parts(
        target,
        format!("oracle-bmu{}-balpha{}", distortion.b_mu, distortion.b_alpha),
        panel.node_ids().to_vec(),
        nodes,
        timesteps,
        dists,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, SyntheticSpec};

    fn panel_of(rows: Vec<Vec<u32>>) -> CountPanel {
        let ids = (0..rows.len()).map(|i| format!("n{i}")).collect();
        CountPanel::from_rows(rows, ids, 3600).unwrap()
    }

    #[test]
    fn constant_counts_hit_poisson_cap() {
        let panel = panel_of(vec![vec![2; 10]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        let model = fit_seasonal_nb(&panel, &s, 1).unwrap();
        let fc = predict(&model, &panel, &s, SplitTag::Test).unwrap();
        match fc.dists()[0] {
            PredictiveDistribution::NegBinomial { mu, alpha } => {
                assert_eq!(mu, 2.0);
                assert_eq!(alpha, ALPHA_MAX);
            }
            _ => panic!("expected NB"),
        }
    }

    #[test]
    fn all_zero_node_degenerates() {
        let panel = panel_of(vec![vec![0; 10]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        let model = fit_seasonal_nb(&panel, &s, 1).unwrap();
        let fc = predict(&model, &panel, &s, SplitTag::Calib).unwrap();
        match fc.dists()[0] {
            PredictiveDistribution::NegBinomial { mu, alpha } => {
                assert_eq!(mu, DEFAULT_EPSILON);
                assert_eq!(alpha, ALPHA_MAX);
            }
            _ => panic!("expected NB"),
        }
    }

    #[test]
    fn moment_matching_recovers_generator_parameters() {
        let spec = SyntheticSpec {
            nodes: 1,
            steps: 8334,
            mu: 8.0,
            alpha: 1.0,
            zero_inflation: 0.0,
            seasonal_amplitude: 0.0,
            seasonal_period: 24,
        };
        let (panel, _) = generate_synthetic(&spec, 5).unwrap();
        let s = split(&panel, (0.6, 0.2, 0.2)).unwrap();
        assert_eq!(s.train_end, 5000);
        let model = fit_seasonal_nb(&panel, &s, 1).unwrap();
        let fc = predict(&model, &panel, &s, SplitTag::Test).unwrap();
        match fc.dists()[0] {
            PredictiveDistribution::NegBinomial { mu, alpha } => {
                assert!((mu - 8.0).abs() < 0.5, "mu {mu}");
                assert!((0.7..=1.4).contains(&alpha), "alpha {alpha}");
            }
            _ => panic!("expected NB"),
        }
    }

    #[test]
    fn period_one_gives_identical_predictions_per_node() {
        let panel = panel_of(vec![vec![1, 3, 2, 5, 0, 4, 2, 1, 3, 2]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        let model = fit_seasonal_nb(&panel, &s, 1).unwrap();
        let fc = predict(&model, &panel, &s, SplitTag::Test).unwrap();
        assert_eq!(fc.dists()[0], fc.dists()[1]);
    }

    #[test]
    fn predictions_depend_only_on_phase() {
        let row: Vec<u32> = (0..40).map(|t| if t % 2 == 0 { 4 } else { 1 }).collect();
        let panel = panel_of(vec![row]);
        let s = SplitIndex::new(24, 32, 40).unwrap();
        let model = fit_seasonal_nb(&panel, &s, 2).unwrap();
        let fc = predict(&model, &panel, &s, SplitTag::Test).unwrap();
        for i in 0..fc.len() {
            let t = fc.timesteps()[i] as usize;
            let expected_mu = if t.is_multiple_of(2) { 4.0 } else { 1.0 };
            assert_eq!(fc.dists()[i].mean(), expected_mu);
            let PredictiveDistribution::NegBinomial { mu, alpha } = fc.dists()[i] else {
                panic!("expected NB");
            };
            assert!(mu > 0.0 && alpha > 0.0 && alpha <= ALPHA_MAX);
        }
    }

    #[test]
    fn split_mismatch_is_rejected() {
        let panel = panel_of(vec![vec![1; 10]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        let model = fit_seasonal_nb(&panel, &s, 1).unwrap();
        let other = SplitIndex::new(5, 8, 10).unwrap();
        assert!(predict(&model, &panel, &other, SplitTag::Test).is_err());
    }

    #[test]
    fn oracle_identity_round_trips_truth() {
        let spec = SyntheticSpec {
            nodes: 3,
            steps: 50,
            mu: 1.0,
            alpha: 1.0,
            zero_inflation: 0.2,
            seasonal_amplitude: 0.5,
            seasonal_period: 12,
        };
        let (panel, truth) = generate_synthetic(&spec, 1).unwrap();
        let s = split(&panel, (0.6, 0.2, 0.2)).unwrap();
        let fc =
            oracle_forecast(&truth, &panel, &s, SplitTag::Test, DistortionSpec::default()).unwrap();
        for i in 0..fc.len() {
            let (node, t) = (fc.nodes()[i] as usize, fc.timesteps()[i] as usize);
            assert_eq!(fc.dists()[i], truth[node * panel.n_steps() + t]);
        }
    }

    #[test]
    fn overconfident_distortion_shrinks_variance() {
        let truth = PredictiveDistribution::neg_binomial(2.0, 1.0).unwrap();
        let panel = panel_of(vec![vec![1; 10]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        let cells = vec![truth; 10];
        let fc = oracle_forecast(
            &cells,
            &panel,
            &s,
            SplitTag::Test,
            DistortionSpec { b_mu: 1.0, b_alpha: 4.0 },
        )
        .unwrap();
        assert!(fc.dists()[0].variance() < truth.variance());
        assert!(oracle_forecast(
            &cells,
            &panel,
            &s,
            SplitTag::Test,
            DistortionSpec { b_mu: 0.0, b_alpha: 1.0 }
        )
        .is_err());
    }

    #[test]
    fn underconfident_distortion_widens_intervals() {
        let panel = panel_of(vec![vec![1; 10]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        for &mu in &[1.0, 2.0, 5.0] {
            let cells = vec![PredictiveDistribution::neg_binomial(mu, 1.0).unwrap(); 10];
            let truth_iv = cells[0].interval(0.05, 0.95).unwrap();
            let fc = oracle_forecast(
                &cells,
                &panel,
                &s,
                SplitTag::Test,
                DistortionSpec { b_mu: 1.0, b_alpha: 0.25 },
            )
            .unwrap();
            let wide_iv = fc.dists()[0].interval(0.05, 0.95).unwrap();
            assert!(
                wide_iv.width() > truth_iv.width(),
                "mu={mu}: {} vs {}",
                wide_iv.width(),
                truth_iv.width()
            );
        }
    }

    #[test]
    fn forecast_csv_round_trip() {
        let panel = panel_of(vec![vec![1, 3, 2, 5, 0, 4, 2, 1, 3, 2], vec![0; 10]]);
        let s = SplitIndex::new(6, 8, 10).unwrap();
        let model = fit_seasonal_nb(&panel, &s, 2).unwrap();
        let fc = predict(&model, &panel, &s, SplitTag::Calib).unwrap();
        let csv = fc.to_csv_string();
        let back = ForecastSet::from_csv_str(&csv, fc.split_tag, fc.model_id.clone()).unwrap();
        assert_eq!(fc, back);
    }
}
