//! Python bindings: panels, predictive distributions, quantile regression,
//! calibrators, interval metrics, and the end-to-end pipeline.
//!
//! The module mirrors the Rust API at array granularity so a Python caller
//! can either run whole pipelines from a config JSON or drive individual
//! stages with plain lists.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sauc_core::calib::{self, CalibratorKind, MuStarMode, SaucOptions};
use sauc_core::data::{self, CountPanel, SyntheticSpec};
use sauc_core::dist::{LossConfig, PredictiveDistribution};
use sauc_core::forecaster::{ForecastSet, SplitTag};
use sauc_core::metrics::{self, MetricsFilter};
use sauc_core::pipeline::{cmd_pipeline, cmd_sweep_bins, RunConfig};
use sauc_core::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A node x timestep matrix of counts.
#[pyclass(name = "Panel")]
struct PyPanel {
    panel: CountPanel,
    truth: Vec<PredictiveDistribution>,
}

#[pymethods]
impl PyPanel {
    #[getter]
    fn n_nodes(&self) -> usize {
        self.panel.n_nodes()
    }

    #[getter]
    fn n_steps(&self) -> usize {
        self.panel.n_steps()
    }

    #[getter]
    fn node_ids(&self) -> Vec<String> {
        self.panel.node_ids().to_vec()
    }

    fn sparsity(&self) -> f64 {
        self.panel.sparsity()
    }

    fn mean(&self) -> f64 {
        self.panel.mean()
    }

    /// Counts as a list of per-node rows.
    fn counts(&self) -> Vec<Vec<u32>> {
        (0..self.panel.n_nodes()).map(|n| self.panel.row(n).to_vec()).collect()
    }

    /// True `(mu, alpha)` of one generator cell.
    fn truth_params(&self, node: usize, t: usize) -> PyResult<(f64, f64)> {
        let idx = node * self.panel.n_steps() + t;
        match self.truth.get(idx) {
            Some(PredictiveDistribution::NegBinomial { mu, alpha }) => Ok((*mu, *alpha)),
            Some(_) => Err(PyValueError::new_err("cell truth is not negative binomial")),
            None => Err(PyValueError::new_err("cell index out of range")),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Panel(nodes={}, steps={}, sparsity={:.3})",
            self.panel.n_nodes(),
            self.panel.n_steps(),
            self.panel.sparsity()
        )
    }
}

/// Draw a synthetic zero-inflated NB panel from a spec JSON.
#[pyfunction]
fn generate_synthetic(spec_json: &str, seed: u64) -> PyResult<PyPanel> {
    let spec: SyntheticSpec =
        serde_json::from_str(spec_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (panel, truth) = data::generate_synthetic(&spec, seed).map_err(py_err)?;
    Ok(PyPanel { panel, truth })
}

/// A single predictive distribution (NB, Poisson, or Gaussian).
#[pyclass(name = "Distribution")]
struct PyDistribution {
    inner: PredictiveDistribution,
}

#[pymethods]
impl PyDistribution {
    #[staticmethod]
    fn neg_binomial(mu: f64, alpha: f64) -> PyResult<Self> {
        Ok(PyDistribution { inner: PredictiveDistribution::neg_binomial(mu, alpha).map_err(py_err)? })
    }

    #[staticmethod]
    fn poisson(lambda: f64) -> PyResult<Self> {
        Ok(PyDistribution { inner: PredictiveDistribution::poisson(lambda).map_err(py_err)? })
    }

    #[staticmethod]
    fn gaussian(mu: f64, sigma: f64) -> PyResult<Self> {
        Ok(PyDistribution { inner: PredictiveDistribution::gaussian(mu, sigma).map_err(py_err)? })
    }

    fn mean(&self) -> f64 {
        self.inner.mean()
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn pmf(&self, y: u64) -> PyResult<f64> {
        self.inner.pmf(y).map_err(py_err)
    }

    fn cdf(&self, y: f64) -> f64 {
        self.inner.cdf(y)
    }

    fn quantile(&self, p: f64) -> PyResult<f64> {
        self.inner.quantile(p).map_err(py_err)
    }

    /// `(lower, upper, point)` of the prediction band.
    #[pyo3(signature = (lo_p = 0.05, hi_p = 0.95))]
    fn interval(&self, lo_p: f64, hi_p: f64) -> PyResult<(f64, f64, f64)> {
        let iv = self.inner.interval(lo_p, hi_p).map_err(py_err)?;
        Ok((iv.lower, iv.upper, iv.point))
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyfunction]
fn pinball(y: f64, yhat: f64, p: f64) -> f64 {
    sauc_core::qr::pinball(y, yhat, p)
}

/// Fit the `p`-quantile line; returns `(intercept, slope)`.
#[pyfunction]
fn fit_quantile(x: Vec<f64>, y: Vec<f64>, p: f64) -> PyResult<(f64, f64)> {
    let f = sauc_core::qr::fit_quantile(&x, &y, p).map_err(py_err)?;
    Ok((f.intercept, f.slope))
}

#[pyfunction]
fn nb_loss(mu: f64, alpha: f64, y: u64) -> f64 {
    sauc_core::dist::nb_loss(mu, alpha, y, &LossConfig::default())
}

fn nb_forecast_set(mu: Vec<f64>, alpha: Vec<f64>, tag: SplitTag) -> PyResult<ForecastSet> {
    if mu.len() != alpha.len() {
        return Err(PyValueError::new_err("mu and alpha lengths differ"));
    }
    let dists: Result<Vec<_>, _> = mu
        .iter()
        .zip(&alpha)
        .map(|(&m, &a)| PredictiveDistribution::neg_binomial(m, a))
        .collect();
    ForecastSet::from_parts(
        tag,
        "python".into(),
        vec!["n0".into()],
        vec![0; mu.len()],
        (0..mu.len() as u32).collect(),
        dists.map_err(py_err)?,
    )
    .map_err(py_err)
}

/// Fit any calibrator on NB calibration forecasts and apply it to NB test
/// forecasts. Returns `(mu_star, lower, upper)` lists for the test points.
#[pyfunction]
#[pyo3(signature = (kind, mu_calib, alpha_calib, y_calib, mu_test, alpha_test, n_bins = 15, zero_threshold = 0.5, mu_star = "midpoint"))]
#[allow(clippy::too_many_arguments)]
fn calibrate(
    kind: &str,
    mu_calib: Vec<f64>,
    alpha_calib: Vec<f64>,
    y_calib: Vec<f64>,
    mu_test: Vec<f64>,
    alpha_test: Vec<f64>,
    n_bins: usize,
    zero_threshold: f64,
    mu_star: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let kind = CalibratorKind::parse(kind).map_err(py_err)?;
    let mu_star = match mu_star {
        "midpoint" => MuStarMode::Midpoint,
        "passthrough" => MuStarMode::Passthrough,
        other => return Err(PyValueError::new_err(format!("unknown mu_star mode `{other}`"))),
    };
    let fc_calib = nb_forecast_set(mu_calib, alpha_calib, SplitTag::Calib)?;
    let fc_test = nb_forecast_set(mu_test, alpha_test, SplitTag::Test)?;
    let opts = SaucOptions { n_bins, zero_threshold, mu_star, ..SaucOptions::default() };
    let (_, intervals) =
        calib::fit_apply(kind, &fc_calib, &y_calib, &fc_test, &opts).map_err(py_err)?;
    let rows = intervals.rows();
    Ok((
        rows.iter().map(|r| r.mu_star).collect(),
        rows.iter().map(|r| r.lower).collect(),
        rows.iter().map(|r| r.upper).collect(),
    ))
}

fn intervals_from_arrays(
    mu_star: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
) -> PyResult<calib::CalibratedIntervals> {
    if mu_star.len() != lower.len() || mu_star.len() != upper.len() {
        return Err(PyValueError::new_err("interval arrays have unequal lengths"));
    }
    let rows: Vec<calib::IntervalRow> = mu_star
        .iter()
        .zip(&lower)
        .zip(&upper)
        .enumerate()
        .map(|(i, ((&m, &l), &u))| calib::IntervalRow {
            node: 0,
            timestep: i as u32,
            mu_star: m,
            lower: l,
            upper: u,
        })
        .collect();
    calib::CalibratedIntervals::new("python".into(), "python".into(), vec!["n0".into()], rows)
        .map_err(py_err)
}

/// ENCE report (as a JSON string) over per-point intervals and targets.
#[pyfunction]
#[pyo3(signature = (mu_star, lower, upper, y, n_bins = 15, c = 0.30395136778115506, filter = "all"))]
fn ence(
    mu_star: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    y: Vec<f64>,
    n_bins: usize,
    c: f64,
    filter: &str,
) -> PyResult<String> {
    let intervals = intervals_from_arrays(mu_star, lower, upper)?;
    let filter = MetricsFilter::parse(filter).map_err(py_err)?;
    let report = metrics::ence(&intervals, &y, n_bins, c, filter).map_err(py_err)?;
    serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// `(coverage, c_star)` of per-point intervals against targets.
#[pyfunction]
fn coverage(
    mu_star: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    y: Vec<f64>,
) -> PyResult<(f64, f64)> {
    let intervals = intervals_from_arrays(mu_star, lower, upper)?;
    metrics::coverage(&intervals, &y).map_err(py_err)
}

/// Per-point risk scores `mu_star * width`.
#[pyfunction]
fn risk_scores(mu_star: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> PyResult<Vec<f64>> {
    let intervals = intervals_from_arrays(mu_star, lower, upper)?;
    Ok(metrics::risk_scores(&intervals))
}

/// Run the full pipeline from a config JSON; returns the summary JSON.
#[pyfunction]
fn run_pipeline(config_json: &str, out_dir: &str) -> PyResult<String> {
    let config: RunConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let summary = cmd_pipeline(&config, std::path::Path::new(out_dir)).map_err(py_err)?;
    serde_json::to_string(&summary).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Run the bin sweep; returns a list of `(n_bins, ence_all, ence_zero)` rows.
#[pyfunction]
#[pyo3(signature = (config_json, bins, out_dir, jobs = 1))]
fn sweep_bins(
    config_json: &str,
    bins: Vec<usize>,
    out_dir: &str,
    jobs: usize,
) -> PyResult<Vec<(usize, f64, f64)>> {
    let config: RunConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let rows = cmd_sweep_bins(&config, &bins, jobs.max(1), std::path::Path::new(out_dir))
        .map_err(py_err)?;
    Ok(rows.into_iter().map(|r| (r.n_bins, r.ence_all, r.ence_zero)).collect())
}

#[pymodule]
fn sauc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPanel>()?;
    m.add_class::<PyDistribution>()?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(pinball, m)?)?;
    m.add_function(wrap_pyfunction!(fit_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(nb_loss, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(ence, m)?)?;
    m.add_function(wrap_pyfunction!(coverage, m)?)?;
    m.add_function(wrap_pyfunction!(risk_scores, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_bins, m)?)?;
    Ok(())
}
