//! Predictive distribution kernels and training losses.
//!
//! Three families are supported: negative binomial (the workhorse for sparse
//! counts), Poisson, and Gaussian. The NB is parameterized by its mean `mu`
//! and dispersion `alpha` with stopping parameter `r = alpha` and success
//! probability `p = mu / (mu + alpha)`, giving
//!
//! ```text
//! pmf(y) = Gamma(y + alpha) / (Gamma(y + 1) Gamma(alpha)) * p^y * (1 - p)^alpha
//! mean   = mu
//! var    = mu + mu^2 / alpha
//! ```
//!
//! All NB computations run in log space and are epsilon-stabilized
//! (`mu -> mu + EPS`, `alpha -> alpha + EPS` with [`DEFAULT_EPSILON`]) so that
//! `mu = 0` is usable and `nb_loss` minus its regularizer matches
//! `-ln pmf` to ~1e-10.
//!
//! Count-family CDFs are cumulative pmf sums evaluated through one shared
//! term recurrence, so `cdf` and `quantile` see bit-identical partial sums;
//! the quantile of a count family is the smallest integer `q` with
//! `F(q) >= p`. An independent incomplete-beta route for the NB CDF is
//! exposed for cross-checking.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// Stabilizer added to NB `mu` and `alpha` in pmf/CDF computations.
pub const DEFAULT_EPSILON: f64 = 1e-10;
/// Default weight of the per-point dispersion/scale regularizer in losses.
pub const DEFAULT_LAMBDA_REG: f64 = 1e-4;

/// Log of a pmf below this is treated as underflow and routed to the
/// special-function fallback.
const LN_UNDERFLOW: f64 = -700.0;

/// Distribution family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NegBinomial,
    Poisson,
    Gaussian,
}

impl Family {
    /// Whether the family is supported on non-negative integers.
    pub fn is_count(self) -> bool {
        matches!(self, Family::NegBinomial | Family::Poisson)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::NegBinomial => "nb",
            Family::Poisson => "poisson",
            Family::Gaussian => "gaussian",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nb" => Ok(Family::NegBinomial),
            "poisson" => Ok(Family::Poisson),
            "gaussian" => Ok(Family::Gaussian),
            other => Err(Error::domain(format!("unknown family `{other}`"))),
        }
    }
}

/// A per-point predicted distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PredictiveDistribution {
    NegBinomial { mu: f64, alpha: f64 },
    Poisson { lambda: f64 },
    Gaussian { mu: f64, sigma: f64 },
}

/// A 5%–95% (or other) prediction band plus the point prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    /// Point prediction; the distribution mean for raw forecasts.
    pub point: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl PredictiveDistribution {
    /// NB with mean `mu >= 0` (epsilon-stabilized downward to 0) and
    /// dispersion `alpha > 0`.
    pub fn neg_binomial(mu: f64, alpha: f64) -> Result<Self> {
        if !mu.is_finite() || mu < 0.0 {
            return Err(Error::domain(format!("NB mu must be finite and >= 0, got {mu}")));
        }
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::domain(format!("NB alpha must be finite and > 0, got {alpha}")));
        }
        Ok(PredictiveDistribution::NegBinomial { mu, alpha })
    }

    pub fn poisson(lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::domain(format!("Poisson lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(PredictiveDistribution::Poisson { lambda })
    }

    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::domain(format!("Gaussian mu must be finite, got {mu}")));
        }
        if !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::domain(format!("Gaussian sigma must be finite and > 0, got {sigma}")));
        }
        Ok(PredictiveDistribution::Gaussian { mu, sigma })
    }

    pub fn family(&self) -> Family {
        match self {
            PredictiveDistribution::NegBinomial { .. } => Family::NegBinomial,
            PredictiveDistribution::Poisson { .. } => Family::Poisson,
            PredictiveDistribution::Gaussian { .. } => Family::Gaussian,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            PredictiveDistribution::NegBinomial { mu, .. } => mu,
            PredictiveDistribution::Poisson { lambda } => lambda,
            PredictiveDistribution::Gaussian { mu, .. } => mu,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PredictiveDistribution::NegBinomial { mu, alpha } => mu + mu * mu / alpha,
            PredictiveDistribution::Poisson { lambda } => lambda,
            PredictiveDistribution::Gaussian { sigma, .. } => sigma * sigma,
        }
    }

    /// Probability mass at integer `y` for the count families.
    ///
    /// Returns an error for the Gaussian family, which has no pmf.
    pub fn pmf(&self, y: u64) -> Result<f64> {
        match *self {
            PredictiveDistribution::NegBinomial { mu, alpha } => Ok(nb_ln_pmf(mu, alpha, y).exp()),
            PredictiveDistribution::Poisson { lambda } => Ok(poisson_ln_pmf(lambda, y).exp()),
            PredictiveDistribution::Gaussian { .. } => {
                Err(Error::domain("pmf is undefined for the Gaussian family".to_string()))
            }
        }
    }

    /// CDF at `y`. Count families use the cumulative pmf; values below 0
    /// return 0 and the CDF is evaluated at `floor(y)`.
    pub fn cdf(&self, y: f64) -> f64 {
        match *self {
            PredictiveDistribution::NegBinomial { mu, alpha } => {
                if y < 0.0 {
                    0.0
                } else {
                    nb_cdf(mu, alpha, y.floor() as u64)
                }
            }
            PredictiveDistribution::Poisson { lambda } => {
                if y < 0.0 {
                    0.0
                } else {
                    poisson_cdf(lambda, y.floor() as u64)
                }
            }
            PredictiveDistribution::Gaussian { mu, sigma } => {
                // sigma > 0 enforced at construction
                let n = Normal::new(mu, sigma).expect("valid Gaussian parameters");
                n.cdf(y)
            }
        }
    }

    /// Quantile at probability `p` in (0, 1).
    ///
    /// Count families return the smallest integer `q` (as f64) with
    /// `F(q) >= p`; the Gaussian returns the exact continuous quantile.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !p.is_finite() || p <= 0.0 || p >= 1.0 {
            return Err(Error::domain(format!("quantile level must be in (0,1), got {p}")));
        }
        match *self {
            PredictiveDistribution::NegBinomial { mu, alpha } => {
                Ok(count_quantile(TermIter::nb(mu, alpha), self.mean(), self.variance(), p, |y| {
                    nb_cdf_via_beta(mu, alpha, y)
                }) as f64)
            }
            PredictiveDistribution::Poisson { lambda } => {
                Ok(count_quantile(TermIter::poisson(lambda), self.mean(), self.variance(), p, |y| {
                    poisson_cdf_via_gamma(lambda, y)
                }) as f64)
            }
            PredictiveDistribution::Gaussian { mu, sigma } => {
                let n = Normal::new(0.0, 1.0).expect("standard normal");
                Ok(mu + sigma * n.inverse_cdf(p))
            }
        }
    }

    /// Prediction interval `[quantile(lo_p), quantile(hi_p)]` with the
    /// distribution mean as point prediction.
    pub fn interval(&self, lo_p: f64, hi_p: f64) -> Result<PredictionInterval> {
        if !lo_p.is_finite() || !hi_p.is_finite() || lo_p <= 0.0 || hi_p >= 1.0 || lo_p >= hi_p {
            return Err(Error::domain(format!(
                "interval levels must satisfy 0 < lo < hi < 1, got ({lo_p}, {hi_p})"
            )));
        }
        let lower = self.quantile(lo_p)?;
        let upper = self.quantile(hi_p)?;
        Ok(PredictionInterval { lower, upper, point: self.mean() })
    }
}

// ─── log-space pmfs ─────────────────────────────────────────────────────────

/// Log pmf of the stabilized NB at integer `y`.
///
/// This is the exact negative of the likelihood part of [`nb_loss`]: the
/// tail-probability term keeps the raw `alpha` coefficient, which preserves
/// closed forms like the geometric `pmf(0) = 1/2` bitwise and keeps the
/// loss/pmf identity exact. The result differs from a strict pmf by a factor
/// of `1 + O(epsilon)`.
pub fn nb_ln_pmf(mu: f64, alpha: f64, y: u64) -> f64 {
    let m = mu + DEFAULT_EPSILON;
    let a = alpha + DEFAULT_EPSILON;
    let denom = m + a;
    let yf = y as f64;
    ln_gamma(yf + a) - ln_gamma(yf + 1.0) - ln_gamma(a) + yf * (m / denom).ln()
        + alpha * (a / denom).ln()
}

/// Log pmf of the Poisson at integer `y`; `lambda = 0` is a point mass at 0.
pub fn poisson_ln_pmf(lambda: f64, y: u64) -> f64 {
    if lambda == 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let yf = y as f64;
    -lambda + yf * lambda.ln() - ln_gamma(yf + 1.0)
}

// ─── count-family CDF / quantile machinery ──────────────────────────────────

/// Successive pmf terms of a count distribution, computed by recurrence from
/// the mass at zero. Both `cdf` and `quantile` walk this same iterator, so
/// their partial sums agree bitwise.
enum TermIter {
    Nb { term: f64, k: f64, p: f64, a: f64 },
    Pois { term: f64, k: f64, lambda: f64 },
}

impl TermIter {
    fn nb(mu: f64, alpha: f64) -> Self {
        let m = mu + DEFAULT_EPSILON;
        let a = alpha + DEFAULT_EPSILON;
        let p = m / (m + a);
        let ln0 = alpha * (a / (m + a)).ln();
        TermIter::Nb { term: ln0.exp(), k: 0.0, p, a }
    }

    fn poisson(lambda: f64) -> Self {
        TermIter::Pois { term: (-lambda).exp(), k: 0.0, lambda }
    }

    /// Mass at zero before any advance.
    fn start(&self) -> f64 {
        match self {
            TermIter::Nb { term, .. } | TermIter::Pois { term, .. } => *term,
        }
    }
}

impl Iterator for TermIter {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        match self {
            TermIter::Nb { term, k, p, a } => {
                let out = *term;
                *term *= *p * (*k + *a) / (*k + 1.0);
                *k += 1.0;
                Some(out)
            }
            TermIter::Pois { term, k, lambda } => {
                let out = *term;
                *term *= *lambda / (*k + 1.0);
                *k += 1.0;
                Some(out)
            }
        }
    }
}

/// Upper evaluation cap for count summations: `mean + 50 sqrt(var + 1) + 10`.
fn tail_cap(mean: f64, var: f64) -> u64 {
    (mean + 50.0 * (var + 1.0).sqrt() + 10.0).ceil() as u64
}

/// NB CDF at integer `y` by cumulative pmf summation.
pub fn nb_cdf(mu: f64, alpha: f64, y: u64) -> f64 {
    let it = TermIter::nb(mu, alpha);
    if it.start() == 0.0 || it.start().ln() < LN_UNDERFLOW {
        // Mass at zero underflowed; the incomplete-beta route stays accurate.
        return nb_cdf_via_beta(mu, alpha, y);
    }
    sum_terms(it, y)
}

/// Poisson CDF at integer `y` by cumulative pmf summation.
pub fn poisson_cdf(lambda: f64, y: u64) -> f64 {
    if lambda > -LN_UNDERFLOW {
        return poisson_cdf_via_gamma(lambda, y);
    }
    sum_terms(TermIter::poisson(lambda), y)
}

fn sum_terms(terms: TermIter, y: u64) -> f64 {
    let mut cum = 0.0;
    for term in terms.take(y as usize + 1) {
        cum += term;
    }
    cum.min(1.0)
}

/// NB CDF via the regularized incomplete beta function,
/// `F(y) = I_q(alpha, y + 1)` with `q = alpha / (mu + alpha)`.
///
/// Independent of the summation route; the two agree to ~1e-9.
pub fn nb_cdf_via_beta(mu: f64, alpha: f64, y: u64) -> f64 {
    let m = mu + DEFAULT_EPSILON;
    let a = alpha + DEFAULT_EPSILON;
    let q = a / (m + a);
    beta_reg(a, y as f64 + 1.0, q)
}

/// Poisson CDF via the upper regularized incomplete gamma,
/// `F(y) = Q(y + 1, lambda)`.
pub fn poisson_cdf_via_gamma(lambda: f64, y: u64) -> f64 {
    if lambda == 0.0 {
        return 1.0;
    }
    gamma_ur(y as f64 + 1.0, lambda)
}

/// Smallest integer `q` with `F(q) >= p`, walking the shared term iterator.
///
/// If the mass at zero underflows, falls back to a doubling-plus-bisection
/// search on `cdf_fallback`.
fn count_quantile(
    terms: TermIter,
    mean: f64,
    var: f64,
    p: f64,
    cdf_fallback: impl Fn(u64) -> f64,
) -> u64 {
    let cap = tail_cap(mean, var);
    if terms.start() == 0.0 || terms.start().ln() < LN_UNDERFLOW {
        return quantile_by_cdf_search(cdf_fallback, p, cap);
    }
    let mut cum = 0.0;
    for (k, term) in terms.enumerate() {
        cum += term;
        if cum >= p {
            return k as u64;
        }
        if k as u64 >= cap {
            // Documented tail cutoff: the requested level is beyond the
            // 50-sigma cap, which only happens for p astronomically close
            // to 1 at desk scale.
            return cap;
        }
    }
    unreachable!("term iterator is infinite")
}

fn quantile_by_cdf_search(cdf: impl Fn(u64) -> f64, p: f64, cap: u64) -> u64 {
    if cdf(0) >= p {
        return 0;
    }
    let mut hi = 1u64;
    while cdf(hi) < p {
        if hi >= cap {
            return cap;
        }
        hi = (hi * 2).min(cap);
    }
    let mut lo = hi / 2; // cdf(lo) < p
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

// ─── training losses ────────────────────────────────────────────────────────

/// Numerical-stability and regularization knobs for the training losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub epsilon: f64,
    pub lambda_reg: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { epsilon: DEFAULT_EPSILON, lambda_reg: DEFAULT_LAMBDA_REG }
    }
}

impl LossConfig {
    pub fn new(epsilon: f64, lambda_reg: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::domain(format!("epsilon must be finite and > 0, got {epsilon}")));
        }
        if !lambda_reg.is_finite() || lambda_reg < 0.0 {
            return Err(Error::domain(format!("lambda_reg must be finite and >= 0, got {lambda_reg}")));
        }
        Ok(LossConfig { epsilon, lambda_reg })
    }
}

/// NB negative log-likelihood with per-point regularization
/// `lambda * alpha^2`, every gamma taken as log-gamma:
///
/// ```text
/// -y ln((mu+e)/(mu+alpha+2e)) - lnG(y+alpha+e) + lnG(y+1) + lnG(alpha+e)
///   - alpha ln((alpha+e)/(mu+alpha+2e)) + lambda alpha^2
/// ```
///
/// Up to the regularizer this equals `-ln pmf` of the stabilized NB to
/// within `~epsilon`.
pub fn nb_loss(mu: f64, alpha: f64, y: u64, cfg: &LossConfig) -> f64 {
    debug_assert!(mu >= 0.0 && alpha >= 0.0);
    let e = cfg.epsilon;
    let denom = mu + alpha + 2.0 * e;
    let yf = y as f64;
    -(yf * ((mu + e) / denom).ln()) - ln_gamma(yf + alpha + e) + ln_gamma(yf + 1.0)
        + ln_gamma(alpha + e)
        - alpha * ((alpha + e) / denom).ln()
        + cfg.lambda_reg * alpha * alpha
}

/// Poisson loss `(lambda + e) - y ln(lambda + e)`; the constant `ln(y!)`
/// term of the negative log-likelihood is dropped.
pub fn poisson_loss(lambda: f64, y: u64, cfg: &LossConfig) -> f64 {
    debug_assert!(lambda >= 0.0);
    let ls = lambda + cfg.epsilon;
    ls - (y as f64) * ls.ln()
}

/// Gaussian negative log-likelihood with per-point scale penalty
/// `lambda * sigma`.
pub fn gaussian_loss(mu: f64, sigma: f64, y: f64, cfg: &LossConfig) -> Result<f64> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::domain(format!("sigma must be finite and > 0, got {sigma}")));
    }
    let r = y - mu;
    Ok(0.5 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() + r * r / (2.0 * sigma * sigma)
        + cfg.lambda_reg * sigma)
}

/// Analytic gradient of [`gaussian_loss`] with respect to `(mu, sigma)`.
pub fn gaussian_loss_grad(mu: f64, sigma: f64, y: f64, cfg: &LossConfig) -> Result<(f64, f64)> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::domain(format!("sigma must be finite and > 0, got {sigma}")));
    }
    let r = y - mu;
    let d_mu = -r / (sigma * sigma);
    let d_sigma = 1.0 / sigma - r * r / (sigma * sigma * sigma) + cfg.lambda_reg;
    Ok((d_mu, d_sigma))
}
