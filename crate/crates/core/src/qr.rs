//! Linear quantile regression under pinball loss.
//!
//! Fits `Q(p | x) = intercept + slope * x` by minimizing total pinball loss.
//! The profile objective `g(b) = min_a loss(a, b)` is convex and piecewise
//! linear in the slope `b`, with the inner minimization solved exactly by a
//! weighted residual quantile. The solver:
//!
//! 1. aggregates duplicate `(x, y)` points into weights (forecast means
//!    repeat heavily on seasonal panels),
//! 2. golden-section searches `g` over a slope bracket derived from the data
//!    (any optimal line passes through two data points, bounding `|slope|`),
//! 3. polishes against exact candidate lines through near-active points and
//!    applies the deterministic tie-break: smallest `|slope|`, then smallest
//!    `|intercept|`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pinball (quantile) loss: `(p-1)(y - yhat)` if `y < yhat`, else `p (y - yhat)`.
pub fn pinball(y: f64, yhat: f64, p: f64) -> f64 {
    let r = y - yhat;
    if r < 0.0 {
        (p - 1.0) * r
    } else {
        p * r
    }
}

/// A fitted quantile line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileFit {
    /// Quantile level in (0, 1).
    pub p: f64,
    pub intercept: f64,
    pub slope: f64,
    /// Number of (unaggregated) points the fit saw.
    pub n_points: usize,
}

impl QuantileFit {
    pub fn apply(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Weighted data point used internally by the solver.
#[derive(Debug, Clone, Copy)]
struct Pt {
    x: f64,
    y: f64,
    w: f64,
}

/// Fit the `p`-quantile line to `(x, y)` pairs.
///
/// Requires at least two points; with fewer than two distinct `x` values the
/// slope degenerates to 0 and the intercept is the empirical `p`-quantile
/// of `y`.
pub fn fit_quantile(x: &[f64], y: &[f64], p: f64) -> Result<QuantileFit> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::domain("fit_quantile: empty input"));
    }
    if x.len() != y.len() {
        return Err(Error::domain(format!(
            "fit_quantile: length mismatch ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::domain("fit_quantile: need at least 2 points"));
    }
    if !p.is_finite() || p <= 0.0 || p >= 1.0 {
        return Err(Error::domain(format!("quantile level must be in (0,1), got {p}")));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("fit_quantile: non-finite input value"));
    }

    let pts = aggregate(x, y);
    let (intercept, slope) = solve(&pts, p);
    Ok(QuantileFit { p, intercept, slope, n_points: x.len() })
}

/// Collapse exact duplicate `(x, y)` pairs into weighted points, sorted for
/// determinism.
fn aggregate(x: &[f64], y: &[f64]) -> Vec<Pt> {
    use std::collections::HashMap;
    let mut map: HashMap<(u64, u64), f64> = HashMap::with_capacity(x.len());
    for (&xi, &yi) in x.iter().zip(y) {
        *map.entry((xi.to_bits(), yi.to_bits())).or_insert(0.0) += 1.0;
    }
    let mut pts: Vec<Pt> = map
        .into_iter()
        .map(|((xb, yb), w)| Pt { x: f64::from_bits(xb), y: f64::from_bits(yb), w })
        .collect();
    pts.sort_unstable_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).expect("finite"));
    pts
}

fn solve(pts: &[Pt], p: f64) -> (f64, f64) {
    let mut xs: Vec<f64> = pts.iter().map(|pt| pt.x).collect();
    xs.dedup();
    if xs.len() < 2 {
        // Degenerate in x: intercept-only fit.
        let (_, a) = eval_slope(pts, p, 0.0);
        return (a, 0.0);
    }

    // Any optimal line passes through two data points, so its slope is
    // bounded by the y-span over the smallest gap between distinct x's.
    let min_gap = xs.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (y_min, y_max) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), pt| {
        (lo.min(pt.y), hi.max(pt.y))
    });
    let bound = (y_max - y_min) / min_gap + 1.0;

    let (mut lo, mut hi) = (-bound, bound);
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut b1 = hi - PHI * (hi - lo);
    let mut b2 = lo + PHI * (hi - lo);
    let (mut f1, _) = eval_slope(pts, p, b1);
    let (mut f2, _) = eval_slope(pts, p, b2);
    for _ in 0..400 {
        if hi - lo < 1e-12 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 <= f2 {
            hi = b2;
            b2 = b1;
            f2 = f1;
            b1 = hi - PHI * (hi - lo);
            f1 = eval_slope(pts, p, b1).0;
        } else {
            lo = b1;
            b1 = b2;
            f1 = f2;
            b2 = lo + PHI * (hi - lo);
            f2 = eval_slope(pts, p, b2).0;
        }
    }
    let b_search = if f1 <= f2 { b1 } else { b2 };

    // Exact candidate slopes: zero (tie-break target), the search result,
    // and lines through pairs of near-active points.
    let mut candidates = vec![0.0, b_search];
    if pts.len() <= 1024 {
        let (_, a_search) = eval_slope(pts, p, b_search);
        let mut by_activity: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, pt)| ((pt.y - b_search * pt.x - a_search).abs(), i))
            .collect();
        by_activity.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite"));
        let active: Vec<usize> = by_activity.iter().take(64).map(|&(_, i)| i).collect();
        for (ai, &i) in active.iter().enumerate() {
            for &j in active.iter().skip(ai + 1) {
                let (pi, pj) = (pts[i], pts[j]);
                if pi.x != pj.x {
                    candidates.push((pi.y - pj.y) / (pi.x - pj.x));
                }
            }
        }
    }

    let mut best: Option<(f64, f64, f64)> = None; // (loss, slope, intercept)
    for &b in &candidates {
        if !b.is_finite() {
            continue;
        }
        let (loss, a) = eval_slope(pts, p, b);
        let better = match best {
            None => true,
            Some((l0, b0, a0)) => {
                let tie = 1e-10 * (1.0 + l0.abs());
                loss < l0 - tie
                    || (loss <= l0 + tie
                        && (b.abs() < b0.abs() - 1e-15
                            || (b.abs() <= b0.abs() + 1e-15 && a.abs() < a0.abs())))
            }
        };
        if better {
            best = Some((loss, b, a));
        }
    }
    let (_, slope, intercept) = best.expect("candidate list is non-empty");
    (intercept, slope)
}

/// Total pinball loss at slope `b` with the intercept chosen optimally.
///
/// The optimal intercept set is a closed interval of residual quantiles; the
/// returned intercept is the interval point closest to zero (the documented
/// tie-break).
fn eval_slope(pts: &[Pt], p: f64, b: f64) -> (f64, f64) {
    let mut res: Vec<(f64, f64)> = pts.iter().map(|pt| (pt.y - b * pt.x, pt.w)).collect();
    res.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"));
    let total_w: f64 = res.iter().map(|r| r.1).sum();
    let target = p * total_w;

    let mut cum = 0.0;
    let mut a_lo = res[res.len() - 1].0;
    let mut a_hi = a_lo;
    for (i, &(r, w)) in res.iter().enumerate() {
        cum += w;
        if cum >= target {
            a_lo = r;
            // With cum exactly at the target the optimum extends to the next
            // distinct residual.
            a_hi = if cum > target || i + 1 == res.len() { r } else { res[i + 1].0 };
            break;
        }
    }
    let a = if a_lo <= 0.0 && 0.0 <= a_hi {
        0.0
    } else if a_lo.abs() <= a_hi.abs() {
        a_lo
    } else {
        a_hi
    };

    let loss: f64 = res
        .iter()
        .map(|&(r, w)| {
            let u = r - a;
            if u < 0.0 {
                w * (p - 1.0) * u
            } else {
                w * p * u
            }
        })
        .sum();
    (loss, a)
}
