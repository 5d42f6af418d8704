//! Property-based invariants across the crate.

mod common;

use proptest::prelude::*;
use sauc_core::calib::empirical_cdf_curve;
use sauc_core::data::{aggregate, build_adjacency, CentroidSet, CountPanel};
use sauc_core::dist::PredictiveDistribution;
use sauc_core::forecaster::{ForecastSet, SplitTag};
use sauc_core::qr::{fit_quantile, pinball};

proptest! {
    #[test]
    fn aggregate_composes(
        counts in prop::collection::vec(0u32..50, 24..96),
        a in 1usize..4,
        b in 1usize..4,
    ) {
        let t = (counts.len() / (a * b)) * (a * b);
        if t == 0 {
            return Ok(());
        }
        let panel = CountPanel::from_rows(
            vec![counts[..t].to_vec()],
            vec!["n0".into()],
            3600,
        ).unwrap();
        let two_step = aggregate(&aggregate(&panel, a).unwrap(), b).unwrap();
        let one_step = aggregate(&panel, a * b).unwrap();
        prop_assert_eq!(two_step, one_step);
    }

    #[test]
    fn adjacency_symmetric_unit_diagonal(
        coords in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..12),
        scale in 0.01f64..10.0,
    ) {
        let ids: Vec<String> = (0..coords.len()).map(|i| format!("n{i}")).collect();
        let c = CentroidSet::new(ids, coords).unwrap();
        let adj = build_adjacency(&c, scale).unwrap();
        for i in 0..adj.n_nodes() {
            prop_assert_eq!(adj.get(i, i), 1.0);
            for j in 0..adj.n_nodes() {
                prop_assert_eq!(adj.get(i, j), adj.get(j, i));
                prop_assert!(adj.get(i, j) > 0.0 && adj.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn pinball_convex_and_nonnegative(
        y in -50.0f64..50.0,
        a in -50.0f64..50.0,
        b in -50.0f64..50.0,
        p in 0.01f64..0.99,
    ) {
        let mid = 0.5 * (a + b);
        prop_assert!(pinball(y, a, p) >= 0.0);
        prop_assert!(
            pinball(y, mid, p) <= 0.5 * pinball(y, a, p) + 0.5 * pinball(y, b, p) + 1e-9
        );
    }

    #[test]
    fn nb_cdf_quantile_consistent(
        mu in 0.05f64..30.0,
        alpha in 0.1f64..8.0,
        p in 0.01f64..0.99,
        p2 in 0.01f64..0.99,
    ) {
        let d = PredictiveDistribution::neg_binomial(mu, alpha).unwrap();
        let q = d.quantile(p).unwrap();
        prop_assert!(d.cdf(q) >= p);
        if q > 0.0 {
            prop_assert!(d.cdf(q - 1.0) < p);
        }
        // quantile is non-decreasing in p
        let (lo_p, hi_p) = if p <= p2 { (p, p2) } else { (p2, p) };
        prop_assert!(d.quantile(lo_p).unwrap() <= d.quantile(hi_p).unwrap());
        let iv = d.interval(0.05, 0.95).unwrap();
        prop_assert!(iv.lower <= iv.upper);
    }

    /// Standard QR optimality band on tie-free data: the fraction of targets
    /// strictly below the fitted line sits in [p - 2/n, p], and the fraction
    /// at-or-below is at least p.
    #[test]
    fn qr_optimality_band(seed in 1u64..3000, p in 0.05f64..0.95) {
        let mut rng = common::XorShift(seed);
        let n = 80usize;
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 10.0)).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 1.2 * xi + rng.uniform(-3.0, 3.0)).collect();
        let fit = fit_quantile(&x, &y, p).unwrap();
        let below = x.iter().zip(&y).filter(|&(&xi, &yi)| yi < fit.apply(xi) - 1e-12).count() as f64
            / n as f64;
        let at_or_below = x
            .iter()
            .zip(&y)
            .filter(|&(&xi, &yi)| yi <= fit.apply(xi) + 1e-12)
            .count() as f64
            / n as f64;
        prop_assert!(below <= p + 1e-9, "below {below} > p {p}");
        prop_assert!(below >= p - 2.0 / n as f64 - 1e-9, "below {below} under band at p {p}");
        prop_assert!(at_or_below >= p - 1e-9, "at_or_below {at_or_below} < p {p}");
    }

    #[test]
    fn qr_scale_equivariance(
        seed in 1u64..5000,
        k in 0.1f64..10.0,
    ) {
        let mut rng = common::XorShift(seed);
        let n = 40;
        let x: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 10.0)).collect();
        let y: Vec<f64> = x.iter().map(|&xi| 0.8 * xi + rng.uniform(-2.0, 2.0)).collect();
        let fit = fit_quantile(&x, &y, 0.9).unwrap();
        let y_scaled: Vec<f64> = y.iter().map(|&v| v * k).collect();
        let fit_scaled = fit_quantile(&x, &y_scaled, 0.9).unwrap();
        let tol = 1e-6 * (1.0 + k) * (1.0 + fit.intercept.abs() + fit.slope.abs());
        prop_assert!((fit_scaled.intercept - k * fit.intercept).abs() < tol,
            "intercept {} vs {}", fit_scaled.intercept, k * fit.intercept);
        prop_assert!((fit_scaled.slope - k * fit.slope).abs() < tol,
            "slope {} vs {}", fit_scaled.slope, k * fit.slope);
    }
}

/// Perfectly calibrated continuous forecasts produce an empirical CDF curve
/// inside the Dvoretzky-Kiefer-Wolfowitz band around the diagonal.
#[test]
fn empirical_cdf_curve_within_dkw_band() {
    use statrs::distribution::{ContinuousCDF, Normal};
    let n = 10_000usize;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut rng = common::XorShift(20240817);
    let mut dists = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for _ in 0..n {
        let mu = rng.uniform(-5.0, 5.0);
        let sigma = rng.uniform(0.5, 3.0);
        dists.push(PredictiveDistribution::gaussian(mu, sigma).unwrap());
        let u = rng.next_f64().clamp(1e-12, 1.0 - 1e-12);
        targets.push(mu + sigma * std_normal.inverse_cdf(u));
    }
    let fc = ForecastSet::from_parts(
        SplitTag::Calib,
        "dkw".into(),
        vec!["n0".into()],
        vec![0; n],
        (0..n as u32).collect(),
        dists,
    )
    .unwrap();
    let curve = empirical_cdf_curve(&fc, &targets).unwrap();
    let eps = ((2.0f64 / 0.05).ln() / (2.0 * n as f64)).sqrt();
    for &(p, f) in &curve {
        assert!((f - p).abs() <= eps, "curve deviates at p={p}: {f} (eps {eps})");
    }
}
