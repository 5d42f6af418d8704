//! Independent oracles shared by the integration suites. These deliberately
//! use different algorithms from the library paths they check.

#![allow(dead_code)]

use sauc_core::qr::pinball;

/// Exact 2-parameter quantile regression by exhaustive vertex enumeration:
/// every line through a pair of points with distinct x, plus every flat line
/// through a single point. Returns `(intercept, slope, mean_loss)` with the
/// smallest-|slope|-then-smallest-|intercept| tie-break.
pub fn qr_pair_enumeration_oracle(x: &[f64], y: &[f64], p: f64) -> (f64, f64, f64) {
    let n = x.len();
    assert!(n >= 2);
    let mean_loss = |a: f64, b: f64| -> f64 {
        x.iter().zip(y).map(|(&xi, &yi)| pinball(yi, a + b * xi, p)).sum::<f64>() / n as f64
    };

    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        candidates.push((y[i], 0.0));
        for j in (i + 1)..n {
            if x[i] != x[j] {
                let b = (y[i] - y[j]) / (x[i] - x[j]);
                candidates.push((y[i] - b * x[i], b));
            }
        }
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for (a, b) in candidates {
        let loss = mean_loss(a, b);
        let better = match best {
            None => true,
            Some((l0, b0, a0)) => {
                loss < l0 - 1e-12
                    || (loss <= l0 + 1e-12
                        && (b.abs() < b0.abs() - 1e-15
                            || (b.abs() <= b0.abs() + 1e-15 && a.abs() < a0.abs())))
            }
        };
        if better {
            best = Some((loss, b, a));
        }
    }
    let (loss, slope, intercept) = best.expect("non-empty candidates");
    (intercept, slope, loss)
}

/// Isotonic regression by the max-min closed form
/// `g_i = max_{j <= i} min_{k >= j} mean(y[j..=k])`, evaluated directly.
/// Input must be ordered by x. O(n^3), fine for oracle sizes.
pub fn isotonic_maxmin_oracle(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let prefix: Vec<f64> = std::iter::once(0.0)
        .chain(y.iter().scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        }))
        .collect();
    let avg = |j: usize, k: usize| (prefix[k + 1] - prefix[j]) / (k - j + 1) as f64;

    (0..n)
        .map(|i| {
            (0..=i)
                .map(|j| (j..n).map(|k| avg(j, k)).fold(f64::INFINITY, f64::min))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Tiny deterministic xorshift for oracle instance generation.
pub struct XorShift(pub u64);

impl XorShift {
    pub fn next_f64(&mut self) -> f64 {
        self.0 ^= self.0 << 13;
        self.0 ^= self.0 >> 7;
        self.0 ^= self.0 << 17;
        (self.0 >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
