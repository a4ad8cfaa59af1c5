//! Truncation ladders and growth classification of partial sums.
//!
//! Series diagnostics throughout the crate evaluate partial sums at a
//! doubling ladder N0, 2*N0, 4*N0, ... and decide between convergence,
//! divergence, and "cannot tell" from the rung values alone.  The decision
//! thresholds live here so every caller applies the same rules:
//! convergence needs Cauchy increments shrinking by at least [`CAUCHY_DECAY`]
//! per doubling, divergence needs monotone growth by a factor of at least
//! [`GROWTH_FACTOR`] across the ladder together with a positive fitted
//! log-log slope of at least [`MIN_DIVERGENCE_EXPONENT`].

use serde::Serialize;

/// Largest allowed ratio of successive Cauchy increments for a
/// "converging" classification.  Increments of sum n^-p shrink by 2^(1-p)
/// per doubling, so this certifies decay beyond p ~ 1.4 while the harmonic
/// boundary (ratio 1) stays unclear.
pub const CAUCHY_DECAY: f64 = 0.75;

/// Smallest total growth across the ladder for a "diverging" classification.
pub const GROWTH_FACTOR: f64 = 10.0;

/// Smallest fitted log-log slope for a "diverging" classification.
pub const MIN_DIVERGENCE_EXPONENT: f64 = 0.05;

/// Increments below this absolute size count as "already flat".
const FLAT_TOL: f64 = 1e-12;

/// Compensated (Kahan) accumulator.  Long series partial sums feed
/// monotonicity assertions at the 1e-13 scale, where naive summation
/// error is visible.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Sum with compensation.
pub fn kahan_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut k = Kahan::new();
    for x in xs {
        k.add(x);
    }
    k.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Converging,
    Diverging,
    Unclear,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub class: Growth,
    /// Largest ratio of successive Cauchy increments (None when increments vanish).
    pub cauchy_ratio_max: Option<f64>,
    /// Last Cauchy increment magnitude; doubles as a truncation error estimate.
    pub last_increment: f64,
    /// |v_last| / |v_first| when both are nonzero.
    pub total_growth: Option<f64>,
    /// Least-squares slope of log |v| against log N.
    pub fitted_exponent: Option<f64>,
}

/// Least-squares slope of log(values) against log(ns).
/// Returns None unless all values are positive.
pub fn fit_log_slope(ns: &[usize], values: &[f64]) -> Option<f64> {
    if ns.len() != values.len() || ns.len() < 2 || values.iter().any(|&v| v <= 0.0) {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Classify the partial sums of a series from ladder rung values.
///
/// `ns` are the rung truncation lengths (strictly increasing, at least
/// three), `values` the partial sums at those rungs.
pub fn classify_partial_sums(ns: &[usize], values: &[f64]) -> GrowthReport {
    assert!(ns.len() == values.len() && ns.len() >= 2, "need matching rungs");
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let scale = 1.0 + values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let last_increment = diffs.last().map(|d| d.abs()).unwrap_or(0.0);

    if diffs.iter().all(|d| d.abs() <= FLAT_TOL * scale) {
        return GrowthReport {
            class: Growth::Converging,
            cauchy_ratio_max: None,
            last_increment,
            total_growth: None,
            fitted_exponent: None,
        };
    }

    let mut ratio_max: Option<f64> = None;
    let mut ratios_ok = diffs.len() >= 2;
    for w in diffs.windows(2) {
        let (a, b) = (w[0].abs(), w[1].abs());
        if a <= FLAT_TOL * scale {
            ratios_ok = false;
            break;
        }
        let r = b / a;
        ratio_max = Some(ratio_max.map_or(r, |m: f64| m.max(r)));
        if r > CAUCHY_DECAY {
            ratios_ok = false;
        }
    }

    let abs_vals: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let fitted_exponent = fit_log_slope(ns, &abs_vals);
    let total_growth = if abs_vals[0] > 0.0 {
        Some(abs_vals[abs_vals.len() - 1] / abs_vals[0])
    } else {
        None
    };

    let class = if ratios_ok {
        Growth::Converging
    } else {
        let monotone = diffs.iter().all(|&d| d > 0.0) || diffs.iter().all(|&d| d < 0.0);
        let grows = total_growth.map_or(false, |g| g >= GROWTH_FACTOR);
        let steep = fitted_exponent.map_or(false, |s| s >= MIN_DIVERGENCE_EXPONENT);
        if monotone && grows && steep {
            Growth::Diverging
        } else {
            Growth::Unclear
        }
    };

    GrowthReport {
        class,
        cauchy_ratio_max: ratio_max,
        last_increment,
        total_growth,
        fitted_exponent,
    }
}

/// Dyadic ladder n0, 2 n0, ..., n0 << (count-1).
pub fn dyadic_rungs(n0: usize, count: usize) -> Vec<usize> {
    (0..count).map(|i| n0 << i).collect()
}
