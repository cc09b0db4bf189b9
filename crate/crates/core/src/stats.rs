//! Estimators with standard errors, Wilson intervals and least squares.

use serde::{Deserialize, Serialize};

/// Normal quantile used for the reported 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
    pub ci_level: f64,
}

impl MCEstimate {
    /// Sample mean and standard error of the mean, accumulated in the given
    /// order (Welford), so equal inputs give bit-identical outputs.
    pub fn from_samples(xs: &[f64]) -> Self {
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, x) in xs.iter().enumerate() {
            let delta = x - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (x - mean);
        }
        let n = xs.len() as u64;
        let stderr = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
        Self { mean, stderr, n, ci_level: 0.95 }
    }

    /// `|self - other| <= k · sqrt(se1² + se2²)`.
    pub fn agrees_with(&self, other: f64, other_stderr: f64, k: f64) -> bool {
        (self.mean - other).abs() <= k * (self.stderr.powi(2) + other_stderr.powi(2)).sqrt()
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// A proportion with its Wilson interval; `stderr` is the interval
/// half-width divided by the normal quantile.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProportionEstimate {
    pub estimate: MCEstimate,
    pub count: u64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl ProportionEstimate {
    pub fn new(count: u64, n: u64) -> Self {
        let (lo, hi) = wilson(count, n, Z95);
        let mean = if n > 0 { count as f64 / n as f64 } else { 0.0 };
        Self {
            estimate: MCEstimate { mean, stderr: (hi - lo) / (2.0 * Z95), n, ci_level: 0.95 },
            count,
            wilson_lo: lo,
            wilson_hi: hi,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub n: usize,
}

/// Ordinary least squares `y = a + b x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let slope_stderr = if n > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Some(LinearFit { slope, intercept, slope_stderr, n })
}
