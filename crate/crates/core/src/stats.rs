//! Small statistics helpers with a fixed summation order.
//!
//! Every reduction over paths goes through fixed-size chunks that are summed
//! in chunk order, so results do not depend on how rayon schedules work.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Paths per reduction chunk.
pub const CHUNK: usize = 2048;

/// Sum of a slice in fixed chunk order.
pub fn stable_sum(values: &[f64]) -> f64 {
    values
        .par_chunks(CHUNK)
        .map(|c| c.iter().sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_paths: 0,
            };
        }
        let mean = stable_sum(values) / n as f64;
        let ss: f64 = values
            .par_chunks(CHUNK)
            .map(|c| c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>())
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        let var = if n > 1 { ss / (n - 1) as f64 } else { 0.0 };
        Estimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n_paths: n,
        }
    }

    /// Estimate of a paired difference `a - b`.
    pub fn paired_difference(a: &[f64], b: &[f64]) -> Self {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Estimate::from_samples(&diff)
    }
}

/// Central moments of a sample, accumulated in fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    pub fn from_slice(values: &[f64]) -> Self {
        let n = values.len();
        let mean = stable_sum(values) / n as f64;
        let sums = values
            .par_chunks(CHUNK)
            .map(|c| {
                c.iter().fold([0.0; 3], |mut acc, v| {
                    let d = v - mean;
                    let d2 = d * d;
                    acc[0] += d2;
                    acc[1] += d2 * d;
                    acc[2] += d2 * d2;
                    acc
                })
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold([0.0; 3], |mut acc, s| {
                for (a, b) in acc.iter_mut().zip(s) {
                    *a += b;
                }
                acc
            });
        Moments {
            n,
            mean,
            m2: sums[0] / n as f64,
            m3: sums[1] / n as f64,
            m4: sums[2] / n as f64,
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.m2
    }

    pub fn skewness(&self) -> f64 {
        self.m3 / self.m2.powf(1.5)
    }

    pub fn excess_kurtosis(&self) -> f64 {
        self.m4 / (self.m2 * self.m2) - 3.0
    }
}

/// Least-squares slope of `ln y` against `ln x`.
///
/// Returns `NaN` if fewer than two points have positive coordinates.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != xs.len() {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
