//! Distribution comparisons used for the secrecy checks.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation; 0 for an empty slice.
pub fn std_dev(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let m = mean(x);
    math::sqrt(x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + math::erf(x / core::f64::consts::SQRT_2))
}

fn sorted(x: &[f32]) -> Result<Vec<f32>> {
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty sample".into()));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("sample contains NaN".into()));
    }
    let mut v = x.to_vec();
    v.sort_unstable_by(f32::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f32], b: &[f32]) -> Result<f64> {
    let a = sorted(a)?;
    let b = sorted(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        // step past every copy of x in both samples before comparing
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic p-value of a two-sample KS statistic.
pub fn ks_p_value(d: f64, na: usize, nb: usize) -> f64 {
    let ne = (na as f64 * nb as f64) / (na + nb) as f64;
    let sq = math::sqrt(ne);
    let lambda = (sq + 0.12 + 0.11 / sq) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * math::exp(-2.0 * jf * jf * lambda * lambda);
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Total-variation distance between histograms of `a` and `b` over `bins`
/// equal-width bins spanning both samples. Lies in `[0, 1]`.
pub fn histogram_distance(a: &[f32], b: &[f32], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let a = sorted(a)?;
    let b = sorted(b)?;
    let lo = a[0].min(b[0]) as f64;
    let hi = a[a.len() - 1].max(b[b.len() - 1]) as f64;
    let width = (hi - lo) / bins as f64;
    let hist = |x: &[f32]| {
        let mut h = alloc::vec![0usize; bins];
        for &v in x {
            let k = if width > 0.0 {
                (math::floor((v as f64 - lo) / width) as usize).min(bins - 1)
            } else {
                0
            };
            h[k] += 1;
        }
        h
    };
    let (ha, hb) = (hist(&a), hist(&b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(0.5
        * ha.iter()
            .zip(&hb)
            .map(|(&x, &y)| (x as f64 / na - y as f64 / nb).abs())
            .sum::<f64>())
}

/// Summary of how two weight samples differ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    /// Two-sample KS statistic.
    pub ks_statistic: f64,
    /// Its asymptotic p-value.
    pub ks_p_value: f64,
    /// Histogram total-variation distance.
    pub histogram_distance: f64,
    /// Mean of the first sample.
    pub mean_a: f64,
    /// Standard deviation of the first sample.
    pub std_a: f64,
    /// Mean of the second sample.
    pub mean_b: f64,
    /// Standard deviation of the second sample.
    pub std_b: f64,
}

/// Compares two samples with KS and a `bins`-bin histogram.
pub fn compare(a: &[f32], b: &[f32], bins: usize) -> Result<DistributionReport> {
    let ks = ks_statistic(a, b)?;
    let fa: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let fb: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    Ok(DistributionReport {
        ks_statistic: ks,
        ks_p_value: ks_p_value(ks, a.len(), b.len()),
        histogram_distance: histogram_distance(a, b, bins)?,
        mean_a: mean(&fa),
        std_a: std_dev(&fa),
        mean_b: mean(&fb),
        std_b: std_dev(&fb),
    })
}
