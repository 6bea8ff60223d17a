//! Scalar numerics shared across modules.

use crate::{Error, Result};

/// Stable log-sum-exp of a slice: `max(v) + ln Σ exp(v_i − max(v))`.
///
/// Entries may be `-inf` (they contribute nothing) but not all of them.
pub fn logsumexp_row(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyLogSumExp);
    }
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return Err(Error::DegenerateLogSumExp);
    }
    let sum: f64 = v.iter().map(|&x| (x - hi).exp()).sum();
    Ok(hi + sum.ln())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow for large `x`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Softmax of log-weights; returns uniform-free normalized weights.
/// Non-finite entries are treated as -inf (zero weight). Returns `None`
/// when every entry is non-finite.
pub fn softmax(log_w: &[f64]) -> Option<Vec<f64>> {
    let hi = log_w
        .iter()
        .copied()
        .filter(|x| x.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    if hi == f64::NEG_INFINITY {
        return None;
    }
    let mut w: Vec<f64> = log_w
        .iter()
        .map(|&x| if x.is_finite() { (x - hi).exp() } else { 0.0 })
        .collect();
    let total: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= total;
    }
    Some(w)
}

/// Mean and population (divide-by-n) standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pearson correlation of two equal-length samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    cov / (va.sqrt() * vb.sqrt())
}
