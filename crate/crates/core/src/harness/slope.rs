//! Log-log slope fitting for rate quantification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordinary least squares of `log(mse_k)` on `log(k)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub k_min: usize,
    pub k_max: usize,
}

/// Fits `log(mse)` against `log(k)` over `k` in `[k_min, k_max]`.
/// `avg_mse[k]` is indexed by round. Exact zeros in the window signal exact
/// convergence and surface as [`Error::NonPositiveMse`]; callers report the
/// slope as a negative-infinity sentinel in that case.
pub fn fit_loglog_slope(avg_mse: &[f64], k_min: usize, k_max: usize) -> Result<SlopeFit> {
    if k_min < 1 || k_max <= k_min {
        return Err(Error::InvalidParameter(format!(
            "need k_max > k_min >= 1, got [{k_min}, {k_max}]"
        )));
    }
    if k_max >= avg_mse.len() {
        return Err(Error::InvalidParameter(format!(
            "k_max {k_max} outside the recorded range {}",
            avg_mse.len().saturating_sub(1)
        )));
    }
    let mut xs = Vec::with_capacity(k_max - k_min + 1);
    let mut ys = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let m = avg_mse[k];
        if !(m > 0.0) {
            return Err(Error::NonPositiveMse { index: k });
        }
        xs.push((k as f64).ln());
        ys.push(m.ln());
    }
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        r_squared,
        k_min,
        k_max,
    })
}
