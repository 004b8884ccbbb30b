//! Convergence measures and empirical rate fitting.
//!
//! The headline quantities: the network variance `||X - 1 xbar||_r^2`, the
//! power-mean measure `M_theta` and arithmetic mean `M_1` of the
//! gradient-norm series at the weighted average state, the predicted decay
//! exponent `min{1 - nu - mu, mu - nu, 2 nu}`, and a log-log least-squares
//! slope estimator for measuring realized decay rates.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::Mat;
use crate::topology::StochasticVector;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("theta must lie in (0, 1), got {0}")]
    ThetaOutOfRange(f64),
    #[error("(nu, mu) must lie in (0, 1) x (0, 1), got ({0}, {1})")]
    ExponentArgsOutOfRange(f64, f64),
    #[error("rate fits need strictly positive values; found {0} at t = {1}")]
    NonPositiveValue(f64, f64),
    #[error("rate fits need at least 10 points in the window, found {0}")]
    TooFewPoints(usize),
}

/// `sum_i r_i ||x_i - xbar||^2` where `xbar = r^T X`.
pub fn network_variance(states: &Mat, r: &StochasticVector) -> f64 {
    assert_eq!(states.rows(), r.len(), "one weight per agent row");
    let d = states.cols();
    let mut mean = vec![0.0; d];
    for i in 0..states.rows() {
        crate::linalg::axpy(&mut mean, r.get(i), states.row(i));
    }
    let mut acc = 0.0;
    for i in 0..states.rows() {
        let row = states.row(i);
        let mut dev = 0.0;
        for j in 0..d {
            let delta = row[j] - mean[j];
            dev += delta * delta;
        }
        acc += r.get(i) * dev;
    }
    acc
}

/// Power mean `[ (1/T) sum_t s_t^theta ]^(1/theta)` for `theta` in (0, 1).
pub fn m_theta(series: &[f64], theta: f64) -> Result<f64, MetricsError> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(MetricsError::ThetaOutOfRange(theta));
    }
    assert!(!series.is_empty(), "power mean of an empty series");
    let t = series.len() as f64;
    let mean: f64 = series.iter().map(|v| v.powf(theta)).sum::<f64>() / t;
    Ok(mean.powf(1.0 / theta))
}

/// Arithmetic mean of the series.
pub fn m_one(series: &[f64]) -> f64 {
    assert!(!series.is_empty(), "mean of an empty series");
    series.iter().sum::<f64>() / series.len() as f64
}

/// Mean network variance over the recorded horizon; bounds each agent's own
/// deviation mean up to a `1 / r_min` factor.
pub fn consensus_mean(variance_series: &[f64]) -> f64 {
    m_one(variance_series)
}

/// Predicted decay exponent `min{1 - nu - mu, mu - nu, 2 nu}` for the
/// gradient-norm measure, plus a flag marking the logarithmic boundary
/// regimes `mu = 1/2` or `3 nu + mu = 1`.
pub fn predicted_exponent(nu: f64, mu: f64) -> Result<(f64, bool), MetricsError> {
    if !(nu > 0.0 && nu < 1.0 && mu > 0.0 && mu < 1.0) {
        return Err(MetricsError::ExponentArgsOutOfRange(nu, mu));
    }
    let exponent = (1.0 - nu - mu).min(mu - nu).min(2.0 * nu);
    let boundary = (mu - 0.5).abs() <= 1e-12 || (3.0 * nu + mu - 1.0).abs() <= 1e-12;
    Ok((exponent, boundary))
}

/// Ordinary least squares fit of `ln(value)` against `ln(t)`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub window: (f64, f64),
    /// RMS of the log-log residuals.
    pub residual: f64,
    pub points: usize,
}

/// Fits `value ~ c * t^slope` on the points with `t` inside `window`
/// (inclusive). Needs at least 10 strictly positive values in the window.
pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit, MetricsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, v) in series {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(v > 0.0) {
            return Err(MetricsError::NonPositiveValue(v, t));
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    let n = xs.len();
    if n < 10 {
        return Err(MetricsError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += (xs[i] - mean_x) * (xs[i] - mean_x);
        sxy += (xs[i] - mean_x) * (ys[i] - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let mut ss = 0.0;
    for i in 0..n {
        let r = ys[i] - (intercept + slope * xs[i]);
        ss += r * r;
    }
    Ok(RateFit {
        slope,
        intercept,
        window,
        residual: (ss / nf).sqrt(),
        points: n,
    })
}

/// Running prefix means `M_1(T) = (1/T) sum_{t<=T} series[t-1]` evaluated at
/// each checkpoint `T` (checkpoints must be sorted, within the series).
pub fn m_one_prefix(series: &[f64], checkpoints: &[u64]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut acc = 0.0;
    let mut t = 0usize;
    for &cp in checkpoints {
        let cp = cp as usize;
        assert!(cp >= 1 && cp <= series.len(), "checkpoint {cp} outside the series");
        while t < cp {
            acc += series[t];
            t += 1;
        }
        out.push((cp as f64, acc / cp as f64));
    }
    out
}

/// Logarithmically spaced integer checkpoints in `[lo, hi]`, `per_decade`
/// targets per factor of ten, deduplicated and always including both ends.
pub fn log_checkpoints(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    assert!(lo >= 1 && hi >= lo);
    let mut out = vec![lo];
    let l0 = (lo as f64).log10();
    let l1 = (hi as f64).log10();
    let steps = ((l1 - l0) * per_decade as f64).ceil() as usize;
    for k in 1..=steps {
        let t = 10f64.powf(l0 + (l1 - l0) * k as f64 / steps as f64).round() as u64;
        let t = t.clamp(lo, hi);
        if *out.last().unwrap() != t {
            out.push(t);
        }
    }
    if *out.last().unwrap() != hi {
        out.push(hi);
    }
    out
}
