//! Lossy information-sharing layer.
//!
//! Outgoing states pass through an unbiased compression operator (random
//! sparsification or stochastic quantization) or an additive Gaussian
//! channel before the receiver forms its weighted neighbor average
//! `xhat_i(t) = sum_j W_ij(t) x_j(t) + e_i(t)`. The implied noise `e_i(t)`
//! is conditionally zero-mean with a second moment bounded by a computable
//! `gamma` whenever the transmitted norms satisfy `||x||^2 <= D`.
//!
//! Compression randomness is drawn from a counter-based stream keyed by
//! `(seed, t, receiver, source)`, so evaluations are independent across
//! agent pairs and iterations and bit-reproducible under any execution
//! order.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Mat;
use crate::rng::{domain, keyed_rng, mix_key, sample_standard_normal};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("rand_k needs 1 <= k <= d, got k = {k} with d = {d}")]
    KOutOfRange { k: usize, d: usize },
    #[error("stochastic quantizer needs s >= 1")]
    ZeroLevels,
    #[error("gaussian noise scale must be non-negative, got {0}")]
    NegativeZeta(f64),
    #[error("{kind} channel needs a positive trajectory norm cap D")]
    MissingNormCap { kind: &'static str },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Channel kind plus its parameters, as carried in run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    /// Exact neighbor averages.
    Perfect,
    /// Keep a uniform random size-k coordinate subset scaled by d/k.
    RandK { k: usize, norm_cap: f64 },
    /// Norm-scaled randomized rounding to `levels` grid points per coordinate.
    StochasticQuantizer { levels: u32, norm_cap: f64 },
    /// Additive zero-mean Gaussian noise with total variance zeta^2 per
    /// transmission (zeta^2 / d per coordinate).
    Gaussian { zeta: f64 },
}

/// Per-agent conditional variance bound for each channel kind:
/// `(d/k - 1) D` for rand_k, `min(sqrt(d)/s, d/s^2) D` for the quantizer,
/// `zeta^2` for the Gaussian channel, and 0 for the perfect one.
pub fn gamma_for(kind: &ChannelKind, d: usize) -> Result<f64, ChannelError> {
    let df = d as f64;
    match *kind {
        ChannelKind::Perfect => Ok(0.0),
        ChannelKind::RandK { k, norm_cap } => {
            if k < 1 || k > d {
                return Err(ChannelError::KOutOfRange { k, d });
            }
            if !(norm_cap > 0.0) {
                return Err(ChannelError::MissingNormCap { kind: "rand_k" });
            }
            Ok((df / k as f64 - 1.0) * norm_cap)
        }
        ChannelKind::StochasticQuantizer { levels, norm_cap } => {
            if levels < 1 {
                return Err(ChannelError::ZeroLevels);
            }
            if !(norm_cap > 0.0) {
                return Err(ChannelError::MissingNormCap { kind: "stochastic_quantizer" });
            }
            let s = levels as f64;
            Ok((df.sqrt() / s).min(df / (s * s)) * norm_cap)
        }
        ChannelKind::Gaussian { zeta } => {
            if zeta < 0.0 {
                return Err(ChannelError::NegativeZeta(zeta));
            }
            Ok(zeta * zeta)
        }
    }
}

/// A validated channel: its kind plus the `gamma` bound for dimension `d`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossyChannel {
    kind: ChannelKind,
    dim: usize,
    gamma_bound: f64,
}

impl LossyChannel {
    pub fn new(kind: ChannelKind, dim: usize) -> Result<Self, ChannelError> {
        let gamma_bound = gamma_for(&kind, dim)?;
        Ok(Self { kind, dim, gamma_bound })
    }

    pub fn kind(&self) -> &ChannelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `gamma` such that `E[||e_i(t)||^2 | F_t] <= gamma` while transmitted
    /// norms stay within the configured cap.
    pub fn gamma_bound(&self) -> f64 {
        self.gamma_bound
    }

    /// Configured trajectory norm-squared cap `D`, when the kind has one.
    pub fn norm_cap(&self) -> Option<f64> {
        match self.kind {
            ChannelKind::RandK { norm_cap, .. }
            | ChannelKind::StochasticQuantizer { norm_cap, .. } => Some(norm_cap),
            _ => None,
        }
    }

    pub fn is_perfect(&self) -> bool {
        matches!(self.kind, ChannelKind::Perfect)
    }
}

/// Unbiased random sparsification: a uniform size-k subset of coordinates is
/// kept, scaled by `d/k`; the rest are zeroed. `E[out] = x` and
/// `E||out - x||^2 <= (d/k - 1) ||x||^2`.
pub fn rand_k_sparsify<R: Rng>(x: &[f64], k: usize, rng: &mut R) -> Vec<f64> {
    let d = x.len();
    assert!(k >= 1 && k <= d, "rand_k needs 1 <= k <= d, got k = {k}, d = {d}");
    let scale = d as f64 / k as f64;
    let mut out = vec![0.0; d];
    for idx in rand::seq::index::sample(rng, d, k) {
        out[idx] = scale * x[idx];
    }
    out
}

/// One randomized-rounding draw of `zeta(a, s)` for `a = |x_l| / ||x||`:
/// `ceil(s a)/s` with probability `s a - floor(s a)`, else `floor(s a)/s`.
/// Integer `s a` returns `a` exactly.
fn dithered_round<R: Rng>(a: f64, s: f64, rng: &mut R) -> f64 {
    let sa = s * a;
    let lo = sa.floor();
    if sa == lo {
        return a;
    }
    let up_prob = sa - lo;
    if rng.gen::<f64>() < up_prob {
        sa.ceil() / s
    } else {
        lo / s
    }
}

/// Stochastic quantizer with `s` levels: coordinate `l` maps to
/// `||x|| sign(x_l) zeta(|x_l| / ||x||, s)` with independent rounding per
/// coordinate. Unbiased with `E||out - x||^2 <= min(sqrt(d)/s, d/s^2) ||x||^2`.
/// The zero vector maps to itself (the normalization is 0/0 otherwise).
pub fn stochastic_quantize<R: Rng>(x: &[f64], s: u32, rng: &mut R) -> Vec<f64> {
    assert!(s >= 1, "quantizer needs at least one level");
    let norm = crate::linalg::norm(x);
    if norm == 0.0 {
        return vec![0.0; x.len()];
    }
    let sf = s as f64;
    x.iter()
        .map(|&v| norm * v.signum() * dithered_round(v.abs() / norm, sf, rng))
        .collect()
}

/// Additive channel noise: `x + z` with `z` zero-mean Gaussian and total
/// variance `E||z||^2 = zeta^2` (per-coordinate variance `zeta^2 / d`).
pub fn gaussian_corrupt<R: Rng>(x: &[f64], zeta: f64, rng: &mut R) -> Vec<f64> {
    assert!(zeta >= 0.0, "zeta must be non-negative");
    if zeta == 0.0 {
        return x.to_vec();
    }
    let per_coord = zeta / (x.len() as f64).sqrt();
    x.iter().map(|&v| v + per_coord * sample_standard_normal(rng)).collect()
}

/// Noisy neighbor average for `agent` at iteration `t`: each source `j` with
/// `W_ij > 0` is compressed (or corrupted) under the stream keyed by
/// `(seed, t, agent, j)` and the results are weight-averaged.
pub fn neighbor_estimate(
    states: &Mat,
    w_row: &[f64],
    channel: &LossyChannel,
    agent: usize,
    t: u64,
    seed: u64,
) -> Result<Vec<f64>, ChannelError> {
    if states.rows() != w_row.len() {
        return Err(ChannelError::DimensionMismatch(format!(
            "state matrix has {} rows but the weight row has {} entries",
            states.rows(),
            w_row.len()
        )));
    }
    if states.cols() != channel.dim {
        return Err(ChannelError::DimensionMismatch(format!(
            "state dimension {} differs from channel dimension {}",
            states.cols(),
            channel.dim
        )));
    }
    let d = states.cols();
    let mut acc = vec![0.0; d];
    for (j, &weight) in w_row.iter().enumerate() {
        if weight == 0.0 {
            continue;
        }
        let x_j = states.row(j);
        match channel.kind {
            ChannelKind::Perfect => {
                crate::linalg::axpy(&mut acc, weight, x_j);
            }
            ChannelKind::RandK { k, .. } => {
                let mut rng = keyed_rng(&[seed, domain::CHANNEL, t, agent as u64, j as u64]);
                let compressed = rand_k_sparsify(x_j, k, &mut rng);
                crate::linalg::axpy(&mut acc, weight, &compressed);
            }
            ChannelKind::StochasticQuantizer { levels, .. } => {
                let mut rng = keyed_rng(&[seed, domain::CHANNEL, t, agent as u64, j as u64]);
                let compressed = stochastic_quantize(x_j, levels, &mut rng);
                crate::linalg::axpy(&mut acc, weight, &compressed);
            }
            ChannelKind::Gaussian { zeta } => {
                let mut rng = keyed_rng(&[seed, domain::CHANNEL, t, agent as u64, j as u64]);
                let corrupted = gaussian_corrupt(x_j, zeta, &mut rng);
                crate::linalg::axpy(&mut acc, weight, &corrupted);
            }
        }
    }
    Ok(acc)
}

/// Key for sampling-style draws outside the channel (mini-batches).
pub fn batch_stream_key(seed: u64, t: u64, agent: usize) -> u64 {
    mix_key(&[seed, domain::BATCH, t, agent as u64])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm_sq;

    fn unit_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        keyed_rng(&[seed])
    }

    #[test]
    fn gamma_values() {
        assert_eq!(gamma_for(&ChannelKind::Perfect, 8), Ok(0.0));
        // Lossless when k = d.
        assert_eq!(gamma_for(&ChannelKind::RandK { k: 8, norm_cap: 3.0 }, 8), Ok(0.0));
        // min(4/3, 16/9) * 2 = 8/3.
        let g = gamma_for(&ChannelKind::StochasticQuantizer { levels: 3, norm_cap: 2.0 }, 16)
            .unwrap();
        assert!((g - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(gamma_for(&ChannelKind::Gaussian { zeta: 1.5 }, 4), Ok(2.25));
        assert!(gamma_for(&ChannelKind::RandK { k: 0, norm_cap: 1.0 }, 8).is_err());
        assert!(gamma_for(&ChannelKind::RandK { k: 2, norm_cap: 0.0 }, 8).is_err());
    }

    #[test]
    fn rand_k_full_support_is_identity() {
        let x = [1.5, -2.0, 0.25, 4.0];
        let out = rand_k_sparsify(&x, 4, &mut unit_rng(1));
        assert_eq!(out, x);
        let zero = [0.0; 4];
        assert_eq!(rand_k_sparsify(&zero, 2, &mut unit_rng(2)), zero);
    }

    #[test]
    fn rand_k_support_and_values_exact() {
        let x = [0.3, -1.2, 5.0, 0.7, -0.1, 2.2, 0.9, -3.3];
        for trial in 0..200u64 {
            let out = rand_k_sparsify(&x, 3, &mut unit_rng(trial));
            let nonzero: Vec<usize> = (0..8).filter(|&i| out[i] != 0.0).collect();
            assert_eq!(nonzero.len(), 3);
            for &i in &nonzero {
                // Bit-exact scaling on kept coordinates.
                assert_eq!(out[i], (8.0 / 3.0) * x[i]);
            }
        }
    }

    #[test]
    fn quantizer_zero_and_exact_grid_inputs() {
        let zero = [0.0; 5];
        assert_eq!(stochastic_quantize(&zero, 4, &mut unit_rng(3)), zero);
        // |x_l| / ||x|| = (0.6, 0.8) are exact multiples of 1/5: deterministic.
        let x = [3.0, -4.0];
        for trial in 0..50u64 {
            let out = stochastic_quantize(&x, 5, &mut unit_rng(trial));
            assert_eq!(out, x);
        }
    }

    #[test]
    fn quantizer_outputs_on_grid() {
        let x = [0.13, -0.87, 0.44, 0.02, 1.9, -0.66];
        let norm = norm_sq(&x).sqrt();
        let s = 4u32;
        for trial in 0..100u64 {
            let out = stochastic_quantize(&x, s, &mut unit_rng(trial));
            for (o, orig) in out.iter().zip(&x) {
                let m = o.abs() * s as f64 / norm;
                assert!((m - m.round()).abs() < 1e-12, "off grid: {o}");
                assert!(o.abs() <= norm * (1.0 + 1e-12));
                if *o != 0.0 {
                    assert_eq!(o.signum(), orig.signum());
                }
            }
        }
    }

    #[test]
    fn gaussian_zero_scale_is_identity() {
        let x = [0.4, -0.2, 1.0];
        assert_eq!(gaussian_corrupt(&x, 0.0, &mut unit_rng(5)), x);
    }

    #[test]
    fn gaussian_additivity() {
        // corrupt(x) - x equals corrupt(0) draw-for-draw under one stream.
        let x = [0.7, -1.1, 0.3, 2.0];
        let noisy: Vec<f64> = gaussian_corrupt(&x, 1.3, &mut unit_rng(6));
        let pure: Vec<f64> = gaussian_corrupt(&[0.0; 4], 1.3, &mut unit_rng(6));
        for i in 0..4 {
            assert!((noisy[i] - x[i] - pure[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn neighbor_estimate_perfect_exact() {
        let states = Mat::from_rows(vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0, 2.0],
        ]);
        let channel = LossyChannel::new(ChannelKind::Perfect, 2).unwrap();
        let w_row = [0.5, 0.25, 0.25];
        let est = neighbor_estimate(&states, &w_row, &channel, 0, 1, 0).unwrap();
        assert_eq!(est, vec![1.0, 0.75]);
        // Identical rows through a stochastic row reproduce the row.
        let same = Mat::from_rows(vec![vec![3.0, -1.0]; 3]);
        let est = neighbor_estimate(&same, &w_row, &channel, 0, 1, 0).unwrap();
        assert!((est[0] - 3.0).abs() < 1e-15 && (est[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn neighbor_estimate_keying_is_pairwise() {
        // Different receivers observe independent compressions of the same
        // source; the same receiver at the same t reproduces bit-for-bit.
        let states = Mat::from_rows(vec![vec![1.0, 2.0, 3.0, 4.0]; 2]);
        let channel =
            LossyChannel::new(ChannelKind::StochasticQuantizer { levels: 3, norm_cap: 50.0 }, 4)
                .unwrap();
        let w_row = [0.5, 0.5];
        let a = neighbor_estimate(&states, &w_row, &channel, 0, 7, 99).unwrap();
        let a2 = neighbor_estimate(&states, &w_row, &channel, 0, 7, 99).unwrap();
        let b = neighbor_estimate(&states, &w_row, &channel, 1, 7, 99).unwrap();
        assert_eq!(a, a2);
        assert_ne!(a, b);
    }

    #[test]
    fn neighbor_estimate_dimension_checks() {
        let states = Mat::zeros(3, 2);
        let channel = LossyChannel::new(ChannelKind::Perfect, 2).unwrap();
        assert!(neighbor_estimate(&states, &[0.5, 0.5], &channel, 0, 1, 0).is_err());
        let channel3 = LossyChannel::new(ChannelKind::Perfect, 3).unwrap();
        assert!(neighbor_estimate(&states, &[0.4, 0.3, 0.3], &channel3, 0, 1, 0).is_err());
    }

    #[test]
    fn monte_carlo_unbiasedness_and_variance() {
        // Smaller-M version of the statistical contract; the acceptance
        // suite runs the full 1e5-sample configurations.
        let m = 20_000usize;
        let x = [1.0; 8];
        let mut sums = [0.0f64; 8];
        let mut sq = [0.0f64; 8];
        let mut err2 = 0.0f64;
        for trial in 0..m {
            let out = rand_k_sparsify(&x, 2, &mut unit_rng(1000 + trial as u64));
            let mut e2 = 0.0;
            for i in 0..8 {
                let e = out[i] - x[i];
                sums[i] += e;
                sq[i] += e * e;
                e2 += e * e;
            }
            err2 += e2;
        }
        for i in 0..8 {
            let mean = sums[i] / m as f64;
            let std = (sq[i] / m as f64 - mean * mean).sqrt();
            assert!(mean.abs() < 4.0 * std / (m as f64).sqrt(), "coord {i}: mean {mean}");
        }
        // E||out - x||^2 <= 1.05 * (d/k - 1) ||x||^2 = 1.05 * 24.
        assert!(err2 / m as f64 <= 1.05 * 24.0);
    }

    #[test]
    fn neighbor_estimate_conditional_mean_converges() {
        // Averaging repeated quantized estimates approaches the exact
        // weighted average within Monte-Carlo error.
        let states = Mat::from_rows(vec![
            vec![0.2, -1.0, 0.5],
            vec![1.4, 0.3, -0.7],
            vec![-0.6, 0.8, 1.1],
            vec![0.9, -0.2, 0.4],
            vec![-1.2, 0.6, -0.9],
        ]);
        let channel =
            LossyChannel::new(ChannelKind::StochasticQuantizer { levels: 6, norm_cap: 10.0 }, 3)
                .unwrap();
        let w_row = [0.2, 0.3, 0.1, 0.25, 0.15];
        let exact = neighbor_estimate(
            &states,
            &w_row,
            &LossyChannel::new(ChannelKind::Perfect, 3).unwrap(),
            0,
            1,
            0,
        )
        .unwrap();
        let m = 10_000u64;
        let mut mean = vec![0.0; 3];
        for t in 1..=m {
            let est = neighbor_estimate(&states, &w_row, &channel, 0, t, 123).unwrap();
            for i in 0..3 {
                mean[i] += est[i] / m as f64;
            }
        }
        for i in 0..3 {
            assert!((mean[i] - exact[i]).abs() < 0.02, "coord {i}: {} vs {}", mean[i], exact[i]);
        }
    }
}
