//! Truncated Laplace noise on training features.
//!
//! `TLap(Δ, ε, δ)` has density proportional to `exp(-|z| / λ)` with
//! `λ = Δ / ε`, restricted to `[-B_L, B_L]` where
//! `B_L = (Δ / ε) · ln(1 + (e^ε - 1) / (2δ))`.

use rand::Rng;

use crate::error::{NtkError, Result};
use crate::kernel::Dataset;
use crate::rng::RngStream;

use super::budget::DpParams;

/// Half-width `B_L` of the truncated Laplace support.
pub fn trunc_lap_width(sensitivity: f64, epsilon: f64, delta: f64) -> Result<f64> {
    if delta == 0.0 {
        return Err(NtkError::UnboundedSupport);
    }
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(NtkError::invalid(format!("sensitivity must be >= 0, got {sensitivity}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(NtkError::invalid(format!("epsilon must be > 0, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(NtkError::invalid(format!("delta must lie in (0, 1), got {delta}")));
    }
    // ln(1 + (e^ε - 1)/(2δ)); for large ε factor out e^ε so nothing overflows.
    let log_term = if epsilon <= 30.0 {
        (epsilon.exp_m1() / (2.0 * delta)).ln_1p()
    } else {
        let tail = (-epsilon).exp();
        epsilon + (tail + (1.0 - tail) / (2.0 * delta)).ln()
    };
    Ok(sensitivity / epsilon * log_term)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruncLapParams {
    sensitivity: f64,
    epsilon: f64,
    delta: f64,
    width: f64,
}

impl TruncLapParams {
    pub fn new(sensitivity: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let width = trunc_lap_width(sensitivity, epsilon, delta)?;
        Ok(Self {
            sensitivity,
            epsilon,
            delta,
            width,
        })
    }

    pub fn sensitivity(&self) -> f64 {
        self.sensitivity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// `B_L`.
    pub fn width(&self) -> f64 {
        self.width
    }

    /// Laplace scale `λ = Δ / ε`.
    pub fn scale(&self) -> f64 {
        self.sensitivity / self.epsilon
    }

    /// Inverse CDF. `u` is a uniform draw in `[0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.width == 0.0 {
            return 0.0;
        }
        let lambda = self.scale();
        let q = (2.0 * u - 1.0).abs().min(1.0);
        // P(|Z| <= t) = (1 - e^{-t/λ}) / (1 - e^{-B_L/λ})
        let mass = -(-self.width / lambda).exp_m1();
        let t = (-lambda * (-q * mass).ln_1p()).min(self.width);
        if u < 0.5 {
            -t
        } else {
            t
        }
    }

    pub fn cdf(&self, z: f64) -> f64 {
        if z <= -self.width {
            return 0.0;
        }
        if z >= self.width {
            return 1.0;
        }
        let lambda = self.scale();
        let half = 0.5 * (-z.abs() / lambda).exp_m1() / (-self.width / lambda).exp_m1();
        0.5 + z.signum() * half
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }
}

/// One draw from the start of `rng`.
pub fn trunc_lap_sample(params: &TruncLapParams, rng: &RngStream) -> f64 {
    params.sample(&mut rng.rng())
}

/// Noise parameters for features with β-close neighbours: the L1
/// sensitivity of a row is `√d · β`.
pub fn feature_noise(dim: usize, beta: f64, dp: DpParams) -> Result<TruncLapParams> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(NtkError::invalid(format!("beta must be >= 0, got {beta}")));
    }
    TruncLapParams::new((dim as f64).sqrt() * beta, dp.epsilon(), dp.delta())
}

/// `X̃ = X + TLap(√d·β, ε, δ)` entrywise. Labels are untouched; the returned
/// bound is `B + √d·B_L`.
pub fn privatize_dataset(data: &Dataset, beta: f64, dp: DpParams, rng: &RngStream) -> Result<Dataset> {
    let params = feature_noise(data.dim(), beta, dp)?;
    let mut gen = rng.rng();
    let mut features = data.features().clone();
    for i in 0..data.n() {
        for j in 0..data.dim() {
            features[(i, j)] += params.sample(&mut gen);
        }
    }
    let bound = data.bound_b() + (data.dim() as f64).sqrt() * params.width();
    Dataset::new(features, data.labels().clone(), bound)
}
