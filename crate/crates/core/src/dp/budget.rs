//! `(ε, δ)` arithmetic and the feasibility conditions of the Gaussian
//! sampling mechanism.
//!
//! Every logarithm is natural.

use std::fmt;

use crate::error::{NtkError, Result};

/// Cap reported by [`max_k`] when the bound diverges (e.g. `β → 0`).
pub const DEFAULT_K_CAP: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpParams {
    epsilon: f64,
    delta: f64,
}

impl DpParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(NtkError::invalid(format!("epsilon must be > 0, got {epsilon}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(NtkError::invalid(format!("delta must lie in [0, 1), got {delta}")));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Splits the budget into `(fraction · ε, fraction · δ)` and the remainder.
    pub fn split(&self, eps_fraction: f64, delta_fraction: f64) -> Result<(DpParams, DpParams)> {
        for f in [eps_fraction, delta_fraction] {
            if !(f > 0.0 && f < 1.0) {
                return Err(NtkError::invalid(format!("split fraction must lie in (0, 1), got {f}")));
            }
        }
        let first_eps = self.epsilon * eps_fraction;
        let first_delta = self.delta * delta_fraction;
        Ok((
            DpParams::new(first_eps, first_delta)?,
            DpParams::new(self.epsilon - first_eps, self.delta - first_delta)?,
        ))
    }
}

impl fmt::Display for DpParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(ε = {}, δ = {})", self.epsilon, self.delta)
    }
}

/// Basic composition: budgets add componentwise.
pub fn compose(parts: &[DpParams]) -> Result<DpParams> {
    if parts.is_empty() {
        return Err(NtkError::invalid("cannot compose an empty list of budgets"));
    }
    let epsilon = parts.iter().map(|p| p.epsilon).sum();
    let delta = parts.iter().map(|p| p.delta).sum();
    DpParams::new(epsilon, delta)
}

fn delta_cap(epsilon: f64, delta: f64, k: u64) -> f64 {
    let log_inv = (1.0 / delta).ln();
    let sampled = epsilon / (8.0 * k as f64 * log_inv).sqrt();
    let flat = epsilon / (8.0 * log_inv);
    sampled.min(flat)
}

/// `Δ = min{ ε / √(8k ln(1/δ)), ε / (8 ln(1/δ)) }`.
pub fn delta_budget(dp: DpParams, k: u64) -> Result<f64> {
    if dp.delta == 0.0 {
        return Err(NtkError::invalid("delta_budget needs delta > 0"));
    }
    if k == 0 {
        return Err(NtkError::invalid("delta_budget needs k >= 1"));
    }
    Ok(delta_cap(dp.epsilon, dp.delta, k))
}

/// Concentration radius `c_ρ · (√(t/k) + t/k)` with `t = n² + ln(1/γ)`.
pub fn rho_bound(n: usize, k: u64, gamma: f64, c_rho: f64) -> f64 {
    let t = (n * n) as f64 + (1.0 / gamma).ln();
    let r = t / k as f64;
    c_rho * (r.sqrt() + r)
}

/// Parameters shared by every kernel-sensitivity formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensitivityInputs {
    pub n: usize,
    pub sigma: f64,
    pub bound_b: f64,
    pub beta: f64,
}

/// `ψ = √(8n + 8) · σ² B³ β`: the Frobenius sensitivity of the continuous
/// kernel, from `2n - 2` off-diagonal entries at `2σ²B³β` and one diagonal
/// entry at `4σ²B³β`.
pub fn continuous_sensitivity_psi(s: &SensitivityInputs) -> f64 {
    (8.0 * s.n as f64 + 8.0).sqrt() * s.sigma.powi(2) * s.bound_b.powi(3) * s.beta
}

/// `M ≤ √n · ψ / η_min`.
pub fn m_bound(s: &SensitivityInputs, eta_min: f64) -> Result<f64> {
    if !(eta_min > 0.0) {
        return Err(NtkError::invalid(format!("eta_min must be > 0, got {eta_min}")));
    }
    Ok((s.n as f64).sqrt() * continuous_sensitivity_psi(s) / eta_min)
}

/// The `M` implied by the experimental `k` bound: `n σ² B⁴ β / η_min`.
/// `k ≤ max_k_raw` is exactly `m_bound_protocol ≤ ε / √(8k ln(1/δ))`.
pub fn m_bound_protocol(s: &SensitivityInputs, eta_min: f64) -> Result<f64> {
    if !(eta_min > 0.0) {
        return Err(NtkError::invalid(format!("eta_min must be > 0, got {eta_min}")));
    }
    Ok(s.n as f64 * s.sigma.powi(2) * s.bound_b.powi(4) * s.beta / eta_min)
}

/// Right-hand side of `k ≤ ε² η_min² / (8 ln(1/δ) n² σ⁴ B⁸ β²)`.
pub fn max_k_raw(epsilon: f64, delta: f64, s: &SensitivityInputs, eta_min: f64) -> f64 {
    if !(eta_min > 0.0) {
        return 0.0;
    }
    let denom = 8.0
        * (1.0 / delta).ln()
        * (s.n as f64).powi(2)
        * s.sigma.powi(4)
        * s.bound_b.powi(8)
        * s.beta.powi(2);
    let raw = epsilon.powi(2) * eta_min.powi(2) / denom;
    if raw.is_nan() {
        0.0
    } else {
        raw
    }
}

/// Smallest `k` for which `Δ` takes its `√k` branch: `⌈8 ln(1/δ)⌉`.
pub fn min_k(delta: f64) -> u64 {
    (8.0 * (1.0 / delta).ln()).ceil().max(1.0) as u64
}

/// Largest admissible `k`, capped at `cap`; 0 when even [`min_k`] is out of
/// reach.
pub fn max_k(epsilon: f64, delta: f64, s: &SensitivityInputs, eta_min: f64, cap: u64) -> u64 {
    let raw = max_k_raw(epsilon, delta, s, eta_min);
    let floor = min_k(delta);
    let mut k = if raw >= cap as f64 { cap } else { raw.floor() as u64 };
    if s.beta > 0.0 && eta_min > 0.0 {
        // absorb rounding at the boundary so the returned k satisfies M ≤ Δ
        let m = s.n as f64 * s.sigma.powi(2) * s.bound_b.powi(4) * s.beta / eta_min;
        while k >= floor && m > delta_cap(epsilon, delta, k) {
            k -= 1;
        }
    }
    if k < floor {
        0
    } else {
        k
    }
}

/// Which upper bound on `M` the feasibility check compares against `Δ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MRule {
    /// `n σ² B⁴ β / η_min`, the inversion of the experimental `k` bound.
    #[default]
    Protocol,
    /// `√n · √(8n+8) σ² B³ β / η_min` from composing the sensitivity bounds.
    Composed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionConfig {
    pub m_rule: MRule,
    pub gamma: f64,
    pub c_rho: f64,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        Self {
            m_rule: MRule::Protocol,
            gamma: 0.01,
            c_rho: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionReport {
    pub delta_cap: f64,
    /// The `M` bound selected by `m_rule`.
    pub m_bound: f64,
    pub m_bound_protocol: f64,
    pub m_bound_composed: f64,
    pub m_rule: MRule,
    pub rho: f64,
    pub k: u64,
    pub delta_lt_one: bool,
    pub m_le_delta: bool,
    pub k_ge_one: bool,
}

impl ConditionReport {
    pub fn feasible(&self) -> bool {
        self.delta_lt_one && self.m_le_delta && self.k_ge_one
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "k = {}, Δ = {:.6e}, M = {:.6e} ({:?}; protocol {:.6e}, composed {:.6e}), ρ = {:.6e}; \
             Δ<1: {}, M≤Δ: {}, k≥1: {}",
            self.k,
            self.delta_cap,
            self.m_bound,
            self.m_rule,
            self.m_bound_protocol,
            self.m_bound_composed,
            self.rho,
            self.delta_lt_one,
            self.m_le_delta,
            self.k_ge_one
        )
    }
}

fn m_or_worst(value: Result<f64>, beta: f64) -> f64 {
    if beta == 0.0 {
        0.0
    } else {
        value.unwrap_or(f64::INFINITY)
    }
}

/// Evaluates `Δ < 1`, `M ≤ Δ` and `k ≥ 1` for the kernel-privatisation stage.
/// Infeasibility is reported, never raised.
pub fn check_dp_conditions(
    dp_alpha: DpParams,
    k: u64,
    s: &SensitivityInputs,
    eta_min: f64,
    cfg: &ConditionConfig,
) -> ConditionReport {
    let delta_cap = delta_cap(dp_alpha.epsilon, dp_alpha.delta, k);
    let m_bound_protocol = m_or_worst(m_bound_protocol(s, eta_min), s.beta);
    let m_bound_composed = m_or_worst(m_bound(s, eta_min), s.beta);
    let m = match cfg.m_rule {
        MRule::Protocol => m_bound_protocol,
        MRule::Composed => m_bound_composed,
    };
    ConditionReport {
        delta_cap,
        m_bound: m,
        m_bound_protocol,
        m_bound_composed,
        m_rule: cfg.m_rule,
        rho: rho_bound(s.n, k.max(1), cfg.gamma, cfg.c_rho),
        k,
        delta_lt_one: delta_cap < 1.0,
        m_le_delta: m <= delta_cap,
        k_ge_one: k >= 1,
    }
}
