//! Privacy mechanisms and the budget calculus that gates them.
//!
//! Features are privatised with the truncated Laplace mechanism
//! ([`laplace`]); the PSD kernel matrix is privatised by releasing the
//! empirical covariance of Gaussian samples ([`gsm`]). [`budget`] holds the
//! `(ε, δ)` arithmetic and the feasibility conditions for the latter.

pub mod budget;
pub mod gsm;
pub mod laplace;

pub use budget::{
    check_dp_conditions, compose, continuous_sensitivity_psi, delta_budget, m_bound, m_bound_protocol,
    max_k, max_k_raw, min_k, rho_bound, ConditionConfig, ConditionReport, DpParams, MRule,
    SensitivityInputs, DEFAULT_K_CAP,
};
pub use gsm::{gaussian_sampling_mechanism, gaussian_sampling_mechanism_with, GsmSampler};
pub use laplace::{
    feature_noise, privatize_dataset, trunc_lap_sample, trunc_lap_width, TruncLapParams,
};
