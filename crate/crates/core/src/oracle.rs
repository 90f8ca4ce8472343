//! Empirical checks of the kernel sensitivity bounds.
//!
//! Each check draws β-close neighbours of a dataset, measures the quantity
//! a bound controls, and reports the worst observed ratio to that bound.
//! Every trial uses its own substream `trial/<t>`, so reports are a pure
//! function of `(data, parameters, seed)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::dp::budget::{continuous_sensitivity_psi, SensitivityInputs};
use crate::error::{NtkError, Result};
use crate::kernel::{continuous_kernel, discrete_kernel, Dataset, WeightMatrix};
use crate::numerics::{inv_sqrt, sym_eigen, SymMatrix};
use crate::rng::RngStream;

/// Default slack on the discrete-kernel Frobenius bound; covers the finite-m
/// gap between discrete and continuous kernels.
pub const DEFAULT_DISCRETE_SLACK: f64 = 2.0;

/// Fraction of trials that must meet the discrete bound.
pub const DISCRETE_PASS_FRACTION: f64 = 0.99;

/// One named bound compared against its empirical counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub theoretical: f64,
    pub empirical: f64,
    pub ratio: f64,
    pub passed: bool,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, theoretical: f64, empirical: f64, passed: bool) -> Self {
        Self {
            name: name.into(),
            theoretical,
            empirical,
            ratio: ratio(empirical, theoretical),
            passed,
        }
    }

    /// Passes iff `empirical ≤ theoretical`.
    pub fn upper(name: impl Into<String>, theoretical: f64, empirical: f64) -> Self {
        let passed = empirical <= theoretical;
        Self::new(name, theoretical, empirical, passed)
    }
}

/// `a / b` with `0 / 0 = 0`.
pub fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a / b
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborPair {
    pub base: Dataset,
    pub neighbor: Dataset,
    pub beta: f64,
    pub changed_index: usize,
}

impl NeighborPair {
    /// `‖x_c - x_c'‖₂` for the changed row.
    pub fn distance(&self) -> f64 {
        let a = self.base.row(self.changed_index);
        let b = self.neighbor.row(self.changed_index);
        a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
    }
}

/// Replaces the last row `x` by `clip_B(x + u)` with `u` uniform in the
/// β-ball. Clipping is the projection onto the B-ball, which is
/// non-expansive, so `‖x - x'‖ ≤ β` survives it.
pub fn beta_neighbor(data: &Dataset, beta: f64, rng: &RngStream) -> Result<NeighborPair> {
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(NtkError::invalid(format!("beta must be >= 0, got {beta}")));
    }
    let last = data.n() - 1;
    if beta == 0.0 {
        return Ok(NeighborPair {
            base: data.clone(),
            neighbor: data.clone(),
            beta,
            changed_index: last,
        });
    }
    let d = data.dim();
    let mut gen = rng.rng();
    let mut dir: Vec<f64> = (0..d).map(|_| gen.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: f64 = gen.random();
    let radius = beta * u.powf(1.0 / d as f64);
    for v in dir.iter_mut() {
        *v *= radius / norm;
    }
    let mut moved: Vec<f64> = data.row(last).iter().zip(&dir).map(|(x, u)| x + u).collect();
    let moved_norm = moved.iter().map(|v| v * v).sum::<f64>().sqrt();
    if moved_norm > data.bound_b() {
        let s = data.bound_b() / moved_norm;
        moved.iter_mut().for_each(|v| *v *= s);
    }
    Ok(NeighborPair {
        neighbor: data.with_row(last, &moved)?,
        base: data.clone(),
        beta,
        changed_index: last,
    })
}

/// A pair that nearly saturates both single-entry Lipschitz bounds: every
/// row is `B·e₁` and the last one shrinks radially to `(B - β)·e₁`.
pub fn radial_probe_pair(n: usize, d: usize, bound_b: f64, beta: f64) -> Result<NeighborPair> {
    if !(beta >= 0.0 && beta <= bound_b) {
        return Err(NtkError::invalid("radial probe needs 0 <= beta <= B"));
    }
    let mut x = nalgebra::DMatrix::zeros(n, d);
    for i in 0..n {
        x[(i, 0)] = bound_b;
    }
    let base = Dataset::new(x, nalgebra::DMatrix::zeros(n, 1), bound_b)?;
    let mut moved = vec![0.0; d];
    moved[0] = bound_b - beta;
    let neighbor = base.with_row(n - 1, &moved)?;
    Ok(NeighborPair {
        base,
        neighbor,
        beta,
        changed_index: n - 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntryLipschitzReport {
    /// Worst `|ΔH_ij| / (2σ²B³‖x - x'‖)` over the changed row, `j ≠ i`.
    pub max_offdiag_ratio: f64,
    /// `|ΔH_ii| / (4σ²B³‖x - x'‖)` for the changed index.
    pub diag_ratio: f64,
}

impl EntryLipschitzReport {
    pub fn passed(&self) -> bool {
        self.max_offdiag_ratio <= 1.0 && self.diag_ratio <= 1.0
    }
}

pub fn entry_lipschitz_check(pair: &NeighborPair, sigma: f64) -> Result<EntryLipschitzReport> {
    let h = continuous_kernel(&pair.base, sigma)?;
    let h2 = continuous_kernel(&pair.neighbor, sigma)?;
    let c = pair.changed_index;
    let b3 = pair.base.bound_b().powi(3);
    let dist = pair.distance();
    let unit = sigma * sigma * b3 * dist;
    let mut max_offdiag_ratio: f64 = 0.0;
    for j in 0..pair.base.n() {
        if j == c {
            continue;
        }
        let delta = (h.matrix().get(c, j) - h2.matrix().get(c, j)).abs();
        max_offdiag_ratio = max_offdiag_ratio.max(ratio(delta, 2.0 * unit));
    }
    let diag = (h.matrix().get(c, c) - h2.matrix().get(c, c)).abs();
    Ok(EntryLipschitzReport {
        max_offdiag_ratio,
        diag_ratio: ratio(diag, 4.0 * unit),
    })
}

fn frobenius_gap(a: &SymMatrix, b: &SymMatrix) -> f64 {
    (a.as_matrix() - b.as_matrix()).norm()
}

fn sensitivity_inputs(data: &Dataset, sigma: f64, beta: f64) -> SensitivityInputs {
    SensitivityInputs {
        n: data.n(),
        sigma,
        bound_b: data.bound_b(),
        beta,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtsSensitivityReport {
    pub trials: usize,
    pub max_gap: f64,
    /// `ψ = √(8n+8) σ² B³ β`.
    pub bound: f64,
    pub max_ratio: f64,
    /// Worst single-entry Lipschitz ratios over the same pairs.
    pub max_offdiag_ratio: f64,
    pub max_diag_ratio: f64,
}

impl CtsSensitivityReport {
    pub fn passed(&self) -> bool {
        self.max_gap <= self.bound
    }

    pub fn checks(&self) -> Vec<BoundCheck> {
        vec![
            BoundCheck::new(
                "entry_lipschitz_offdiag",
                1.0,
                self.max_offdiag_ratio,
                self.max_offdiag_ratio <= 1.0,
            ),
            BoundCheck::new(
                "entry_lipschitz_diag",
                1.0,
                self.max_diag_ratio,
                self.max_diag_ratio <= 1.0,
            ),
            BoundCheck::upper("cts_frobenius", self.bound, self.max_gap),
        ]
    }
}

/// Worst `‖H^cts - H^cts'‖_F` over random β-close neighbours.
pub fn cts_sensitivity_check(
    data: &Dataset,
    sigma: f64,
    beta: f64,
    trials: usize,
    rng: &RngStream,
) -> Result<CtsSensitivityReport> {
    if trials == 0 {
        return Err(NtkError::invalid("need at least one trial"));
    }
    let h = continuous_kernel(data, sigma)?;
    let bound = continuous_sensitivity_psi(&sensitivity_inputs(data, sigma, beta));
    let mut max_gap: f64 = 0.0;
    let mut max_offdiag_ratio: f64 = 0.0;
    let mut max_diag_ratio: f64 = 0.0;
    for t in 0..trials {
        let pair = beta_neighbor(data, beta, &rng.substream(format!("trial/{t}")))?;
        let h2 = continuous_kernel(&pair.neighbor, sigma)?;
        max_gap = max_gap.max(frobenius_gap(h.matrix(), h2.matrix()));
        let entries = entry_lipschitz_check(&pair, sigma)?;
        max_offdiag_ratio = max_offdiag_ratio.max(entries.max_offdiag_ratio);
        max_diag_ratio = max_diag_ratio.max(entries.diag_ratio);
    }
    Ok(CtsSensitivityReport {
        trials,
        max_gap,
        bound,
        max_ratio: ratio(max_gap, bound),
        max_offdiag_ratio,
        max_diag_ratio,
    })
}

/// `‖H^dis - H^cts‖_F`.
pub fn dis_cts_gap(data: &Dataset, w: &WeightMatrix, sigma: f64) -> Result<f64> {
    if w.sigma() != sigma {
        return Err(NtkError::invalid(format!(
            "weights were drawn with sigma {}, asked for {sigma}",
            w.sigma()
        )));
    }
    let hd = discrete_kernel(data, w)?;
    let hc = continuous_kernel(data, sigma)?;
    Ok(frobenius_gap(hd.matrix(), hc.matrix()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisSensitivityReport {
    pub trials: usize,
    pub max_gap: f64,
    pub psi: f64,
    pub slack: f64,
    /// `max_gap / (slack · ψ)`.
    pub max_ratio: f64,
    /// Share of trials with `gap ≤ slack · ψ`.
    pub within_fraction: f64,
    /// Smallest eigenvalue of the base discrete kernel.
    pub eta_min: f64,
    /// Worst `max_i |λ_i - 1| / (ψ / η_min)` over the whitened neighbours
    /// `H^{-1/2} H' H^{-1/2}`; `None` when the base kernel is singular.
    pub sandwich_max_ratio: Option<f64>,
    /// Whether `η_min > ψ`, i.e. the sandwich interval excludes zero.
    pub sandwich_informative: bool,
}

impl DisSensitivityReport {
    pub fn passed(&self) -> bool {
        self.within_fraction >= DISCRETE_PASS_FRACTION
    }

    pub fn sandwich_passed(&self) -> bool {
        self.sandwich_max_ratio.is_none_or(|r| r <= 1.0)
    }

    pub fn checks(&self) -> Vec<BoundCheck> {
        let mut out = vec![BoundCheck::new(
            "dis_frobenius",
            self.slack * self.psi,
            self.max_gap,
            self.passed(),
        )];
        if let Some(r) = self.sandwich_max_ratio {
            let bound = ratio(self.psi, self.eta_min);
            out.push(BoundCheck::new("psd_sandwich", bound, r * bound, r <= 1.0));
        }
        out
    }
}

/// Worst `‖H^dis - H^dis'‖_F` over random β-close neighbours with the
/// weights held fixed, plus the PSD sandwich of the whitened neighbour.
pub fn dis_sensitivity_check(
    data: &Dataset,
    w: &WeightMatrix,
    beta: f64,
    trials: usize,
    rng: &RngStream,
    slack: f64,
) -> Result<DisSensitivityReport> {
    if trials == 0 {
        return Err(NtkError::invalid("need at least one trial"));
    }
    let h = discrete_kernel(data, w)?;
    let psi = continuous_sensitivity_psi(&sensitivity_inputs(data, w.sigma(), beta));
    let eta_min = h.eta_min();
    let whitener = if eta_min > 1e-10 * h.eta_max().max(1e-300) {
        Some(inv_sqrt(h.matrix(), 0.0)?)
    } else {
        None
    };
    let sandwich_unit = ratio(psi, eta_min);
    let mut max_gap: f64 = 0.0;
    let mut within = 0usize;
    let mut sandwich: Option<f64> = whitener.as_ref().map(|_| 0.0);
    for t in 0..trials {
        let pair = beta_neighbor(data, beta, &rng.substream(format!("trial/{t}")))?;
        let h2 = discrete_kernel(&pair.neighbor, w)?;
        let gap = frobenius_gap(h.matrix(), h2.matrix());
        max_gap = max_gap.max(gap);
        if gap <= slack * psi {
            within += 1;
        }
        if let (Some(wh), Some(worst)) = (&whitener, sandwich.as_mut()) {
            let white = SymMatrix::new(wh.as_matrix() * h2.matrix().as_matrix() * wh.as_matrix())?;
            let eig = sym_eigen(&white)?;
            let dev = eig
                .eigenvalues
                .iter()
                .map(|l| (l - 1.0).abs())
                .fold(0.0_f64, f64::max);
            // below machine precision the deviation is rounding, not signal
            let dev = if dev < 1e-12 { 0.0 } else { dev };
            *worst = worst.max(ratio(dev, sandwich_unit));
        }
    }
    Ok(DisSensitivityReport {
        trials,
        max_gap,
        psi,
        slack,
        max_ratio: ratio(max_gap, slack * psi),
        within_fraction: within as f64 / trials as f64,
        eta_min,
        sandwich_max_ratio: sandwich,
        sandwich_informative: eta_min > psi,
    })
}
