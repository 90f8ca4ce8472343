//! Gaussian sampling mechanism: release `Σ̂ = (1/k) Σ g_i g_iᵀ` with
//! `g_i ~ N(0, Σ)`.
//!
//! The output is a sum of outer products and therefore PSD by construction.
//! Two samplers produce the same distribution:
//!
//! * [`GsmSampler::OuterProducts`] draws every `g_i = Σ^{1/2} z_i` from its
//!   own substream `gsm/i` and accumulates the outer products in index
//!   order. Cost `O(n³ + k n²)`.
//! * [`GsmSampler::Bartlett`] draws `Z Zᵀ ~ Wishart(k, I)` directly through
//!   the Bartlett decomposition and returns `Σ^{1/2} (Z Zᵀ) Σ^{1/2} / k`.
//!   Cost `O(n³)` independent of `k`; needs `k ≥ n`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{NtkError, Result};
use crate::numerics::{psd_sqrt, SymMatrix};
use crate::rng::RngStream;

/// Above this many multiply-adds (`k · n²`) the automatic sampler switches
/// to the Bartlett construction.
const AUTO_BARTLETT_WORK: f64 = (1u64 << 24) as f64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GsmSampler {
    OuterProducts,
    Bartlett,
    #[default]
    Auto,
}

impl GsmSampler {
    fn resolve(self, n: usize, k: usize) -> Self {
        match self {
            GsmSampler::Auto => {
                let work = k as f64 * (n * n) as f64;
                if k >= n && work > AUTO_BARTLETT_WORK {
                    GsmSampler::Bartlett
                } else {
                    GsmSampler::OuterProducts
                }
            }
            other => other,
        }
    }
}

pub fn gaussian_sampling_mechanism(sigma: &SymMatrix, k: usize, rng: &RngStream) -> Result<SymMatrix> {
    gaussian_sampling_mechanism_with(sigma, k, rng, GsmSampler::Auto)
}

pub fn gaussian_sampling_mechanism_with(
    sigma: &SymMatrix,
    k: usize,
    rng: &RngStream,
    sampler: GsmSampler,
) -> Result<SymMatrix> {
    if k == 0 {
        return Err(NtkError::invalid("GSM needs k >= 1 samples"));
    }
    let root = psd_sqrt(sigma, sigma.default_psd_tol())?;
    let n = sigma.order();
    match sampler.resolve(n, k) {
        GsmSampler::Bartlett => bartlett(root.as_matrix(), k, rng),
        _ => outer_products(root.as_matrix(), k, rng),
    }
}

fn outer_products(root: &DMatrix<f64>, k: usize, rng: &RngStream) -> Result<SymMatrix> {
    let n = root.nrows();
    // row-major copy of the root for contiguous row dots
    let rows: Vec<Vec<f64>> = (0..n).map(|a| root.row(a).iter().copied().collect()).collect();
    let mut acc = DMatrix::<f64>::zeros(n, n);
    let mut z = vec![0.0; n];
    let mut g = vec![0.0; n];
    for i in 0..k {
        let mut gen = rng.substream(format!("gsm/{i}")).rng();
        for v in z.iter_mut() {
            *v = gen.sample(StandardNormal);
        }
        for (ga, row) in g.iter_mut().zip(&rows) {
            *ga = crate::kernel::dot(row, &z);
        }
        for b in 0..n {
            let gb = g[b];
            for a in 0..=b {
                acc[(a, b)] += g[a] * gb;
            }
        }
    }
    acc /= k as f64;
    SymMatrix::from_upper(acc)
}

fn bartlett(root: &DMatrix<f64>, k: usize, rng: &RngStream) -> Result<SymMatrix> {
    let n = root.nrows();
    if k < n {
        return Err(NtkError::invalid(format!(
            "Bartlett sampling needs k >= n, got k = {k}, n = {n}"
        )));
    }
    let mut gen = rng.substream("gsm/bartlett").rng();
    let mut lower = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new((k - i) as f64)
            .map_err(|e| NtkError::invalid(format!("chi-square: {e}")))?;
        lower[(i, i)] = chi.sample(&mut gen).sqrt();
        for j in 0..i {
            lower[(i, j)] = gen.sample(StandardNormal);
        }
    }
    let a = root * lower;
    let mut out = &a * a.transpose();
    out /= k as f64;
    SymMatrix::from_upper(out)
}
