//! Quadratic-activation neural tangent kernels.
//!
//! For frozen first-layer weights `w_1..w_m ~ N(0, σ² I)` the discrete kernel is
//!
//! ```text
//! H_ij = (1/m) Σ_r ⟨⟨w_r, x_i⟩ x_i, ⟨w_r, x_j⟩ x_j⟩ = (1/m) Σ_r (w_r·x_i)(w_r·x_j)(x_i·x_j)
//! ```
//!
//! and its expectation over the weights is the continuous kernel
//! `σ² (x_i·x_j)²`. Entries are evaluated through the scalar identity on the
//! right, with the `m × n` projections `w_r·x_i` computed once.

use std::sync::OnceLock;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{NtkError, Result};
use crate::numerics::{eigen_extremes, SymMatrix};
use crate::rng::RngStream;

/// Relative slack when validating `‖x_i‖ ≤ B`.
const BOUND_SLACK: f64 = 1e-9;

/// Feature matrix, label matrix and the declared row-norm bound `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DMatrix<f64>,
    bound_b: f64,
}

impl Dataset {
    /// Validates shapes, finiteness and `‖x_i‖₂ ≤ bound_b` for every row.
    pub fn new(features: DMatrix<f64>, labels: DMatrix<f64>, bound_b: f64) -> Result<Self> {
        let (n, d) = features.shape();
        if n == 0 || d == 0 {
            return Err(NtkError::invalid("dataset needs n >= 1 and d >= 1"));
        }
        if labels.nrows() != n {
            return Err(NtkError::DimensionMismatch {
                expected: n,
                found: labels.nrows(),
            });
        }
        if labels.ncols() == 0 {
            return Err(NtkError::invalid("labels need at least one column"));
        }
        if !(bound_b.is_finite() && bound_b > 0.0) {
            return Err(NtkError::invalid(format!("bound B must be positive, got {bound_b}")));
        }
        if features.iter().chain(labels.iter()).any(|v| !v.is_finite()) {
            return Err(NtkError::invalid("dataset contains non-finite values"));
        }
        for i in 0..n {
            let norm = features.row(i).norm();
            if norm > bound_b * (1.0 + BOUND_SLACK) {
                return Err(NtkError::invalid(format!(
                    "row {i} has norm {norm} exceeding bound B = {bound_b}"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            bound_b,
        })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of label columns (1 for binary ±1 labels, n_cls for one-hot).
    pub fn n_outputs(&self) -> usize {
        self.labels.ncols()
    }

    pub fn bound_b(&self) -> f64 {
        self.bound_b
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DMatrix<f64> {
        &self.labels
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).iter().copied().collect()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n()).map(|i| self.row(i)).collect()
    }

    /// Copy with row `i` replaced; the bound is re-validated.
    pub fn with_row(&self, i: usize, row: &[f64]) -> Result<Self> {
        if row.len() != self.dim() {
            return Err(NtkError::DimensionMismatch {
                expected: self.dim(),
                found: row.len(),
            });
        }
        let mut features = self.features.clone();
        for (j, &v) in row.iter().enumerate() {
            features[(i, j)] = v;
        }
        Self::new(features, self.labels.clone(), self.bound_b)
    }

    /// Subset of rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices);
        let labels = self.labels.select_rows(indices);
        Self::new(features, labels, self.bound_b)
    }
}

/// Frozen first-layer weights, one row per neuron.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    weights: DMatrix<f64>,
    sigma: f64,
    origin: RngStream,
}

impl WeightMatrix {
    pub fn from_parts(weights: DMatrix<f64>, sigma: f64, origin: RngStream) -> Result<Self> {
        if weights.nrows() == 0 || weights.ncols() == 0 {
            return Err(NtkError::invalid("weight matrix needs m >= 1 and d >= 1"));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(NtkError::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(NtkError::invalid("non-finite weight"));
        }
        Ok(Self {
            weights,
            sigma,
            origin,
        })
    }

    pub fn m(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// The stream the weights were drawn from.
    pub fn origin(&self) -> &RngStream {
        &self.origin
    }
}

/// Draws an `m × d` matrix with i.i.d. `N(0, σ²)` entries, row by row.
pub fn sample_weights(m: usize, d: usize, sigma: f64, rng: &RngStream) -> Result<WeightMatrix> {
    if m == 0 || d == 0 {
        return Err(NtkError::invalid("sample_weights needs m >= 1 and d >= 1"));
    }
    let mut gen = rng.rng();
    let mut weights = DMatrix::zeros(m, d);
    for r in 0..m {
        for j in 0..d {
            let z: f64 = gen.sample(StandardNormal);
            weights[(r, j)] = sigma * z;
        }
    }
    WeightMatrix::from_parts(weights, sigma, rng.clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KernelKind {
    Discrete,
    Continuous,
    Privatized,
}

/// A kernel matrix with lazily cached spectral extremes.
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    matrix: SymMatrix,
    kind: KernelKind,
    extremes: OnceLock<(f64, f64)>,
}

impl KernelMatrix {
    pub fn new(matrix: SymMatrix, kind: KernelKind) -> Self {
        Self {
            matrix,
            kind,
            extremes: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> SymMatrix {
        self.matrix
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn order(&self) -> usize {
        self.matrix.order()
    }

    fn extremes(&self) -> (f64, f64) {
        *self.extremes.get_or_init(|| {
            eigen_extremes(&self.matrix).expect("SymMatrix entries are finite by construction")
        })
    }

    pub fn eta_min(&self) -> f64 {
        self.extremes().0
    }

    pub fn eta_max(&self) -> f64 {
        self.extremes().1
    }

    pub fn is_psd(&self) -> bool {
        self.eta_min() >= -self.matrix.default_psd_tol()
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Training rows together with their projections onto every neuron.
///
/// Both the kernel matrix and query-time kernel vectors go through
/// [`ProjectedData::entry`], so `kernel_vector(x_i)[j]` reproduces
/// `H_ij` bit-for-bit.
#[derive(Clone, Debug)]
pub struct ProjectedData {
    rows: Vec<Vec<f64>>,
    proj: Vec<Vec<f64>>,
    neurons: Vec<Vec<f64>>,
    bound_b: f64,
}

impl ProjectedData {
    pub fn new(data: &Dataset, w: &WeightMatrix) -> Result<Self> {
        if data.dim() != w.dim() {
            return Err(NtkError::DimensionMismatch {
                expected: w.dim(),
                found: data.dim(),
            });
        }
        let neurons: Vec<Vec<f64>> = (0..w.m())
            .map(|r| w.weights().row(r).iter().copied().collect())
            .collect();
        let rows = data.rows();
        let proj = rows.iter().map(|x| project(&neurons, x)).collect();
        Ok(Self {
            rows,
            proj,
            neurons,
            bound_b: data.bound_b(),
        })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    #[inline]
    fn entry(&self, pa: &[f64], pb: &[f64], xa: &[f64], xb: &[f64]) -> f64 {
        let m = self.neurons.len() as f64;
        (dot(pa, pb) / m) * dot(xa, xb)
    }

    pub fn kernel_matrix(&self) -> Result<SymMatrix> {
        SymMatrix::from_fn_upper(self.n(), |i, j| {
            self.entry(&self.proj[i], &self.proj[j], &self.rows[i], &self.rows[j])
        })
    }

    /// `K(x, X)`: one entry per training row.
    pub fn kernel_vector(&self, x: &[f64]) -> Result<DVector<f64>> {
        let d = self.neurons.first().map_or(0, Vec::len);
        if x.len() != d {
            return Err(NtkError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let norm = dot(x, x).sqrt();
        if norm > self.bound_b * (1.0 + BOUND_SLACK) {
            warn!(
                "query norm {norm} exceeds bound B = {}; utility bounds do not apply",
                self.bound_b
            );
        }
        let px = project(&self.neurons, x);
        Ok(DVector::from_iterator(
            self.n(),
            (0..self.n()).map(|j| self.entry(&px, &self.proj[j], x, &self.rows[j])),
        ))
    }
}

fn project(neurons: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    neurons.iter().map(|w| dot(w, x)).collect()
}

pub fn discrete_kernel(data: &Dataset, w: &WeightMatrix) -> Result<KernelMatrix> {
    let projected = ProjectedData::new(data, w)?;
    Ok(KernelMatrix::new(
        projected.kernel_matrix()?,
        KernelKind::Discrete,
    ))
}

/// `σ² (x_i·x_j)²`.
pub fn continuous_kernel(data: &Dataset, sigma: f64) -> Result<KernelMatrix> {
    let rows = data.rows();
    let s2 = sigma * sigma;
    let m = SymMatrix::from_fn_upper(data.n(), |i, j| {
        let g = dot(&rows[i], &rows[j]);
        s2 * g * g
    })?;
    Ok(KernelMatrix::new(m, KernelKind::Continuous))
}

pub fn kernel_vector(x: &[f64], data: &Dataset, w: &WeightMatrix) -> Result<DVector<f64>> {
    ProjectedData::new(data, w)?.kernel_vector(x)
}

/// Scales every row to unit L2 norm and sets `B = 1`.
pub fn normalize_rows(data: &Dataset) -> Result<Dataset> {
    let mut features = data.features().clone();
    for i in 0..data.n() {
        let norm = features.row(i).norm();
        if norm == 0.0 {
            return Err(NtkError::invalid(format!("row {i} is zero and cannot be normalised")));
        }
        features.row_mut(i).unscale_mut(norm);
    }
    Dataset::new(features, data.labels().clone(), 1.0)
}
