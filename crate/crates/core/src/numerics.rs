//! Dense symmetric linear algebra.
//!
//! Everything here is backed by `nalgebra`; the wrappers pin down the
//! contracts the rest of the crate relies on (exact symmetry, ascending
//! spectra, clamped square roots of nearly singular PSD matrices).

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{NtkError, Result};

/// A real symmetric matrix whose entries are finite and whose lower and
/// upper triangles agree bit-for-bit.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    inner: DMatrix<f64>,
}

impl SymMatrix {
    /// Wraps a square matrix, replacing it by `(a + aᵀ) / 2`.
    ///
    /// Fails on non-square, empty or non-finite input. Asymmetry is not an
    /// error; callers that care should check before wrapping.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&a)?;
        let n = a.nrows();
        let mut inner = a;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (inner[(i, j)] + inner[(j, i)]);
                inner[(i, j)] = v;
                inner[(j, i)] = v;
            }
        }
        Ok(Self { inner })
    }

    /// Builds the matrix from its upper triangle, mirroring into the lower one.
    pub fn from_upper(a: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&a)?;
        let n = a.nrows();
        let mut inner = a;
        for i in 0..n {
            for j in (i + 1)..n {
                inner[(j, i)] = inner[(i, j)];
            }
        }
        Ok(Self { inner })
    }

    /// Builds an `n × n` matrix from `f(i, j)` evaluated on `i ≤ j` only.
    pub fn from_fn_upper(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                a[(i, j)] = f(i, j);
            }
        }
        Self::from_upper(a)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            inner: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            inner: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut a = DMatrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            a[(i, i)] = v;
        }
        Self::new(a)
    }

    pub fn order(&self) -> usize {
        self.inner.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.inner
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.inner
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.norm()
    }

    /// `self + shift · I`.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let mut a = self.inner.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += shift;
        }
        Self::from_upper(a)
    }

    /// Default PSD tolerance for this matrix: `1e-8 · max(1, ‖a‖_F)`.
    pub fn default_psd_tol(&self) -> f64 {
        1e-8 * self.frobenius_norm().max(1.0)
    }
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(NtkError::invalid(format!(
            "symmetric matrix must be square with order >= 1, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if let Some(v) = a.iter().find(|v| !v.is_finite()) {
        return Err(NtkError::invalid(format!("non-finite matrix entry {v}")));
    }
    Ok(())
}

/// Eigendecomposition of a symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymEigen {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector for `eigenvalues[i]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SymEigen {
    /// `V · diag(f(λ)) · Vᵀ`, symmetrised from the upper triangle.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(j).scale_mut(s);
        }
        let mut out = &scaled * v.transpose();
        let n = out.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                out[(j, i)] = out[(i, j)];
            }
        }
        out
    }
}

pub fn sym_eigen(a: &SymMatrix) -> Result<SymEigen> {
    check_square_finite(a.as_matrix())?;
    let n = a.order();
    let eig = SymmetricEigen::new(a.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEigen {
        eigenvalues,
        eigenvectors,
    })
}

/// Smallest and largest eigenvalue, in that order.
pub fn eigen_extremes(a: &SymMatrix) -> Result<(f64, f64)> {
    let eig = sym_eigen(a)?;
    let n = eig.eigenvalues.len();
    Ok((eig.eigenvalues[0], eig.eigenvalues[n - 1]))
}

pub fn is_psd(a: &SymMatrix, tol: f64) -> Result<bool> {
    let (eta_min, _) = eigen_extremes(a)?;
    Ok(eta_min >= -tol)
}

/// Symmetric square root of a PSD matrix. Eigenvalues in `[-tol, 0)` are
/// clamped to zero; anything more negative is rejected.
pub fn psd_sqrt(a: &SymMatrix, tol: f64) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    if eig.eigenvalues[0] < -tol {
        return Err(NtkError::NotPsd {
            eigenvalue: eig.eigenvalues[0],
            tol,
        });
    }
    SymMatrix::from_upper(eig.reconstruct_with(|lam| lam.max(0.0).sqrt()))
}

/// Inverse square root of a positive definite matrix. Eigenvalues must
/// exceed `floor`.
pub fn inv_sqrt(a: &SymMatrix, floor: f64) -> Result<SymMatrix> {
    let eig = sym_eigen(a)?;
    if eig.eigenvalues[0] <= floor {
        return Err(NtkError::NotPositiveDefinite);
    }
    SymMatrix::from_upper(eig.reconstruct_with(|lam| lam.sqrt().recip()))
}

/// Solves `a · x = b` through a Cholesky factorisation.
pub fn spd_solve(a: &SymMatrix, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if b.nrows() != a.order() {
        return Err(NtkError::DimensionMismatch {
            expected: a.order(),
            found: b.nrows(),
        });
    }
    let chol = Cholesky::new(a.as_matrix().clone()).ok_or(NtkError::NotPositiveDefinite)?;
    Ok(chol.solve(b))
}
