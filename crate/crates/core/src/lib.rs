//! Differentially private regression with the quadratic-activation neural
//! tangent kernel.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`] and [`rng`]: dense symmetric linear algebra and
//!   reproducible, path-addressed random streams.
//! * [`kernel`]: datasets, frozen Gaussian weights and the discrete /
//!   continuous quadratic NTK.
//! * [`dp`]: the truncated Laplace mechanism on features, the Gaussian
//!   sampling mechanism on PSD kernels, and the budget calculus that gates
//!   them.
//! * [`regression`]: kernel ridge regression, its private counterpart and
//!   the closed-form utility bounds.
//! * [`oracle`]: brute-force and Monte-Carlo checks of every sensitivity
//!   bound used by the budget calculus.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dp;
pub mod error;
pub mod kernel;
pub mod numerics;
pub mod oracle;
pub mod regression;
pub mod rng;

pub use error::{NtkError, Result};
pub use kernel::{Dataset, KernelKind, KernelMatrix, WeightMatrix};
pub use numerics::SymMatrix;
pub use rng::RngStream;
