//! Expectation-maximization for symmetric two-component mixed linear regression.
//!
//! The generating model is `Y = ν·Xᵀθ* + σ*·Z` with `X ~ N(0, I_d)`, a Rademacher
//! label `ν` and standard Gaussian noise `Z`. The crate provides
//!
//! * [`model`]: ground truth, datasets, SNR regimes and the sign-symmetric error metric;
//! * [`numerics`]: Cholesky solves, top eigenpairs, Gauss–Hermite rules and seeded sampling;
//! * [`em`]: the finite-sample EM operators (standard, Easy-EM, unknown variance) and drivers;
//! * [`population`]: quadrature evaluation of the population operators and contraction diagnostics;
//! * [`init`]: spectral, random-sphere and perturbed-truth initialization;
//! * [`harness`]: seeded sweeps over `(snr, n)` grids with slope fits and export.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod em;
pub mod error;
pub mod harness;
pub mod init;
pub mod io;
pub mod model;
pub mod numerics;
pub mod population;

pub use error::{Error, Result};
