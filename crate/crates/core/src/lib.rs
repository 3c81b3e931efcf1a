//! Laplacian and Gaussian quasi-maximum likelihood estimation for affine
//! causal time series `X_t = M_θ(X_{t−1}, …)·ζ_t + f_θ(X_{t−1}, …)`.
//!
//! The crate covers ARMA, ARCH, GARCH, APARCH and their ARMA compositions:
//! simulation, truncated quasi-likelihood contrasts, a box-constrained
//! multi-start simplex optimizer, sandwich covariances and a replicated
//! Monte Carlo harness.

pub mod asymptotics;
pub mod contrast;
pub mod error;
pub mod models;
pub mod montecarlo;
pub mod noise;
pub mod optimize;
pub mod simulate;

pub use error::{QmleError, Result};
