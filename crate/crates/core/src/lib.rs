//! Multi-cell massive-MIMO channel estimation laboratory.
//!
//! The crate synthesizes pilot-contaminated uplink observations from a
//! 3GPP-style spatial channel model, trains a conditionally Gaussian
//! variational autoencoder that outputs per-observation first and second
//! moments for the channel of interest and the summed interference, and
//! benchmarks the resulting LMMSE-style estimator against classical and
//! ablated baselines via Monte-Carlo NMSE sweeps.
//!
//! Module map:
//! - [`linalg`] — complex vector/matrix kernels: unitary DFT, circulant
//!   spectra, Hermitian PSD solves, correlated complex Gaussian sampling.
//! - [`channel`] — cluster angle-of-arrival priors, power angular spectra,
//!   Toeplitz channel covariance matrices, per-cell channel draws.
//! - [`scenario`] — pilot matrices, despreading, observation synthesis,
//!   dataset normalization, and the binary dataset file format.
//! - [`vae`] — the conditionally Gaussian VAE: encoder/decoder networks,
//!   analytic ELBO with exact gradients, Adam, training loop, checkpoints.
//! - [`estimators`] — LMMSE core plus the LS, sample-covariance, genie, and
//!   VAE-based estimator family.
//! - [`bench`] — NMSE evaluation, SNR and AoA sweeps, report emission.

pub mod bench;
pub mod channel;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod rng;
pub mod scenario;
pub mod vae;

pub use error::{Error, Result};
