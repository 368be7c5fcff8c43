//! Gaussian-process missing-value imputation.
//!
//! The crate is `no_std` (with `alloc`) and contains the algorithmic parts
//! only: a small reverse-mode differentiation engine over dense matrices,
//! sparse variational GPs, doubly-stochastic deep GPs, the chained missing-GP
//! network, classic baselines (mean, median, KNN, MICE), dataset transforms
//! (splitting, MCAR injection, z-scores) and evaluation statistics (RMSE,
//! average ranks, Nemenyi critical distance).
//!
//! Missing cells are encoded as `NaN` throughout.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod data;
pub mod dgp;
mod error;
pub mod eval;
pub mod imputation;
pub mod kernels;
pub mod mgp;
pub mod optim;
pub mod rng;
pub mod svgp;
pub mod tensorgrad;

pub use error::{Error, Result};
pub use tensorgrad::Mat;
