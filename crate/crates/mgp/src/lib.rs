//! Files, benchmark harness and command-line front end for the imputation
//! models in `mgp-core`.
//!
//! Matrices use `NaN` for missing cells throughout; on disk a missing cell is
//! `NA` in CSV and `null` in JSON.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fingerprint;
pub mod formats;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
