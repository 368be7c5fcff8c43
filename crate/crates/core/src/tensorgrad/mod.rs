//! Dense-matrix reverse-mode differentiation for the ELBO objectives.
//!
//! The primitive set is deliberately small: elementwise arithmetic,
//! broadcasting and reductions, (transposed) matrix products, Cholesky,
//! triangular solves, and a fused RBF cross-covariance. Everything the
//! sparse, deep and chained GP bounds need is composed from these.

mod graph;
mod kl;
pub mod linalg;
mod mat;

pub use graph::{Axis, Gradients, Graph, Var};
pub use kl::{gaussian_kl, gaussian_kl_chol};
pub use linalg::{safe_cholesky, PsdFactor};
pub use mat::Mat;
