use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// Cholesky failed even at the largest jitter of the ladder.
    #[error(
        "cholesky of {size}x{size} matrix failed at jitter {jitter:e} \
         (pivot {pivot:e} at row {row}, diag range [{min_diag:e}, {max_diag:e}])"
    )]
    Decomposition {
        size: usize,
        jitter: f64,
        row: usize,
        pivot: f64,
        min_diag: f64,
        max_diag: f64,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("objective diverged at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("missingness injection failed: {0}")]
    Injection(String),

    #[error("incomplete results table: {0}")]
    Aggregation(String),
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
