//! Dense kernels shared by every other module: matrix storage, products,
//! norms, Gram-Schmidt reorthogonalization and a Jacobi SVD oracle.

pub mod io;
mod matrix;
mod ortho;
mod svd;

pub use matrix::{frobenius_distance, frobenius_norm, matmul, matmul_flops, relative_distance, DenseMatrix, Vector};
pub use ortho::orthogonalize_against;
pub use svd::{svd_oracle, Svd, ORACLE_MAX_DIM};

pub(crate) use ortho::{norm, project_out};
pub(crate) use svd::jacobi_svd;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("expected {expected} values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },
    #[error("orthogonalization breakdown: residual norm {norm:e}")]
    Breakdown { norm: f64 },
    #[error("matrix dimension {dim} exceeds oracle limit {max}")]
    TooLarge { dim: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed matrix file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
