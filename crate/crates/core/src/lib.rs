//! Activation low-rank decomposition toolkit.
//!
//! * [`linalg`]: dense kernels and a Jacobi SVD oracle.
//! * [`lanczos`]: truncated SVD through Lanczos bidiagonalization.
//! * [`decomp`]: decomposed and decomposition-preserving matmul schemes with
//!   exact FLOP/byte accounting.
//! * [`outlier`]: per-layer threshold calibration and outlier-channel
//!   extraction.
//! * [`dcomsim`]: analytical latency/energy model of the decomposition
//!   accelerator and a roofline GPU baseline.
//! * [`harness`]: layer plans, sweeps and convergence benchmarks.

// `!(x > 0.0)` is how parameter checks reject NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dcomsim;
pub mod decomp;
pub mod harness;
pub mod lanczos;
pub mod linalg;
pub mod outlier;
pub mod synth;

pub use lanczos::DecomposedMatrix;
pub use linalg::{DenseMatrix, Vector};
