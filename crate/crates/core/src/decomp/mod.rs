//! Matmuls on decomposed activations.
//!
//! Four schemes are provided. Two multiply a decomposed input by a dense
//! weight, two multiply it by a decomposed weight. Each comes in a plain form
//! that returns a dense product and a preserved form that returns a new
//! factor triple, so consecutive layers never have to re-decompose.
//! Every scheme reports the FLOPs it spent and the largest matrix it
//! allocated.
//!
//! [`cost_report`] evaluates the closed-form FLOP, byte and ratio formulas at
//! model scale without touching any data. Bytes assume 2-byte elements.

mod cost;

pub use cost::{breakeven_rank, cost_report, CostDims, CostRanks, CostReport, Scheme, BYTES_PER_ELEMENT};

use rayon::prelude::*;
use thiserror::Error;

use crate::lanczos::{lanczos_svd, LanczosError, LanczosOptions};
use crate::linalg::{matmul, matmul_flops, DenseMatrix, LinalgError};
use crate::DecomposedMatrix;

#[derive(Debug, Error)]
pub enum DecompError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("prompt {prompt} has shape {found:?}, expected {expected:?}")]
    NonUniformShape {
        prompt: usize,
        found: (usize, usize),
        expected: (usize, usize),
    },
    #[error("prompt {prompt} decomposed to rank {found}, expected {expected}")]
    NonUniformRank {
        prompt: usize,
        found: usize,
        expected: usize,
    },
    #[error("prompt {prompt}: {source}")]
    Prompt {
        prompt: usize,
        #[source]
        source: LanczosError,
    },
    #[error("invalid ranks: {0}")]
    InvalidRanks(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A batch split into prompts, each `S × H`.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchActivations {
    prompts: Vec<DenseMatrix>,
}

impl BatchActivations {
    pub fn new(prompts: Vec<DenseMatrix>) -> Result<Self, DecompError> {
        let first = prompts.first().ok_or(DecompError::EmptyBatch)?.shape();
        if let Some((i, p)) = prompts.iter().enumerate().find(|(_, p)| p.shape() != first) {
            return Err(DecompError::NonUniformShape {
                prompt: i,
                found: p.shape(),
                expected: first,
            });
        }
        Ok(Self { prompts })
    }

    pub fn prompts(&self) -> &[DenseMatrix] {
        &self.prompts
    }

    pub fn batch(&self) -> usize {
        self.prompts.len()
    }

    pub fn seq_len(&self) -> usize {
        self.prompts[0].rows()
    }

    pub fn hidden(&self) -> usize {
        self.prompts[0].cols()
    }
}

/// One decomposition per prompt, all with the same ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposedBatch {
    items: Vec<DecomposedMatrix>,
    r1: usize,
    r2: usize,
}

impl DecomposedBatch {
    pub fn new(items: Vec<DecomposedMatrix>) -> Result<Self, DecompError> {
        let first = items.first().ok_or(DecompError::EmptyBatch)?;
        let (r1, r2) = (first.r1(), first.r2());
        for (i, d) in items.iter().enumerate() {
            if d.r1() != r1 || d.r2() != r2 {
                return Err(DecompError::NonUniformRank {
                    prompt: i,
                    found: d.r1(),
                    expected: r1,
                });
            }
        }
        Ok(Self { items, r1, r2 })
    }

    pub fn items(&self) -> &[DecomposedMatrix] {
        &self.items
    }

    pub fn ranks(&self) -> (usize, usize) {
        (self.r1, self.r2)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Decomposes every prompt independently. Prompt `i` uses seed
/// `opts.seed + i`, so the result does not depend on scheduling.
///
/// Fails if any prompt breaks down to a lower rank than the others, since
/// the factors of a batch have to be concatenable.
pub fn decompose_batch(x: &BatchActivations, k: usize, opts: &LanczosOptions) -> Result<DecomposedBatch, DecompError> {
    let items = x
        .prompts
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let o = LanczosOptions {
                seed: opts.seed.wrapping_add(i as u64),
                ..*opts
            };
            lanczos_svd(p, k, &o)
                .map(|(d, _)| d)
                .map_err(|source| DecompError::Prompt { prompt: i, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    DecomposedBatch::new(items)
}

/// Work done by one scheme evaluation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatmulStats {
    /// FLOPs of each small matmul, in evaluation order.
    pub stage_flops: Vec<u64>,
    /// Elements in the largest matrix allocated, output included.
    pub peak_elements: usize,
}

impl MatmulStats {
    pub fn flops(&self) -> u64 {
        self.stage_flops.iter().sum()
    }

    fn step(&mut self, a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let out = matmul(a, b)?;
        self.stage_flops.push(matmul_flops(a.rows(), a.cols(), b.cols()));
        self.peak_elements = self.peak_elements.max(out.len());
        Ok(out)
    }
}

fn check_inner(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Result<(), LinalgError> {
    if left.1 != right.0 {
        return Err(LinalgError::ShapeMismatch { op, left, right });
    }
    Ok(())
}

/// `U · (Σ · (V · W))`, returning the dense `S × W_cols` product.
pub fn matmul_input_decomposed(
    d: &DecomposedMatrix,
    w: &DenseMatrix,
) -> Result<(DenseMatrix, MatmulStats), LinalgError> {
    check_inner("matmul_input_decomposed", (d.rows(), d.cols()), w.shape())?;
    let mut st = MatmulStats::default();
    let t1 = st.step(d.v(), w)?;
    let t2 = st.step(d.sigma(), &t1)?;
    let out = st.step(d.u(), &t2)?;
    Ok((out, st))
}

/// Keeps `U` and `Σ` and replaces `V` by `V* = V · W`.
pub fn matmul_preserved_input(
    d: &DecomposedMatrix,
    w: &DenseMatrix,
) -> Result<(DecomposedMatrix, MatmulStats), LinalgError> {
    check_inner("matmul_preserved_input", (d.rows(), d.cols()), w.shape())?;
    let mut st = MatmulStats::default();
    let v_star = st.step(d.v(), w)?;
    Ok((d.with_v(v_star)?, st))
}

/// Inner core shared by both input+weight schemes:
/// `Σ_I · ((V_I · U_W) · Σ_W)`.
fn input_weight_core(
    dx: &DecomposedMatrix,
    dw: &DecomposedMatrix,
    st: &mut MatmulStats,
) -> Result<DenseMatrix, LinalgError> {
    check_inner("input_weight", (dx.rows(), dx.cols()), (dw.rows(), dw.cols()))?;
    let t1 = st.step(dx.v(), dw.u())?;
    let t2 = st.step(&t1, dw.sigma())?;
    st.step(dx.sigma(), &t2)
}

/// `U_I · (Σ_I · V_I · U_W · Σ_W · V_W)` with the small products formed
/// first, returning the dense `S × W_cols` product.
pub fn matmul_input_weight_decomposed(
    dx: &DecomposedMatrix,
    dw: &DecomposedMatrix,
) -> Result<(DenseMatrix, MatmulStats), LinalgError> {
    let mut st = MatmulStats::default();
    let t3 = input_weight_core(dx, dw, &mut st)?;
    let t4 = st.step(&t3, dw.v())?;
    let out = st.step(dx.u(), &t4)?;
    Ok((out, st))
}

/// Returns `(U_I, Σ*, V_W)` with `Σ* = Σ_I · V_I · U_W · Σ_W`. The new core is
/// a dense `r1 × p2` matrix.
pub fn matmul_preserved_input_weight(
    dx: &DecomposedMatrix,
    dw: &DecomposedMatrix,
) -> Result<(DecomposedMatrix, MatmulStats), LinalgError> {
    let mut st = MatmulStats::default();
    let sigma_star = input_weight_core(dx, dw, &mut st)?;
    let out = DecomposedMatrix::new(dx.u().clone(), sigma_star, dw.v().clone(), false)?;
    Ok((out, st))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_distance;
    use crate::synth::gaussian_matrix;

    fn exact(a: &DenseMatrix) -> DecomposedMatrix {
        // identity factors give an exact (if uncompressed) decomposition
        let n = a.cols();
        DecomposedMatrix::new(a.clone(), DenseMatrix::identity(n), DenseMatrix::identity(n), true).unwrap()
    }

    #[test]
    fn input_decomposed_matches_dense() {
        let a = gaussian_matrix(6, 5, 1);
        let w = gaussian_matrix(5, 4, 2);
        let (got, st) = matmul_input_decomposed(&exact(&a), &w).unwrap();
        assert!(relative_distance(&got, &matmul(&a, &w).unwrap()).unwrap() < 1e-6);
        assert_eq!(st.flops(), 2 * (5 * 5 * 4 + 5 * 5 * 4 + 6 * 5 * 4));
    }

    #[test]
    fn preserved_input_identity_keeps_v() {
        let a = gaussian_matrix(6, 5, 1);
        let d = exact(&a);
        let (p, st) = matmul_preserved_input(&d, &DenseMatrix::identity(5)).unwrap();
        assert_eq!(p.v(), d.v());
        assert_eq!(st.flops(), 2 * 5 * 5 * 5);
    }

    #[test]
    fn preserved_input_weight_shape() {
        let dx = DecomposedMatrix::from_singular(gaussian_matrix(8, 3, 1), &[3.0, 2.0, 1.0], gaussian_matrix(3, 6, 2))
            .unwrap();
        let dw =
            DecomposedMatrix::from_singular(gaussian_matrix(6, 2, 3), &[1.0, 0.5], gaussian_matrix(2, 7, 4)).unwrap();
        let (p, _) = matmul_preserved_input_weight(&dx, &dw).unwrap();
        assert_eq!(p.sigma().shape(), (3, 2));
        assert!(!p.is_diagonal());
        let dense = matmul(&dx.reconstruct(), &dw.reconstruct()).unwrap();
        assert!(relative_distance(&p.reconstruct(), &dense).unwrap() < 1e-5);
    }

    #[test]
    fn shape_errors() {
        let d = exact(&gaussian_matrix(4, 3, 1));
        assert!(matmul_input_decomposed(&d, &gaussian_matrix(4, 2, 2)).is_err());
        assert!(matmul_preserved_input(&d, &gaussian_matrix(2, 2, 2)).is_err());
        let dw = exact(&gaussian_matrix(5, 2, 3));
        assert!(matmul_input_weight_decomposed(&d, &dw).is_err());
        assert!(matmul_preserved_input_weight(&d, &dw).is_err());
    }

    #[test]
    fn batch_validation() {
        assert!(matches!(BatchActivations::new(vec![]), Err(DecompError::EmptyBatch)));
        let err = BatchActivations::new(vec![gaussian_matrix(4, 3, 1), gaussian_matrix(4, 2, 1)]).unwrap_err();
        assert!(matches!(err, DecompError::NonUniformShape { prompt: 1, .. }));
    }

    #[test]
    fn batch_errors_carry_prompt_index() {
        let x = BatchActivations::new(vec![gaussian_matrix(4, 3, 1), gaussian_matrix(4, 3, 2)]).unwrap();
        let err = decompose_batch(&x, 9, &LanczosOptions::default()).unwrap_err();
        assert!(matches!(err, DecompError::Prompt { prompt: 0, .. }));
    }
}
