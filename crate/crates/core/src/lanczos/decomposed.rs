use crate::linalg::{DenseMatrix, LinalgError};

/// Factor triple `U · Σ · V` with `U: n1 × r1`, `Σ: r1 × r2`, `V: r2 × n2`.
///
/// `Σ` is diagonal for decompositions produced by the Lanczos solver. The
/// input+weight preserved product replaces it with a dense `r1 × p2` core,
/// in which case `diagonal` is `false` and the ordering/non-negativity
/// guarantees on `Σ` no longer apply.
#[derive(Clone, Debug, PartialEq)]
pub struct DecomposedMatrix {
    u: DenseMatrix,
    sigma: DenseMatrix,
    v: DenseMatrix,
    diagonal: bool,
}

impl DecomposedMatrix {
    pub fn new(u: DenseMatrix, sigma: DenseMatrix, v: DenseMatrix, diagonal: bool) -> Result<Self, LinalgError> {
        if u.cols() != sigma.rows() {
            return Err(LinalgError::ShapeMismatch {
                op: "decomposed(U, Σ)",
                left: u.shape(),
                right: sigma.shape(),
            });
        }
        if sigma.cols() != v.rows() {
            return Err(LinalgError::ShapeMismatch {
                op: "decomposed(Σ, V)",
                left: sigma.shape(),
                right: v.shape(),
            });
        }
        if diagonal {
            let off_diagonal = (0..sigma.rows()).any(|i| (0..sigma.cols()).any(|j| i != j && sigma.get(i, j) != 0.0));
            if sigma.rows() != sigma.cols() || off_diagonal {
                return Err(LinalgError::InvalidArgument("Σ flagged diagonal but is not".into()));
            }
        }
        Ok(Self { u, sigma, v, diagonal })
    }

    /// Builds `U · diag(s) · V`.
    pub fn from_singular(u: DenseMatrix, s: &[f32], v: DenseMatrix) -> Result<Self, LinalgError> {
        Self::new(u, DenseMatrix::diag(s)?, v, true)
    }

    pub fn u(&self) -> &DenseMatrix {
        &self.u
    }

    pub fn sigma(&self) -> &DenseMatrix {
        &self.sigma
    }

    pub fn v(&self) -> &DenseMatrix {
        &self.v
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn into_parts(self) -> (DenseMatrix, DenseMatrix, DenseMatrix, bool) {
        (self.u, self.sigma, self.v, self.diagonal)
    }

    pub fn r1(&self) -> usize {
        self.sigma.rows()
    }

    pub fn r2(&self) -> usize {
        self.sigma.cols()
    }

    /// Rows of the represented matrix.
    pub fn rows(&self) -> usize {
        self.u.rows()
    }

    /// Columns of the represented matrix.
    pub fn cols(&self) -> usize {
        self.v.cols()
    }

    /// Diagonal of `Σ` when it is diagonal.
    pub fn singular_values(&self) -> Option<Vec<f32>> {
        self.diagonal
            .then(|| (0..self.sigma.rows()).map(|i| self.sigma.get(i, i)).collect())
    }

    /// Elements stored across the three factors.
    pub fn element_count(&self) -> usize {
        self.u.len() + self.sigma.len() + self.v.len()
    }

    /// Dense `U Σ V` evaluated in `f64` and rounded once.
    pub fn reconstruct(&self) -> DenseMatrix {
        let data = self.reconstruct_f64();
        DenseMatrix::from_f64(self.rows(), self.cols(), &data).expect("product of finite factors")
    }

    pub(crate) fn reconstruct_f64(&self) -> Vec<f64> {
        let (n1, r1, r2, n2) = (self.rows(), self.r1(), self.r2(), self.cols());
        let u = self.u.as_slice();
        let s = self.sigma.as_slice();
        let v = self.v.as_slice();
        // (U Σ) first: n1 × r2
        let mut us = vec![0.0f64; n1 * r2];
        for i in 0..n1 {
            for p in 0..r1 {
                let up = f64::from(u[i * r1 + p]);
                if up == 0.0 {
                    continue;
                }
                for q in 0..r2 {
                    us[i * r2 + q] += up * f64::from(s[p * r2 + q]);
                }
            }
        }
        let mut out = vec![0.0f64; n1 * n2];
        for i in 0..n1 {
            let row = &mut out[i * n2..(i + 1) * n2];
            for q in 0..r2 {
                let c = us[i * r2 + q];
                if c == 0.0 {
                    continue;
                }
                for (o, &vv) in row.iter_mut().zip(&v[q * n2..(q + 1) * n2]) {
                    *o += c * f64::from(vv);
                }
            }
        }
        out
    }

    pub(crate) fn with_v(&self, v: DenseMatrix) -> Result<Self, LinalgError> {
        Self::new(self.u.clone(), self.sigma.clone(), v, self.diagonal)
    }
}
