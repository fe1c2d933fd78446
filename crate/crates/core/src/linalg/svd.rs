//! Full SVD by one-sided (Hestenes) Jacobi rotations.
//!
//! Slow but accurate to working precision in `f64`; used as the ground-truth
//! decomposition for desk-scale matrices and for the small bidiagonal core
//! of the Lanczos solver.

use super::{ortho, DenseMatrix, LinalgError};

/// Largest `min(rows, cols)` accepted by [`svd_oracle`].
pub const ORACLE_MAX_DIM: usize = 1024;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `A = U · diag(s) · V` with `V` stored row-wise (`p × cols`).
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub v: DenseMatrix,
}

impl Svd {
    /// Relative Frobenius error of the best rank-`k` approximation,
    /// `sqrt(Σ_{i≥k} s_i²) / sqrt(Σ s_i²)`.
    pub fn truncation_error(&self, k: usize) -> f64 {
        let total: f64 = self.s.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self.s.iter().skip(k).map(|s| s * s).sum();
        (tail / total).sqrt()
    }
}

/// Thin SVD in `f64`, row-major buffers.
#[derive(Clone, Debug)]
pub(crate) struct SvdF64 {
    pub rows: usize,
    pub cols: usize,
    /// `rows × p`
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// `p × cols`
    pub vt: Vec<f64>,
    /// Floating-point work spent on column rotations.
    pub flops: u64,
}

impl SvdF64 {
    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Ground-truth SVD of a desk-scale matrix.
///
/// Singular values are sorted descending. Each column of `U` has its
/// largest-magnitude entry (first one on ties) non-negative, with the
/// matching row of `V` flipped alongside.
pub fn svd_oracle(a: &DenseMatrix) -> Result<Svd, LinalgError> {
    let p = a.rows().min(a.cols());
    if p > ORACLE_MAX_DIM {
        return Err(LinalgError::TooLarge {
            dim: p,
            max: ORACLE_MAX_DIM,
        });
    }
    let f = jacobi_svd(a.rows(), a.cols(), &a.to_f64());
    Ok(Svd {
        u: DenseMatrix::from_f64(f.rows, f.rank(), &f.u)?,
        v: DenseMatrix::from_f64(f.rank(), f.cols, &f.vt)?,
        s: f.s,
    })
}

pub(crate) fn jacobi_svd(rows: usize, cols: usize, a: &[f64]) -> SvdF64 {
    debug_assert_eq!(a.len(), rows * cols);
    if rows >= cols {
        tall_svd(rows, cols, a)
    } else {
        // A = (Aᵀ)ᵀ = (U' S V'ᵀ)ᵀ = V' S U'ᵀ
        let mut at = vec![0.0; a.len()];
        for i in 0..rows {
            for j in 0..cols {
                at[j * rows + i] = a[i * cols + j];
            }
        }
        let t = tall_svd(cols, rows, &at);
        let p = t.rank();
        let mut u = vec![0.0; rows * p];
        for i in 0..p {
            for r in 0..rows {
                u[r * p + i] = t.vt[i * rows + r];
            }
        }
        let mut vt = vec![0.0; p * cols];
        for c in 0..cols {
            for i in 0..p {
                vt[i * cols + c] = t.u[c * p + i];
            }
        }
        let mut out = SvdF64 {
            rows,
            cols,
            u,
            s: t.s,
            vt,
            flops: t.flops,
        };
        fix_signs(&mut out);
        out
    }
}

/// One-sided Jacobi for `rows >= cols`.
fn tall_svd(m: usize, n: usize, a: &[f64]) -> SvdF64 {
    // column-major working copies
    let mut w: Vec<Vec<f64>> = (0..n).map(|j| (0..m).map(|i| a[i * n + j]).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let mut flops = 0u64;
    let tol = f64::EPSILON * m as f64;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = ortho::dot(&w[p], &w[p]);
                let beta = ortho::dot(&w[q], &w[q]);
                let gamma = ortho::dot(&w[p], &w[q]);
                flops += 6 * m as u64;
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (wp, wq) = pair_mut(&mut w, p, q);
                rotate(wp, wq, c, s);
                let (vp, vq) = pair_mut(&mut v, p, q);
                rotate(vp, vq, c, s);
                flops += 6 * (m + n) as u64;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<(usize, f64)> = w.iter().map(|col| ortho::norm(col)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let smax = order.first().map_or(0.0, |o| o.1);
    let negligible = smax * f64::EPSILON * (m.max(n) as f64);

    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut vt = vec![0.0; n * n];
    let mut missing = Vec::new();
    for (rank_pos, &(j, sigma)) in order.iter().enumerate() {
        s.push(sigma);
        for (c, val) in v[j].iter().enumerate() {
            vt[rank_pos * n + c] = *val;
        }
        if sigma > negligible && sigma > 0.0 {
            ucols.push(w[j].iter().map(|x| x / sigma).collect());
        } else {
            missing.push(rank_pos);
            ucols.push(Vec::new());
        }
    }
    complete_basis(&mut ucols, &missing, m);

    let mut u = vec![0.0; m * n];
    for (k, col) in ucols.iter().enumerate() {
        for i in 0..m {
            u[i * n + k] = col[i];
        }
    }
    let mut out = SvdF64 {
        rows: m,
        cols: n,
        u,
        s,
        vt,
        flops,
    };
    fix_signs(&mut out);
    out
}

fn pair_mut(cols: &mut [Vec<f64>], p: usize, q: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(p < q);
    let (lo, hi) = cols.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a = *xi;
        let b = *yi;
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills the `missing` slots with unit vectors orthogonal to every other
/// column, trying canonical basis vectors in order.
fn complete_basis(cols: &mut [Vec<f64>], missing: &[usize], m: usize) {
    let mut candidate = 0usize;
    for &slot in missing {
        loop {
            assert!(candidate < m, "orthonormal completion ran out of candidates");
            let mut e = vec![0.0; m];
            e[candidate] = 1.0;
            candidate += 1;
            let basis: Vec<Vec<f64>> = cols.iter().filter(|c| !c.is_empty()).cloned().collect();
            let beta = ortho::project_out(&mut e, &basis, 2);
            if beta > 0.5 {
                e.iter_mut().for_each(|x| *x /= beta);
                cols[slot] = e;
                break;
            }
        }
    }
}

fn fix_signs(f: &mut SvdF64) {
    let p = f.rank();
    for k in 0..p {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..f.rows {
            let x = f.u[i * p + k].abs();
            if x > best_abs {
                best_abs = x;
                best = i;
            }
        }
        if f.u[best * p + k] < 0.0 {
            for i in 0..f.rows {
                f.u[i * p + k] = -f.u[i * p + k];
            }
            for c in 0..f.cols {
                f.vt[k * f.cols + c] = -f.vt[k * f.cols + c];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, matmul};

    fn reconstruct(svd: &Svd) -> DenseMatrix {
        let s: Vec<f32> = svd.s.iter().map(|&x| x as f32).collect();
        let us = matmul(&svd.u, &DenseMatrix::diag(&s).unwrap()).unwrap();
        matmul(&us, &svd.v).unwrap()
    }

    #[test]
    fn diagonal_spectrum_is_exact() {
        let a = DenseMatrix::diag(&[3.0, 2.0, 1.0]).unwrap();
        let svd = svd_oracle(&a).unwrap();
        assert_eq!(svd.s, vec![3.0, 2.0, 1.0]);
    }

    #[test]
    fn unsorted_diagonal_is_sorted() {
        let a = DenseMatrix::diag(&[1.0, 5.0, 2.0]).unwrap();
        let svd = svd_oracle(&a).unwrap();
        assert_eq!(svd.s, vec![5.0, 2.0, 1.0]);
        let r = reconstruct(&svd);
        assert!(frobenius_norm(&r.sub(&a).unwrap()) < 1e-6);
    }

    #[test]
    fn rank_one_outer_product() {
        let x = [1.0f64, -2.0, 0.5, 3.0];
        let y = [2.0f64, 1.0, -1.0];
        let a = DenseMatrix::from_fn(4, 3, |i, j| (x[i] * y[j]) as f32).unwrap();
        let svd = svd_oracle(&a).unwrap();
        let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((svd.s[0] - nx * ny).abs() < 1e-5 * nx * ny);
        assert!(svd.s[1..].iter().all(|&s| s < 1e-5));
        // completion keeps U orthonormal even for zero singular values
        let utu = matmul(&svd.u.transpose(), &svd.u).unwrap();
        let err = frobenius_norm(&utu.sub(&DenseMatrix::identity(3)).unwrap());
        assert!(err < 1e-5, "UᵀU deviates by {err}");
    }

    #[test]
    fn wide_input_goes_through_transpose() {
        let a = DenseMatrix::from_fn(3, 5, |i, j| ((i * 7 + j * 3) % 5) as f32 - 2.0).unwrap();
        let svd = svd_oracle(&a).unwrap();
        assert_eq!(svd.u.shape(), (3, 3));
        assert_eq!(svd.v.shape(), (3, 5));
        let r = reconstruct(&svd);
        assert!(frobenius_norm(&r.sub(&a).unwrap()) <= 1e-5 * frobenius_norm(&a));
    }

    #[test]
    fn sign_convention_holds() {
        let a = DenseMatrix::from_fn(6, 4, |i, j| ((i * 5 + j * 11) % 7) as f32 - 3.0).unwrap();
        let svd = svd_oracle(&a).unwrap();
        for k in 0..svd.u.cols() {
            let col = svd.u.column(k);
            let mut best = 0;
            for (i, v) in col.iter().enumerate() {
                if v.abs() > col[best].abs() {
                    best = i;
                }
            }
            assert!(col[best] >= 0.0);
        }
    }

    #[test]
    fn zero_matrix() {
        let svd = svd_oracle(&DenseMatrix::zeros(4, 2)).unwrap();
        assert_eq!(svd.s, vec![0.0, 0.0]);
        assert_eq!(svd.truncation_error(1), 0.0);
    }

    #[test]
    fn truncation_error_matches_tail() {
        let a = DenseMatrix::diag(&[3.0, 2.0, 1.0]).unwrap();
        let svd = svd_oracle(&a).unwrap();
        assert!((svd.truncation_error(2) - 1.0 / 14f64.sqrt()).abs() < 1e-12);
        assert_eq!(svd.truncation_error(3), 0.0);
    }
}
