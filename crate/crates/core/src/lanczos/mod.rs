//! Truncated SVD through Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization.
//!
//! Starting from a seeded unit vector `z₀`, the solver alternates `A·v` and
//! `Aᵀ·u` products, orthogonalizing every new vector against the whole
//! accumulated basis. The scalars produced on the way form an upper
//! bidiagonal core `B` with `A·V = U·B`; the SVD of the small `B` rotates the
//! bases into approximate singular vectors.
//!
//! The Krylov bases are held in `f64`. Outputs are rounded to `f32` storage.

mod decomposed;

pub use decomposed::DecomposedMatrix;

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, jacobi_svd, project_out, svd_oracle, DenseMatrix, LinalgError};
use crate::synth;

#[derive(Debug, Error)]
pub enum LanczosError {
    #[error("rank {k} outside [1, {max}]")]
    RankOutOfRange { k: usize, max: usize },
    #[error("breakdown tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("reorthogonalization passes must be at least 1")]
    BadPasses,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Solver knobs.
///
/// `eps: None` selects `1e-8 · ‖A‖_F / sqrt(n1·n2)`. The solver runs
/// `k + oversample` bidiagonalization steps before truncating to rank `k`;
/// `oversample = 0` runs exactly `k` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    pub eps: Option<f64>,
    pub seed: u64,
    pub passes: usize,
    pub oversample: usize,
}

pub const DEFAULT_OVERSAMPLE: usize = 4;

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            eps: None,
            seed: 0,
            passes: 2,
            oversample: DEFAULT_OVERSAMPLE,
        }
    }
}

impl LanczosOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

pub fn default_breakdown_tol(a: &DenseMatrix) -> f64 {
    let scale = ((a.rows() * a.cols()) as f64).sqrt().max(1.0);
    1e-8 * linalg::frobenius_norm(a) / scale
}

/// Floating-point work per operation class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpFlops {
    pub matvec: u64,
    pub reorth_u: u64,
    pub reorth_v: u64,
    pub normalization: u64,
    pub small_svd: u64,
    pub basis_update: u64,
}

impl OpFlops {
    pub fn total(&self) -> u64 {
        self.matvec + self.reorth_u + self.reorth_v + self.normalization + self.small_svd + self.basis_update
    }

    /// Fraction of all work spent reorthogonalizing `U` and `V`.
    pub fn reorth_share(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (self.reorth_u + self.reorth_v) as f64 / total as f64
    }

    fn add(&mut self, other: &OpFlops) {
        self.matvec += other.matvec;
        self.reorth_u += other.reorth_u;
        self.reorth_v += other.reorth_v;
        self.normalization += other.normalization;
        self.small_svd += other.small_svd;
        self.basis_update += other.basis_update;
    }
}

/// One bidiagonalization step. Iteration 0 is the initialization
/// (`u₀ = A z₀`); `beta` is `β_{j-1}` and is zero for iteration 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub alpha: f64,
    pub beta: f64,
    /// Relative error of the rank-`k` truncation of the current projected
    /// core, `sqrt(1 - Σ_{i<k} s_i(B)² / ‖A‖²)`.
    pub rel_error: f64,
    pub flops: OpFlops,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownKind {
    Alpha,
    Beta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub iteration: usize,
    pub kind: BreakdownKind,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanczosTrace {
    pub iterations: Vec<IterationRecord>,
    pub flops: OpFlops,
    pub breakdown: Option<Breakdown>,
    pub eps: f64,
    pub effective_rank: usize,
}

impl LanczosTrace {
    pub fn alphas(&self) -> Vec<f64> {
        self.iterations.iter().map(|r| r.alpha).collect()
    }

    /// Completed bidiagonalization steps after initialization.
    pub fn steps(&self) -> usize {
        self.iterations.len().saturating_sub(1)
    }

    /// CSV with columns `iteration, alpha, beta, rel_error, flops_matvec,
    /// flops_reorth_u, flops_reorth_v`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "iteration",
            "alpha",
            "beta",
            "rel_error",
            "flops_matvec",
            "flops_reorth_u",
            "flops_reorth_v",
        ])?;
        for r in &self.iterations {
            out.write_record([
                r.iteration.to_string(),
                r.alpha.to_string(),
                r.beta.to_string(),
                r.rel_error.to_string(),
                r.flops.matvec.to_string(),
                r.flops.reorth_u.to_string(),
                r.flops.reorth_v.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Operator<'a> {
    a: &'a [f32],
    rows: usize,
    cols: usize,
}

impl Operator<'_> {
    /// `A · x`
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                self.a[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(&aij, &xj)| f64::from(aij) * xj)
                    .sum()
            })
            .collect()
    }

    /// `Aᵀ · y`
    fn apply_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0f64; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, &aij) in out.iter_mut().zip(&self.a[i * self.cols..(i + 1) * self.cols]) {
                *o += f64::from(aij) * yi;
            }
        }
        out
    }

    fn matvec_flops(&self) -> u64 {
        2 * self.rows as u64 * self.cols as u64
    }
}

fn scale(v: &mut [f64], by: f64) {
    v.iter_mut().for_each(|x| *x /= by);
}

/// Bidiagonal core of size `rows × cols` (upper bidiagonal; `cols` may be
/// `rows + 1` after an α breakdown).
fn bidiagonal(alphas: &[f64], betas: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut b = vec![0.0; rows * cols];
    for (j, &a) in alphas.iter().enumerate().take(rows.min(cols)) {
        b[j * cols + j] = a;
    }
    for (j, &bt) in betas.iter().enumerate() {
        if j < rows && j + 1 < cols {
            b[j * cols + j + 1] = bt;
        }
    }
    b
}

fn projected_error(alphas: &[f64], betas: &[f64], rows: usize, cols: usize, k: usize, norm2: f64) -> (f64, u64) {
    if norm2 == 0.0 {
        return (0.0, 0);
    }
    let b = bidiagonal(alphas, betas, rows, cols);
    let svd = jacobi_svd(rows, cols, &b);
    let captured: f64 = svd.s.iter().take(k).map(|s| s * s).sum();
    ((1.0 - captured / norm2).max(0.0).sqrt(), svd.flops)
}

/// Rank-`k` truncated SVD of `a` by Lanczos bidiagonalization.
///
/// Runs up to `k + oversample` steps after initialization, then keeps the
/// leading `k` singular triplets of the bidiagonal core.
/// Iteration stops early when `α_j` or `β_{j-1}` falls below the breakdown
/// tolerance, or when a basis spans its whole space; the returned rank is
/// then `min(k, completed core size)`.
pub fn lanczos_svd(
    a: &DenseMatrix,
    k: usize,
    opts: &LanczosOptions,
) -> Result<(DecomposedMatrix, LanczosTrace), LanczosError> {
    let (n1, n2) = a.shape();
    let max_rank = n1.min(n2);
    if k == 0 || k > max_rank {
        return Err(LanczosError::RankOutOfRange { k, max: max_rank });
    }
    if opts.passes == 0 {
        return Err(LanczosError::BadPasses);
    }
    let eps = opts.eps.unwrap_or_else(|| default_breakdown_tol(a));
    if !(eps > 0.0) {
        // a zero matrix yields eps = 0; anything non-positive is only accepted there
        if linalg::frobenius_norm(a) != 0.0 || opts.eps.is_some() {
            return Err(LanczosError::BadTolerance(eps));
        }
    }
    let norm_a = linalg::frobenius_norm(a);
    let norm2 = norm_a * norm_a;
    let op = Operator {
        a: a.as_slice(),
        rows: n1,
        cols: n2,
    };
    let passes = opts.passes as u64;
    let steps = k + opts.oversample;

    let mut trace = LanczosTrace {
        iterations: Vec::with_capacity(steps + 1),
        flops: OpFlops::default(),
        breakdown: None,
        eps,
        effective_rank: 0,
    };

    // line 1: seeded z0, normalized
    let mut r = synth::rng(opts.seed);
    let mut z0: Vec<f64> = (0..n2).map(|_| r.random_range(-1.0..1.0)).collect();
    let z0_norm = linalg::norm(&z0);
    scale(&mut z0, z0_norm);
    let mut init = OpFlops {
        normalization: 3 * n2 as u64,
        ..OpFlops::default()
    };

    // line 2
    let mut u = op.apply(&z0);
    init.matvec += op.matvec_flops();
    let alpha0 = linalg::norm(&u);
    init.normalization += 2 * n1 as u64;
    let mut v_basis = vec![z0];
    let mut u_basis: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    let mut alphas = Vec::with_capacity(steps + 1);
    let mut betas: Vec<f64> = Vec::with_capacity(steps);

    if alpha0 < eps || alpha0 == 0.0 {
        trace.breakdown = Some(Breakdown {
            iteration: 0,
            kind: BreakdownKind::Alpha,
            value: alpha0,
        });
        trace.iterations.push(IterationRecord {
            iteration: 0,
            alpha: alpha0,
            beta: 0.0,
            rel_error: if norm2 == 0.0 { 0.0 } else { 1.0 },
            flops: init,
        });
        trace.flops = init;
        // A z0 vanished: nothing captured
        let empty = DecomposedMatrix::new(
            DenseMatrix::zeros(n1, 0),
            DenseMatrix::zeros(0, 0),
            DenseMatrix::zeros(0, n2),
            true,
        )?;
        return Ok((empty, trace));
    }
    scale(&mut u, alpha0);
    init.normalization += n1 as u64;
    u_basis.push(u);
    alphas.push(alpha0);
    let (err0, _) = projected_error(&alphas, &betas, 1, 1, k, norm2);
    trace.iterations.push(IterationRecord {
        iteration: 0,
        alpha: alpha0,
        beta: 0.0,
        rel_error: err0,
        flops: init,
    });
    trace.flops.add(&init);

    // core shape (rows, cols) as iterations complete
    let mut core = (1usize, 1usize);
    for j in 1..=steps {
        let mut step = OpFlops::default();
        // line 4: z = Aᵀ U[:, j-1] against V
        let mut z = op.apply_t(&u_basis[j - 1]);
        step.matvec += op.matvec_flops();
        let beta = if v_basis.len() >= n2 {
            0.0
        } else {
            step.reorth_v += passes * 4 * n2 as u64 * v_basis.len() as u64;
            project_out(&mut z, &v_basis, opts.passes)
        };
        step.normalization += 2 * n2 as u64;
        if beta < eps || beta == 0.0 {
            trace.breakdown = Some(Breakdown {
                iteration: j,
                kind: BreakdownKind::Beta,
                value: beta,
            });
            trace.iterations.push(IterationRecord {
                iteration: j,
                alpha: 0.0,
                beta,
                rel_error: trace.iterations.last().map_or(1.0, |r| r.rel_error),
                flops: step,
            });
            trace.flops.add(&step);
            break;
        }
        scale(&mut z, beta);
        step.normalization += n2 as u64;
        v_basis.push(z);
        betas.push(beta);

        // line 5: u = A V[:, j] against U
        let mut u = op.apply(&v_basis[j]);
        step.matvec += op.matvec_flops();
        let alpha = if u_basis.len() >= n1 {
            0.0
        } else {
            step.reorth_u += passes * 4 * n1 as u64 * u_basis.len() as u64;
            project_out(&mut u, &u_basis, opts.passes)
        };
        step.normalization += 2 * n1 as u64;
        if alpha < eps || alpha == 0.0 {
            // V[:, j] and β_{j-1} still belong to the projection: core is j × (j+1)
            core = (j, j + 1);
            trace.breakdown = Some(Breakdown {
                iteration: j,
                kind: BreakdownKind::Alpha,
                value: alpha,
            });
            let (err, _) = projected_error(&alphas, &betas, core.0, core.1, k, norm2);
            trace.iterations.push(IterationRecord {
                iteration: j,
                alpha,
                beta,
                rel_error: err,
                flops: step,
            });
            trace.flops.add(&step);
            break;
        }
        scale(&mut u, alpha);
        step.normalization += n1 as u64;
        u_basis.push(u);
        alphas.push(alpha);
        core = (j + 1, j + 1);
        let (err, _) = projected_error(&alphas, &betas, core.0, core.1, k, norm2);
        trace.iterations.push(IterationRecord {
            iteration: j,
            alpha,
            beta,
            rel_error: err,
            flops: step,
        });
        trace.flops.add(&step);
    }

    // lines 9-11
    let (rows_b, cols_b) = core;
    let b = bidiagonal(&alphas, &betas, rows_b, cols_b);
    let small = jacobi_svd(rows_b, cols_b, &b);
    trace.flops.small_svd += small.flops;
    let p = small.rank();
    let rank = k.min(p);
    trace.effective_rank = rank;

    // U_out = U_basis · U_h[:, :rank]
    let mut u_out = vec![0.0f64; n1 * rank];
    for (c, ub) in u_basis.iter().enumerate().take(rows_b) {
        for l in 0..rank {
            let w = small.u[c * p + l];
            if w == 0.0 {
                continue;
            }
            for i in 0..n1 {
                u_out[i * rank + l] += w * ub[i];
            }
        }
    }
    // V_out rows = (V_basis · V_h[:, :rank])ᵀ
    let mut v_out = vec![0.0f64; rank * n2];
    for l in 0..rank {
        let row = &mut v_out[l * n2..(l + 1) * n2];
        for (c, vb) in v_basis.iter().enumerate().take(cols_b) {
            let w = small.vt[l * cols_b + c];
            if w == 0.0 {
                continue;
            }
            for (o, &x) in row.iter_mut().zip(vb) {
                *o += w * x;
            }
        }
    }
    trace.flops.basis_update += 2 * (n1 * rows_b * rank + n2 * cols_b * rank) as u64;

    let s: Vec<f32> = small.s.iter().take(rank).map(|&x| x as f32).collect();
    let d = DecomposedMatrix::from_singular(
        DenseMatrix::from_f64(n1, rank, &u_out)?,
        &s,
        DenseMatrix::from_f64(rank, n2, &v_out)?,
    )?;
    Ok((d, trace))
}

/// `‖A − UΣV‖_F / ‖A‖_F`, evaluated in `f64`. Zero when `A` is zero.
pub fn reconstruction_error(a: &DenseMatrix, d: &DecomposedMatrix) -> Result<f64, LinalgError> {
    if a.shape() != (d.rows(), d.cols()) {
        return Err(LinalgError::ShapeMismatch {
            op: "reconstruction_error",
            left: a.shape(),
            right: (d.rows(), d.cols()),
        });
    }
    let approx = d.reconstruct_f64();
    let num = a
        .as_slice()
        .iter()
        .zip(&approx)
        .map(|(&x, &y)| {
            let e = f64::from(x) - y;
            e * e
        })
        .sum::<f64>()
        .sqrt();
    if num == 0.0 {
        return Ok(0.0);
    }
    let den = linalg::frobenius_norm(a);
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok(num / den)
}

/// One row of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub rank: usize,
    pub effective_rank: usize,
    pub lanczos_error: f64,
    /// Best achievable rank-`k` error from the exact singular values.
    pub oracle_error: f64,
    pub flops: OpFlops,
    pub trace: LanczosTrace,
}

/// Lanczos error against the optimal truncation for each requested rank.
/// Every rank reuses the same start vector, so the Krylov spaces are nested.
pub fn convergence_study(
    a: &DenseMatrix,
    ranks: &[usize],
    opts: &LanczosOptions,
) -> Result<Vec<ConvergenceRow>, LanczosError> {
    let max = a.rows().min(a.cols());
    if let Some(&k) = ranks.iter().find(|&&k| k == 0 || k > max) {
        return Err(LanczosError::RankOutOfRange { k, max });
    }
    let oracle = svd_oracle(a)?;
    ranks
        .iter()
        .map(|&k| {
            let (d, trace) = lanczos_svd(a, k, opts)?;
            Ok(ConvergenceRow {
                rank: k,
                effective_rank: d.r1(),
                lanczos_error: reconstruction_error(a, &d)?,
                oracle_error: oracle.truncation_error(k),
                flops: trace.flops,
                trace,
            })
        })
        .collect()
}

/// Writes `rank, effective_rank, lanczos_error, oracle_error` plus one column
/// per operation class.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "rank",
        "effective_rank",
        "lanczos_error",
        "oracle_error",
        "flops_matvec",
        "flops_reorth_u",
        "flops_reorth_v",
        "flops_normalization",
        "flops_small_svd",
        "flops_basis_update",
        "flops_total",
    ])?;
    for r in rows {
        let f = &r.flops;
        out.write_record([
            r.rank.to_string(),
            r.effective_rank.to_string(),
            r.lanczos_error.to_string(),
            r.oracle_error.to_string(),
            f.matvec.to_string(),
            f.reorth_u.to_string(),
            f.reorth_v.to_string(),
            f.normalization.to_string(),
            f.small_svd.to_string(),
            f.basis_update.to_string(),
            f.total().to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
