use dcom_core::lanczos::{
    convergence_study, lanczos_svd, reconstruction_error, BreakdownKind, LanczosError, LanczosOptions,
};
use dcom_core::linalg::{matmul, svd_oracle, DenseMatrix};
use dcom_core::synth::{gaussian_matrix, rng, spectrum_matrix, Spectrum};
use dcom_core::DecomposedMatrix;
use proptest::prelude::*;
use rand::Rng;

fn opts() -> LanczosOptions {
    LanczosOptions::default()
}

/// Largest off-diagonal |<x_i, x_j>| over the rows of `m` (`by_rows`) or
/// its columns.
fn max_cross_inner(m: &DenseMatrix, by_rows: bool) -> f64 {
    let (count, len) = if by_rows {
        (m.rows(), m.cols())
    } else {
        (m.cols(), m.rows())
    };
    let at = |i: usize, l: usize| if by_rows { m.get(i, l) } else { m.get(l, i) } as f64;
    let mut worst = 0.0f64;
    for i in 0..count {
        for j in i + 1..count {
            let ip: f64 = (0..len).map(|l| at(i, l) * at(j, l)).sum();
            worst = worst.max(ip.abs());
        }
    }
    worst
}

fn explicit_error(a: &DenseMatrix, d: &DecomposedMatrix) -> f64 {
    let us = matmul(d.u(), d.sigma()).unwrap();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let r: f64 = (0..us.cols())
                .map(|l| us.get(i, l) as f64 * d.v().get(l, j) as f64)
                .sum();
            let x = a.get(i, j) as f64;
            num += (x - r) * (x - r);
            den += x * x;
        }
    }
    (num / den).sqrt()
}

#[test]
fn identity_rank_one() {
    let (d, _) = lanczos_svd(&DenseMatrix::identity(4), 1, &opts()).unwrap();
    assert!((d.singular_values().unwrap()[0] - 1.0).abs() < 1e-6);
    let e = reconstruction_error(&DenseMatrix::identity(4), &d).unwrap();
    assert!((e - 3f64.sqrt() / 2.0).abs() < 1e-6, "{e}");
}

#[test]
fn diagonal_three_two_one() {
    let a = DenseMatrix::diag(&[3.0, 2.0, 1.0]).unwrap();
    let (d, _) = lanczos_svd(&a, 2, &opts()).unwrap();
    let s = d.singular_values().unwrap();
    assert!((s[0] - 3.0).abs() < 1e-5 && (s[1] - 2.0).abs() < 1e-5, "{s:?}");
    let e = reconstruction_error(&a, &d).unwrap();
    assert!((e - 1.0 / 14f64.sqrt()).abs() < 1e-6);
}

#[test]
fn outer_product_is_recovered_exactly() {
    let x = gaussian_matrix(30, 1, 4);
    let y = gaussian_matrix(1, 17, 5);
    let a = matmul(&x, &y).unwrap();
    let (d, _) = lanczos_svd(&a, 1, &opts()).unwrap();
    assert!(reconstruction_error(&a, &d).unwrap() <= 1e-5);
}

#[test]
fn geometric_spectrum_is_near_optimal() {
    let a = spectrum_matrix(128, 96, Spectrum::Geometric, 11).unwrap();
    let (d, _) = lanczos_svd(&a, 10, &opts()).unwrap();
    let ours = reconstruction_error(&a, &d).unwrap();
    let best = svd_oracle(&a).unwrap().truncation_error(10);
    assert!(ours <= 1.1 * best, "{ours} vs {best}");
    assert!(ours >= best - 1e-6);
}

#[test]
fn error_metric_matches_explicit_reconstruction() {
    for seed in 0..5 {
        let u = gaussian_matrix(12, 3, seed);
        let v = gaussian_matrix(3, 9, seed + 100);
        let d = DecomposedMatrix::from_singular(u, &[2.0, 1.0, 0.5], v).unwrap();
        let a = gaussian_matrix(12, 9, seed + 200);
        let fast = reconstruction_error(&a, &d).unwrap();
        let slow = explicit_error(&a, &d);
        assert!((fast - slow).abs() <= 1e-6, "{fast} vs {slow}");
    }
}

#[test]
fn full_rank_decomposition_reconstructs() {
    let a = gaussian_matrix(24, 10, 6);
    let (d, _) = lanczos_svd(&a, 10, &opts()).unwrap();
    assert!(reconstruction_error(&a, &d).unwrap() <= 1e-4);
}

#[test]
fn convergence_is_monotone_in_rank() {
    let a = spectrum_matrix(160, 48, Spectrum::Geometric, 2).unwrap();
    let rows = convergence_study(&a, &[1, 10, 20], &opts()).unwrap();
    assert!(rows[0].lanczos_error >= rows[1].lanczos_error);
    assert!(rows[1].lanczos_error >= rows[2].lanczos_error);
    for r in &rows {
        assert!(r.oracle_error <= r.lanczos_error + 1e-6);
    }
}

#[test]
fn runs_are_bit_identical() {
    let a = gaussian_matrix(90, 40, 8);
    let o = LanczosOptions::with_seed(42);
    let (d1, t1) = lanczos_svd(&a, 7, &o).unwrap();
    let (d2, t2) = lanczos_svd(&a, 7, &o).unwrap();
    assert_eq!(d1, d2);
    assert_eq!(t1, t2);
    let (d3, _) = lanczos_svd(&a, 7, &LanczosOptions::with_seed(43)).unwrap();
    assert_ne!(d1.u(), d3.u());
}

/// `X · Y` with small integer factors: exactly rank `rho` even in f32.
fn integer_rank(n1: usize, n2: usize, rho: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed);
    let x = DenseMatrix::from_fn(n1, rho, |_, _| r.random_range(-4i32..=4) as f32).unwrap();
    let y = DenseMatrix::from_fn(rho, n2, |_, _| r.random_range(-4i32..=4) as f32).unwrap();
    matmul(&x, &y).unwrap()
}

#[test]
fn low_rank_input_breaks_down_cleanly() {
    for rho in [1usize, 3, 5] {
        let a = integer_rank(64, 40, rho, rho as u64);
        let (d, trace) = lanczos_svd(&a, 10, &opts()).unwrap();
        assert!(d.r1() <= rho, "rank {rho}: got {}", d.r1());
        assert!(reconstruction_error(&a, &d).unwrap() <= 1e-4);
        let b = trace.breakdown.expect("breakdown recorded");
        assert!(matches!(b.kind, BreakdownKind::Alpha | BreakdownKind::Beta));
        assert!(b.value < trace.eps);
    }
}

#[test]
fn flop_counters_follow_closed_form() {
    let (n1, n2, k) = (200u64, 60u64, 6usize);
    let a = gaussian_matrix(n1 as usize, n2 as usize, 3);
    let o = opts();
    let (_, trace) = lanczos_svd(&a, k, &o).unwrap();
    assert!(trace.breakdown.is_none());
    let m = trace.steps() as u64;
    assert_eq!(m, (k + o.oversample) as u64);
    let passes = o.passes as u64;
    let tri = m * (m + 1) / 2;
    let f = trace.flops;
    assert_eq!(f.matvec, (1 + 2 * m) * 2 * n1 * n2);
    assert_eq!(f.reorth_v, passes * 4 * n2 * tri);
    assert_eq!(f.reorth_u, passes * 4 * n1 * tri);
    assert_eq!(f.normalization, (m + 1) * 3 * (n1 + n2));
    assert_eq!(f.basis_update, 2 * (n1 + n2) * (m + 1) * k as u64);
    let per_step: u64 = trace.iterations.iter().map(|r| r.flops.total()).sum();
    assert_eq!(per_step + f.small_svd + f.basis_update, f.total());
}

#[test]
fn parameter_errors() {
    let a = gaussian_matrix(5, 4, 0);
    assert!(matches!(
        lanczos_svd(&a, 0, &opts()),
        Err(LanczosError::RankOutOfRange { .. })
    ));
    assert!(matches!(
        lanczos_svd(&a, 5, &opts()),
        Err(LanczosError::RankOutOfRange { .. })
    ));
}

#[test]
fn trace_csv_has_one_row_per_iteration() {
    let a = gaussian_matrix(40, 20, 1);
    let (_, trace) = lanczos_svd(&a, 3, &opts()).unwrap();
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), trace.iterations.len() + 1);
    assert!(text.starts_with("iteration,alpha,beta,rel_error"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bases_stay_orthogonal(n1 in 20usize..120, n2 in 10usize..60, k in 1usize..10, seed in 0u64..500) {
        let k = k.min(n1.min(n2));
        let a = gaussian_matrix(n1, n2, seed);
        let (d, _) = lanczos_svd(&a, k, &LanczosOptions::with_seed(seed)).unwrap();
        prop_assert!(max_cross_inner(d.u(), false) <= 1e-3);
        prop_assert!(max_cross_inner(d.v(), true) <= 1e-3);
    }

    #[test]
    fn never_beats_the_optimum(n1 in 10usize..80, n2 in 5usize..40, k in 1usize..8, seed in 0u64..500) {
        let k = k.min(n1.min(n2));
        let a = gaussian_matrix(n1, n2, seed);
        let (d, _) = lanczos_svd(&a, k, &LanczosOptions::with_seed(seed)).unwrap();
        let best = svd_oracle(&a).unwrap().truncation_error(k);
        prop_assert!(reconstruction_error(&a, &d).unwrap() >= best - 1e-6);
    }

    #[test]
    fn exact_rank_is_never_exceeded(n1 in 10usize..70, n2 in 8usize..40, rho in 1usize..6, k in 6usize..12, seed in 0u64..500) {
        let a = integer_rank(n1, n2, rho, seed);
        let k = k.min(n1.min(n2));
        let (d, _) = lanczos_svd(&a, k, &LanczosOptions::with_seed(seed)).unwrap();
        prop_assert!(d.r1() <= rho);
        prop_assert!(reconstruction_error(&a, &d).unwrap() <= 1e-4);
    }
}
