use super::{LinalgError, Vector};

/// Removes the components of `z` along every vector in `basis` using
/// `passes` rounds of classical Gram-Schmidt. Returns `‖z‖` after the last
/// pass; `z` is left unnormalized.
///
/// One pass over a basis of `j` vectors of length `n` costs `4·n·j` flops:
/// `j` dot products followed by `j` axpy updates.
pub(crate) fn project_out(z: &mut [f64], basis: &[Vec<f64>], passes: usize) -> f64 {
    let mut coeffs = vec![0.0f64; basis.len()];
    for _ in 0..passes {
        for (c, q) in coeffs.iter_mut().zip(basis) {
            *c = dot(q, z);
        }
        for (&c, q) in coeffs.iter().zip(basis) {
            for (zi, &qi) in z.iter_mut().zip(q) {
                *zi -= c * qi;
            }
        }
    }
    norm(z)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalizes `z` against an orthonormal `basis` and normalizes it.
///
/// Returns `(z', β)` where `β` is the norm of the projected vector before
/// normalization. When `β` falls below `breakdown_tol` the input lies (to
/// working precision) inside the span of the basis and
/// [`LinalgError::Breakdown`] is returned instead; the caller decides how to
/// proceed.
pub fn orthogonalize_against(
    z: &Vector,
    basis: &[Vector],
    passes: usize,
    breakdown_tol: f64,
) -> Result<(Vector, f64), LinalgError> {
    if passes == 0 {
        return Err(LinalgError::InvalidArgument("passes must be at least 1".into()));
    }
    if let Some(q) = basis.iter().find(|q| q.len() != z.len()) {
        return Err(LinalgError::LengthMismatch {
            expected: z.len(),
            actual: q.len(),
        });
    }
    let basis: Vec<Vec<f64>> = basis.iter().map(Vector::to_f64).collect();
    let mut work = z.to_f64();
    let beta = project_out(&mut work, &basis, passes);
    if !(beta >= breakdown_tol) {
        return Err(LinalgError::Breakdown { norm: beta });
    }
    work.iter_mut().for_each(|v| *v /= beta);
    Ok((Vector::from_f64(&work)?, beta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize, i: usize) -> Vector {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Vector::new(v).unwrap()
    }

    #[test]
    fn parallel_input_breaks_down() {
        let q = Vector::from_f64(&[0.6, 0.8, 0.0]).unwrap();
        let err = orthogonalize_against(&q, std::slice::from_ref(&q), 2, 1e-6).unwrap_err();
        match err {
            LinalgError::Breakdown { norm } => assert!(norm < 1e-6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn already_orthogonal_input_is_only_normalized() {
        let z = Vector::new(vec![0.0, 3.0, 4.0]).unwrap();
        let (zp, beta) = orthogonalize_against(&z, &[unit(3, 0)], 2, 1e-9).unwrap();
        assert_eq!(beta, 5.0);
        assert_eq!(zp.as_slice(), &[0.0, 0.6, 0.8]);
    }

    #[test]
    fn rejects_zero_passes_and_bad_lengths() {
        let z = Vector::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            orthogonalize_against(&z, &[], 0, 1e-9),
            Err(LinalgError::InvalidArgument(_))
        ));
        assert!(matches!(
            orthogonalize_against(&z, &[unit(3, 0)], 1, 1e-9),
            Err(LinalgError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn empty_basis_normalizes() {
        let z = Vector::new(vec![3.0, 4.0]).unwrap();
        let (zp, beta) = orthogonalize_against(&z, &[], 2, 1e-9).unwrap();
        assert_eq!(beta, 5.0);
        assert!((zp.norm() - 1.0).abs() < 1e-7);
    }
}
