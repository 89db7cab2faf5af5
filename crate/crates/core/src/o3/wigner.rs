//! Real Wigner-D matrices consistent with [`super::rsh`].
//!
//! `D^l(R)` is obtained by least squares from `Y_l(R r_k) = D Y_l(r_k)` over a
//! fixed set of well-spread sample directions, so it matches the harmonic
//! convention by construction.

use nalgebra::{DMatrix, Matrix3};

use super::rsh::solid_harmonics;
use super::L_MAX_COUPLED;
use crate::error::{Error, Result};

fn sample_directions(count: usize) -> Vec<[f64; 3]> {
    // golden-angle spiral, slightly tilted so no sample sits on a symmetry axis
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|k| {
            let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
            let rho = (1.0 - z * z).sqrt();
            let phi = golden * k as f64 + 0.1234;
            [rho * phi.cos(), rho * phi.sin(), z]
        })
        .collect()
}

/// Checks that `rot` is a proper rotation within `1e-10`.
pub fn check_rotation(rot: &Matrix3<f64>) -> Result<()> {
    let err = (rot * rot.transpose() - Matrix3::identity()).abs().max();
    if !(err <= 1e-10) {
        return Err(Error::Domain(format!(
            "matrix is not orthogonal (max |R R^T - I| = {err:e})"
        )));
    }
    let det = rot.determinant();
    if (det - 1.0).abs() > 1e-10 {
        return Err(Error::Domain(format!(
            "rotation must have determinant +1, got {det}"
        )));
    }
    Ok(())
}

/// Degree-`l` real Wigner-D matrix with `Y_l(R r) = D Y_l(r)`.
pub fn wigner_d(l: usize, rot: &Matrix3<f64>) -> Result<DMatrix<f64>> {
    if l > L_MAX_COUPLED {
        return Err(Error::UnsupportedDegree {
            l,
            max: L_MAX_COUPLED,
        });
    }
    check_rotation(rot)?;
    Ok(wigner_d_unchecked(l, rot))
}

pub(crate) fn wigner_d_unchecked(l: usize, rot: &Matrix3<f64>) -> DMatrix<f64> {
    let dim = 2 * l + 1;
    if l == 0 {
        return DMatrix::identity(1, 1);
    }
    let dirs = sample_directions(2 * dim + 3);
    let k = dirs.len();
    let mut a = DMatrix::zeros(dim, k);
    let mut b = DMatrix::zeros(dim, k);
    for (j, r) in dirs.iter().enumerate() {
        let v = nalgebra::Vector3::from(*r);
        let rv = rot * v;
        let ya = solid_harmonics(l, *r);
        let yb = solid_harmonics(l, [rv[0], rv[1], rv[2]]);
        for i in 0..dim {
            a[(i, j)] = ya[i];
            b[(i, j)] = yb[i];
        }
    }
    // D = B A^T (A A^T)^{-1}; solve (A A^T) D^T = A B^T
    let gram = &a * a.transpose();
    let rhs = &a * b.transpose();
    let chol = gram.cholesky().expect("sample directions span the harmonic space");
    chol.solve(&rhs).transpose()
}

/// Wigner-D matrices for every degree `0..=lmax`.
pub fn wigner_d_all(lmax: usize, rot: &Matrix3<f64>) -> Result<Vec<DMatrix<f64>>> {
    check_rotation(rot)?;
    if lmax > L_MAX_COUPLED {
        return Err(Error::UnsupportedDegree {
            l: lmax,
            max: L_MAX_COUPLED,
        });
    }
    Ok((0..=lmax).map(|l| wigner_d_unchecked(l, rot)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rot_z(theta: f64) -> Matrix3<f64> {
        let (s, c) = theta.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn identity_rotation() {
        let d = wigner_d(2, &Matrix3::identity()).unwrap();
        assert!((d - DMatrix::identity(5, 5)).abs().max() < 1e-13);
        assert_eq!(wigner_d(0, &rot_z(0.7)).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn degree_one_is_permuted_rotation() {
        // (y, z, x) ordering: D^1 = P R P^T with P picking rows (1, 2, 0)
        let r = rot_z(std::f64::consts::PI);
        let d = wigner_d(1, &r).unwrap();
        let perm = [1usize, 2, 0];
        for i in 0..3 {
            for j in 0..3 {
                assert!((d[(i, j)] - r[(perm[i], perm[j])]).abs() < 1e-13);
            }
        }
        // rotation by pi about z flips x and y
        let expected = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, -1.0]));
        assert!((d - expected).abs().max() < 1e-13);
    }

    #[test]
    fn rejects_improper_and_skewed() {
        let mut m = Matrix3::identity();
        m[(0, 0)] = -1.0;
        assert!(matches!(wigner_d(1, &m), Err(Error::Domain(_))));
        let mut s = Matrix3::identity();
        s[(0, 1)] = 1e-6;
        assert!(matches!(wigner_d(1, &s), Err(Error::Domain(_))));
    }
}
