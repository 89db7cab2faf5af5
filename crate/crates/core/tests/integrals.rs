mod common;

use common::quadrature::{gauss_legendre, integrate_3d, shell_value};
use unite_core::gaussian::{gamma_half, gaunt, normalization, shell_overlap, three_center_onsite};
use unite_core::o3::rsh::terms;

#[test]
fn two_center_overlap_matches_quadrature() {
    let cases = [
        (0, 0.8, [0.0, 0.0, 0.0], 1, 0.5, [0.3, -0.4, 1.1]),
        (1, 0.6, [0.2, 0.1, -0.3], 1, 0.9, [-0.5, 0.7, 0.4]),
        (2, 0.45, [0.0, 0.0, 0.0], 1, 0.7, [1.0, 0.2, -0.6]),
        (2, 0.5, [0.1, -0.2, 0.0], 2, 0.35, [-0.4, 0.9, 0.8]),
    ];
    for (l1, a, ra, l2, b, rb) in cases {
        let s = shell_overlap(l1, a, ra, l2, b, rb);
        let p = a + b;
        let center = [
            (a * ra[0] + b * rb[0]) / p,
            (a * ra[1] + b * rb[1]) / p,
            (a * ra[2] + b * rb[2]) / p,
        ];
        let (na, nb) = (normalization(l1, a), normalization(l2, b));
        for i in 0..2 * l1 + 1 {
            for j in 0..2 * l2 + 1 {
                let q = integrate_3d(center, 9.0, |r| {
                    shell_value(l1, i, a, ra, na, r) * shell_value(l2, j, b, rb, nb, r)
                });
                assert!((q - s[(i, j)]).abs() < 1e-10, "({l1},{l2}) [{i},{j}]: {q} vs {}", s[(i, j)]);
            }
        }
    }
}

#[test]
fn onsite_three_index_overlap_matches_quadrature() {
    let (a1, a2, g) = (0.6, 0.45, 1.3);
    for l1 in 0..=2usize {
        for l2 in 0..=2usize {
            for l in 0..=2usize {
                let t = three_center_onsite((l1, a1), (l2, a2), (l, g));
                let (n1, n2, n3) = (normalization(l1, a1), normalization(l2, a2), normalization(l, g));
                for i in 0..2 * l1 + 1 {
                    for j in 0..2 * l2 + 1 {
                        for k in 0..2 * l + 1 {
                            let q = integrate_3d([0.0; 3], 7.0, |r| {
                                shell_value(l1, i, a1, [0.0; 3], n1, r)
                                    * shell_value(l2, j, a2, [0.0; 3], n2, r)
                                    * shell_value(l, k, g, [0.0; 3], n3, r)
                            });
                            assert!(
                                (q - t[i][j][k]).abs() < 1e-10,
                                "({l1},{l2},{l}) [{i},{j},{k}]: {q} vs {}",
                                t[i][j][k]
                            );
                        }
                    }
                }
            }
        }
    }
}

/// `int x^a y^b z^c dOmega` over the unit sphere.
fn sphere_monomial(a: u32, b: u32, c: u32) -> f64 {
    if a % 2 == 1 || b % 2 == 1 || c % 2 == 1 {
        return 0.0;
    }
    2.0 * gamma_half(a + 1) * gamma_half(b + 1) * gamma_half(c + 1) / gamma_half(a + b + c + 3)
}

#[test]
fn gaunt_matches_exact_monomial_integrals() {
    for l1 in 0..=3usize {
        for l2 in 0..=3usize {
            for l in 0..=4usize {
                let g = gaunt(l1, l2, l);
                for i in 0..2 * l1 + 1 {
                    for j in 0..2 * l2 + 1 {
                        for k in 0..2 * l + 1 {
                            let mut exact = 0.0;
                            for u in &terms(l1)[i] {
                                for v in &terms(l2)[j] {
                                    for w in &terms(l)[k] {
                                        exact += u.coef
                                            * v.coef
                                            * w.coef
                                            * sphere_monomial(
                                                (u.ix + v.ix + w.ix) as u32,
                                                (u.iy + v.iy + w.iy) as u32,
                                                (u.iz + v.iz + w.iz) as u32,
                                            );
                                    }
                                }
                            }
                            assert!((exact - g[i][j][k]).abs() < 1e-12, "({l1},{l2},{l}) [{i},{j},{k}]");
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn gauss_legendre_is_exact_for_polynomials() {
    let q = gauss_legendre(10);
    let s: f64 = q.iter().map(|(x, w)| w * x.powi(18)).sum();
    assert!((s - 2.0 / 19.0).abs() < 1e-14);
}
