//! Integrals over normalized solid-harmonic Gaussians
//! `N r^l Y_lm(r) exp(-a r^2)` with Racah-normalized `Y_lm`.

use nalgebra::DMatrix;

use crate::o3::cg::coupled_table;
use crate::o3::rsh::terms;

fn double_factorial(n: i64) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// `Gamma(k / 2)` for a positive integer `k`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k > 0);
    if k % 2 == 0 {
        (1..k as i64 / 2).map(|i| i as f64).product()
    } else {
        // Gamma(n + 1/2) = (2n - 1)!! / 2^n sqrt(pi)
        let n = (k as i64 - 1) / 2;
        double_factorial(2 * n - 1) / 2f64.powi(n as i32) * std::f64::consts::PI.sqrt()
    }
}

/// `int_0^inf r^k exp(-a r^2) dr = Gamma((k+1)/2) / (2 a^((k+1)/2))`.
pub fn radial_moment(k: u32, a: f64) -> f64 {
    gamma_half(k + 1) / (2.0 * a.powf((k + 1) as f64 / 2.0))
}

/// Constant making `N r^l Y_lm exp(-a r^2)` unit-normalized in 3D.
pub fn normalization(l: usize, a: f64) -> f64 {
    let angular = 4.0 * std::f64::consts::PI / (2 * l + 1) as f64;
    (angular * radial_moment(2 * l as u32 + 2, 2.0 * a)).sqrt().recip()
}

/// 1D Cartesian overlaps `int (x-A)^i (x-B)^j exp(-a(x-A)^2 - b(x-B)^2) dx`
/// for `i <= imax`, `j <= jmax`, by the Obara-Saika recurrence.
fn overlap_1d(imax: usize, jmax: usize, a: f64, b: f64, xa: f64, xb: f64) -> Vec<Vec<f64>> {
    let p = a + b;
    let xp = (a * xa + b * xb) / p;
    let (pa, pb) = (xp - xa, xp - xb);
    let mu = a * b / p;
    let mut s = vec![vec![0.0; jmax + 1]; imax + 1];
    s[0][0] = (std::f64::consts::PI / p).sqrt() * (-mu * (xa - xb).powi(2)).exp();
    let half = 0.5 / p;
    for i in 0..=imax {
        for j in 0..=jmax {
            if i == 0 && j == 0 {
                continue;
            }
            s[i][j] = if i > 0 {
                let i1 = i - 1;
                let mut v = pa * s[i1][j];
                if i1 > 0 {
                    v += half * i1 as f64 * s[i1 - 1][j];
                }
                if j > 0 {
                    v += half * j as f64 * s[i1][j - 1];
                }
                v
            } else {
                let j1 = j - 1;
                let mut v = pb * s[i][j1];
                if j1 > 0 {
                    v += half * j1 as f64 * s[i][j1 - 1];
                }
                v
            };
        }
    }
    s
}

/// Overlap block between two normalized shells on centers `ra`, `rb`.
/// Rows follow `m1 = -l1..=l1`, columns `m2 = -l2..=l2`.
pub fn shell_overlap(l1: usize, a: f64, ra: [f64; 3], l2: usize, b: f64, rb: [f64; 3]) -> DMatrix<f64> {
    let sx = overlap_1d(l1, l2, a, b, ra[0], rb[0]);
    let sy = overlap_1d(l1, l2, a, b, ra[1], rb[1]);
    let sz = overlap_1d(l1, l2, a, b, ra[2], rb[2]);
    let scale = normalization(l1, a) * normalization(l2, b);
    let (t1, t2) = (terms(l1), terms(l2));
    DMatrix::from_fn(2 * l1 + 1, 2 * l2 + 1, |i, j| {
        let mut acc = 0.0;
        for u in &t1[i] {
            for v in &t2[j] {
                acc += u.coef
                    * v.coef
                    * sx[u.ix as usize][v.ix as usize]
                    * sy[u.iy as usize][v.iy as usize]
                    * sz[u.iz as usize][v.iz as usize];
            }
        }
        scale * acc
    })
}

/// `int Y_{l1 m1} Y_{l2 m2} Y_{l m} dOmega` for Racah-normalized real
/// harmonics, indexed `[m1][m2][m]` (offsets from `-l`).
pub fn gaunt(l1: usize, l2: usize, l: usize) -> Vec<Vec<Vec<f64>>> {
    let mut out = vec![vec![vec![0.0; 2 * l + 1]; 2 * l2 + 1]; 2 * l1 + 1];
    if (l1 + l2 + l) % 2 == 1 || l < l1.abs_diff(l2) || l > l1 + l2 {
        return out;
    }
    let table = coupled_table();
    let block = table.block(l1, l2, l).expect("degree within coupled table");
    let c0 = block.at(l1, l2, l);
    let pref = 4.0 * std::f64::consts::PI / (2 * l + 1) as f64 * c0;
    for &(a, b, c, v) in &block.nonzeros {
        out[a][b][c] = pref * v;
    }
    out
}

/// `int phi_1(r) phi_2(r) chi(r) d^3r` for three normalized shells on one
/// center, indexed `[m1][m2][m]`.
pub fn three_center_onsite(
    (l1, a1): (usize, f64),
    (l2, a2): (usize, f64),
    (l, g): (usize, f64),
) -> Vec<Vec<Vec<f64>>> {
    let mut out = gaunt(l1, l2, l);
    let radial = radial_moment((l1 + l2 + l + 2) as u32, a1 + a2 + g)
        * normalization(l1, a1)
        * normalization(l2, a2)
        * normalization(l, g);
    for row in out.iter_mut() {
        for col in row.iter_mut() {
            for v in col.iter_mut() {
                *v *= radial;
            }
        }
    }
    out
}
