//! Real solid/spherical harmonics in Racah normalization.
//!
//! Each harmonic is tabulated once as a list of Cartesian monomials
//! `c * x^a y^b z^c` so evaluation is a short dot product with power tables.
//! Components of degree `l` are ordered `m = -l..=l`, which makes the degree-1
//! triple `(y, z, x)`.

use once_cell::sync::Lazy;

use super::L_MAX_COUPLED;
use crate::error::{Error, Result};

/// One Cartesian monomial `coef * x^ix * y^iy * z^iz`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub ix: u8,
    pub iy: u8,
    pub iz: u8,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binom(n: i64, k: i64) -> f64 {
    if k < 0 || k > n || n < 0 {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Monomial expansion of the solid harmonic `r^l Y_lm`.
pub fn solid_harmonic_terms(l: usize, m: i32) -> Vec<Monomial> {
    let l_i = l as i64;
    let am = m.unsigned_abs() as i64;
    assert!(am <= l_i, "|m| must not exceed l");
    let norm = (2.0 * factorial((l_i + am) as u32) * factorial((l_i - am) as u32)
        / if m == 0 { 2.0 } else { 1.0 })
    .sqrt()
        / (2f64.powi(am as i32) * factorial(l as u32));

    // 2v runs over even values for m >= 0 and odd values for m < 0.
    let v2_values: Vec<i64> = if m >= 0 {
        (0..=am / 2).map(|v| 2 * v).collect()
    } else {
        (0..=(am - 1) / 2).map(|k| 2 * k + 1).collect()
    };

    let mut out: Vec<Monomial> = Vec::new();
    for t in 0..=(l_i - am) / 2 {
        for u in 0..=t {
            for &v2 in &v2_values {
                // (-1)^(t + v - v_m) with v - v_m an integer in both branches
                let v_minus_vm = if m >= 0 { v2 / 2 } else { (v2 - 1) / 2 };
                let sign = if (t + v_minus_vm) % 2 == 0 { 1.0 } else { -1.0 };
                let c = sign
                    * 0.25f64.powi(t as i32)
                    * binom(l_i, t)
                    * binom(l_i - t, am + t)
                    * binom(t, u)
                    * binom(am, v2);
                if c == 0.0 {
                    continue;
                }
                let ix = (2 * t + am - 2 * u - v2) as u8;
                let iy = (2 * u + v2) as u8;
                let iz = (l_i - 2 * t - am) as u8;
                match out
                    .iter_mut()
                    .find(|mono| (mono.ix, mono.iy, mono.iz) == (ix, iy, iz))
                {
                    Some(mono) => mono.coef += norm * c,
                    None => out.push(Monomial {
                        coef: norm * c,
                        ix,
                        iy,
                        iz,
                    }),
                }
            }
        }
    }
    out.retain(|mono| mono.coef != 0.0);
    out
}

static TERMS: Lazy<Vec<Vec<Vec<Monomial>>>> = Lazy::new(|| {
    (0..=L_MAX_COUPLED)
        .map(|l| {
            (-(l as i32)..=l as i32)
                .map(|m| solid_harmonic_terms(l, m))
                .collect()
        })
        .collect()
});

/// Cached monomial table for degree `l` (`m = -l..=l`).
pub fn terms(l: usize) -> &'static [Vec<Monomial>] {
    &TERMS[l]
}

fn powers(x: f64, n: usize) -> [f64; L_MAX_COUPLED + 1] {
    let mut p = [1.0; L_MAX_COUPLED + 1];
    for i in 1..=n {
        p[i] = p[i - 1] * x;
    }
    p
}

/// Evaluate the solid harmonics `r^l Y_lm(r)` for all `m` at a (not
/// necessarily unit) vector.
pub fn solid_harmonics(l: usize, r: [f64; 3]) -> Vec<f64> {
    let px = powers(r[0], l);
    let py = powers(r[1], l);
    let pz = powers(r[2], l);
    terms(l)
        .iter()
        .map(|ts| {
            ts.iter()
                .map(|t| t.coef * px[t.ix as usize] * py[t.iy as usize] * pz[t.iz as usize])
                .sum()
        })
        .collect()
}

pub(crate) fn unit(r: [f64; 3]) -> Result<[f64; 3]> {
    let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Domain(format!(
            "spherical harmonic requested at a zero-length or non-finite vector {r:?}"
        )));
    }
    Ok([r[0] / n, r[1] / n, r[2] / n])
}

/// All `2l+1` real spherical harmonics of degree `l` at direction `r`.
/// Degrees up to the coupled maximum are accepted.
pub fn spherical_harmonics(l: usize, r: [f64; 3]) -> Result<Vec<f64>> {
    if l > L_MAX_COUPLED {
        return Err(Error::UnsupportedDegree {
            l,
            max: L_MAX_COUPLED,
        });
    }
    Ok(solid_harmonics(l, unit(r)?))
}

/// Single real spherical harmonic `Y_lm(r / |r|)`, `l <= L_MAX`.
pub fn real_spherical_harmonic(l: usize, m: i32, r: [f64; 3]) -> Result<f64> {
    if l > super::L_MAX {
        return Err(Error::UnsupportedDegree {
            l,
            max: super::L_MAX,
        });
    }
    if m.unsigned_abs() as usize > l {
        return Err(Error::Domain(format!("order m = {m} outside degree l = {l}")));
    }
    let u = unit(r)?;
    let px = powers(u[0], l);
    let py = powers(u[1], l);
    let pz = powers(u[2], l);
    Ok(terms(l)[(m + l as i32) as usize]
        .iter()
        .map(|t| t.coef * px[t.ix as usize] * py[t.iy as usize] * pz[t.iz as usize])
        .sum())
}
