//! Clebsch-Gordan coefficients in the real-harmonic basis.
//!
//! Complex (Condon-Shortley) coefficients are evaluated with the explicit
//! Racah sum in exact rational arithmetic; the only rounding happens in the
//! final square root. They are then rotated into the real basis
//!
//! ```text
//! S_{l, m>0} = ((-1)^m Y_l^m + Y_l^{-m}) / sqrt(2)
//! S_{l, 0}   = Y_l^0
//! S_{l, m<0} = i (Y_l^{m} - (-1)^m Y_l^{-m}) / sqrt(2)
//! ```
//!
//! which reproduces the monomial harmonics of [`super::rsh`]. For odd
//! `l1 + l2 + l` the transformed block is purely imaginary; it is multiplied
//! by `-i` so that every stored coefficient is real.

use nalgebra::Complex;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use once_cell::sync::Lazy;

use super::{Parity, L_MAX, L_MAX_COUPLED};

fn fact(n: i64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Complex-basis coefficient `<l1 m1; l2 m2 | l m>`.
pub fn cg_complex(l1: i64, m1: i64, l2: i64, m2: i64, l: i64, m: i64) -> f64 {
    if m != m1 + m2
        || l < (l1 - l2).abs()
        || l > l1 + l2
        || m1.abs() > l1
        || m2.abs() > l2
        || m.abs() > l
    {
        return 0.0;
    }
    let r = |n: BigInt| BigRational::from_integer(n);
    let prefactor = r(BigInt::from(2 * l + 1) * fact(l + l1 - l2) * fact(l - l1 + l2) * fact(l1 + l2 - l))
        / r(fact(l1 + l2 + l + 1))
        * r(fact(l + m)
            * fact(l - m)
            * fact(l1 - m1)
            * fact(l1 + m1)
            * fact(l2 - m2)
            * fact(l2 + m2));

    let mut sum = BigRational::zero();
    for k in 0..=(l1 + l2 + l) {
        let args = [
            k,
            l1 + l2 - l - k,
            l1 - m1 - k,
            l2 + m2 - k,
            l - l2 + m1 + k,
            l - l1 - m2 + k,
        ];
        if args.iter().any(|&a| a < 0) {
            continue;
        }
        let denom = args.iter().fold(BigInt::one(), |acc, &a| acc * fact(a));
        let term = BigRational::new(BigInt::one(), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }
    let squared = prefactor * &sum * &sum;
    let mag = squared.to_f64().expect("finite rational").sqrt();
    if sum.is_negative() {
        -mag
    } else {
        mag
    }
}

/// Entry `(m, mu)` of the complex-to-real transform: `S_m = sum_mu U[m][mu] Y^mu`.
fn u_entry(m: i64, mu: i64) -> Complex<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sign = |k: i64| if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    if m == 0 {
        return if mu == 0 {
            Complex::new(1.0, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        };
    }
    if m > 0 {
        if mu == m {
            Complex::new(sign(m) * s, 0.0)
        } else if mu == -m {
            Complex::new(s, 0.0)
        } else {
            Complex::new(0.0, 0.0)
        }
    } else if mu == m {
        Complex::new(0.0, s)
    } else if mu == -m {
        Complex::new(0.0, -sign(m) * s)
    } else {
        Complex::new(0.0, 0.0)
    }
}

/// Dense real coefficients of one `(l1, l2, l)` coupling, plus its nonzeros.
#[derive(Clone, Debug)]
pub struct CgBlock {
    pub l1: usize,
    pub l2: usize,
    pub l: usize,
    dense: Vec<f64>,
    /// `(m1 + l1, m2 + l2, m + l, value)` for every nonzero coefficient.
    pub nonzeros: Vec<(usize, usize, usize, f64)>,
    /// Largest magnitude of the discarded (imaginary after phase fix) part.
    pub discarded: f64,
}

impl CgBlock {
    fn compute(l1: usize, l2: usize, l: usize) -> Self {
        let (d1, d2, d) = (2 * l1 + 1, 2 * l2 + 1, 2 * l + 1);
        let (i1, i2, il) = (l1 as i64, l2 as i64, l as i64);
        // complex table indexed by (mu1, mu2), mu = mu1 + mu2
        let mut complex = vec![0.0; d1 * d2];
        for mu1 in -i1..=i1 {
            for mu2 in -i2..=i2 {
                complex[((mu1 + i1) as usize) * d2 + (mu2 + i2) as usize] =
                    cg_complex(i1, mu1, i2, mu2, il, mu1 + mu2);
            }
        }
        let odd = (l1 + l2 + l) % 2 == 1;
        let mut dense = vec![0.0; d1 * d2 * d];
        let mut nonzeros = Vec::new();
        let mut discarded: f64 = 0.0;
        for m1 in -i1..=i1 {
            for m2 in -i2..=i2 {
                for m in -il..=il {
                    let acc = Self::real_coefficient(m1, m2, m, i1, i2, il, d2, &complex);
                    let (keep, drop) = if odd { (acc.im, acc.re) } else { (acc.re, acc.im) };
                    discarded = discarded.max(drop.abs());
                    let v = if keep.abs() < 1e-15 { 0.0 } else { keep };
                    let idx = (((m1 + i1) as usize) * d2 + (m2 + i2) as usize) * d + (m + il) as usize;
                    dense[idx] = v;
                    if v != 0.0 {
                        nonzeros.push(((m1 + i1) as usize, (m2 + i2) as usize, (m + il) as usize, v));
                    }
                }
            }
        }
        CgBlock {
            l1,
            l2,
            l,
            dense,
            nonzeros,
            discarded,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn real_coefficient(
        m1: i64,
        m2: i64,
        m: i64,
        i1: i64,
        i2: i64,
        il: i64,
        d2: usize,
        complex: &[f64],
    ) -> Complex<f64> {
        let mu1s: Vec<i64> = if m1 == 0 { vec![0] } else { vec![m1, -m1] };
        let mu2s: Vec<i64> = if m2 == 0 { vec![0] } else { vec![m2, -m2] };
        let mut acc = Complex::new(0.0, 0.0);
        for &mu1 in &mu1s {
            for &mu2 in &mu2s {
                let mu = mu1 + mu2;
                if mu.abs() > il {
                    continue;
                }
                let c = complex[((mu1 + i1) as usize) * d2 + (mu2 + i2) as usize];
                acc += u_entry(m1, mu1) * u_entry(m2, mu2) * u_entry(m, mu).conj() * c;
            }
        }
        acc
    }

    /// Coefficient by index offsets `(m1 + l1, m2 + l2, m + l)`.
    #[inline]
    pub fn at(&self, a: usize, b: usize, c: usize) -> f64 {
        self.dense[(a * (2 * self.l2 + 1) + b) * (2 * self.l + 1) + c]
    }
}

/// Precomputed real CG coefficients for all degrees up to `lmax`.
#[derive(Clone, Debug)]
pub struct CgTable {
    lmax: usize,
    blocks: Vec<Option<CgBlock>>,
}

impl CgTable {
    pub fn new(lmax: usize) -> Self {
        let n = lmax + 1;
        let mut blocks = vec![None; n * n * n];
        for l1 in 0..=lmax {
            for l2 in 0..=lmax {
                let lo = l1.abs_diff(l2);
                for l in lo..=(l1 + l2).min(lmax) {
                    blocks[(l1 * n + l2) * n + l] = Some(CgBlock::compute(l1, l2, l));
                }
            }
        }
        CgTable { lmax, blocks }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    /// Block for a coupling allowed by the triangle rule, `None` otherwise.
    pub fn block(&self, l1: usize, l2: usize, l: usize) -> Option<&CgBlock> {
        if l1 > self.lmax || l2 > self.lmax || l > self.lmax {
            return None;
        }
        let n = self.lmax + 1;
        self.blocks[(l1 * n + l2) * n + l].as_ref()
    }

    /// Real coefficient `C^{l m}_{l1 m1; l2 m2}`; zero outside the selection rules.
    pub fn get(&self, l1: usize, m1: i32, l2: usize, m2: i32, l: usize, m: i32) -> f64 {
        if m1.unsigned_abs() as usize > l1 || m2.unsigned_abs() as usize > l2 || m.unsigned_abs() as usize > l {
            return 0.0;
        }
        match self.block(l1, l2, l) {
            Some(b) => b.at(
                (m1 + l1 as i32) as usize,
                (m2 + l2 as i32) as usize,
                (m + l as i32) as usize,
            ),
            None => 0.0,
        }
    }

    /// O(3) coefficient: the SO(3) value gated by the parity selection rule.
    #[allow(clippy::too_many_arguments)]
    pub fn get_o3(
        &self,
        l1: usize,
        p1: Parity,
        m1: i32,
        l2: usize,
        p2: Parity,
        m2: i32,
        l: usize,
        p: Parity,
        m: i32,
    ) -> f64 {
        if parity_allowed(l1, p1, l2, p2, l, p) {
            self.get(l1, m1, l2, m2, l, m)
        } else {
            0.0
        }
    }
}

/// `p1 * p2 * p == (-1)^(l1 + l2 + l)`.
pub fn parity_allowed(l1: usize, p1: Parity, l2: usize, p2: Parity, l: usize, p: Parity) -> bool {
    let lhs = p1.sign() * p2.sign() * p.sign();
    let rhs = if (l1 + l2 + l) % 2 == 0 { 1 } else { -1 };
    lhs == rhs
}

static TABLE_MODEL: Lazy<CgTable> = Lazy::new(|| CgTable::new(L_MAX));
static TABLE_COUPLED: Lazy<CgTable> = Lazy::new(|| CgTable::new(L_MAX_COUPLED));

/// Shared table for degrees up to [`L_MAX`].
pub fn model_table() -> &'static CgTable {
    &TABLE_MODEL
}

/// Shared table for degrees up to [`L_MAX_COUPLED`]; built on first use.
pub fn coupled_table() -> &'static CgTable {
    &TABLE_COUPLED
}

/// Real SO(3) coefficient; all degrees must be at most `2 * L_MAX`.
pub fn cg_so3(l1: usize, m1: i32, l2: usize, m2: i32, l: usize, m: i32) -> f64 {
    if l1.max(l2).max(l) <= L_MAX {
        model_table().get(l1, m1, l2, m2, l, m)
    } else {
        coupled_table().get(l1, m1, l2, m2, l, m)
    }
}

/// Real O(3) coefficient with the parity Kronecker delta.
#[allow(clippy::too_many_arguments)]
pub fn cg_o3(
    l1: usize,
    p1: Parity,
    m1: i32,
    l2: usize,
    p2: Parity,
    m2: i32,
    l: usize,
    p: Parity,
    m: i32,
) -> f64 {
    if parity_allowed(l1, p1, l2, p2, l, p) {
        cg_so3(l1, m1, l2, m2, l, m)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn complex_known_values() {
        // <1 1; 1 -1 | 0 0> = 1/sqrt(3)
        assert!((cg_complex(1, 1, 1, -1, 0, 0) - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        // <1 0; 1 0 | 2 0> = sqrt(2/3)
        assert!((cg_complex(1, 0, 1, 0, 2, 0) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // <1 0; 1 0 | 1 0> = 0
        assert_eq!(cg_complex(1, 0, 1, 0, 1, 0), 0.0);
        // <1/2-free check: <2 1; 1 -1 | 1 0> = sqrt(3/10)
        assert!((cg_complex(2, 1, 1, -1, 1, 0) - (3.0f64 / 10.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn scalar_coupling_and_triangle() {
        assert_eq!(cg_so3(0, 0, 0, 0, 0, 0), 1.0);
        for m1 in -1..=1 {
            for m2 in -1..=1 {
                for m in -3..=3 {
                    assert_eq!(cg_so3(1, m1, 1, m2, 3, m), 0.0);
                }
            }
        }
        for m in -1..=1 {
            assert!((cg_so3(0, 0, 1, m, 1, m) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn imaginary_part_vanishes() {
        let t = CgTable::new(4);
        for l1 in 0..=4usize {
            for l2 in 0..=4 {
                for l in l1.abs_diff(l2)..=(l1 + l2).min(4) {
                    assert!(t.block(l1, l2, l).unwrap().discarded < 1e-14);
                }
            }
        }
    }

    #[test]
    fn parity_gate() {
        use Parity::{Even, Odd};
        assert_eq!(cg_o3(1, Even, 0, 1, Even, 0, 1, Even, 0), 0.0);
        for m1 in -1..=1 {
            for m2 in -1..=1 {
                for m in -1..=1 {
                    assert_eq!(cg_o3(1, Even, m1, 1, Even, m2, 1, Odd, m), cg_so3(1, m1, 1, m2, 1, m));
                }
            }
        }
        for (l, p) in [(2, Even), (3, Odd), (1, Odd)] {
            for m in -(l as i32)..=l as i32 {
                assert!((cg_o3(0, Even, 0, l, p, m, l, p, m) - 1.0).abs() < 1e-15);
            }
        }
    }
}

/// Largest deviation of `sum_{m1 m2} C^{l m}_{m1 m2} C^{l' m'}_{m1 m2}` from
/// `delta_{l l'} delta_{m m'}` over all degrees up to `lmax` (at most the
/// coupled maximum).
pub fn orthogonality_deviation(lmax: usize) -> f64 {
    let table = coupled_table();
    let lmax = lmax.min(table.lmax());
    let mut worst: f64 = 0.0;
    for l1 in 0..=lmax {
        for l2 in 0..=lmax {
            let ls: Vec<usize> = (l1.abs_diff(l2)..=(l1 + l2).min(lmax)).collect();
            for &l in &ls {
                for &lp in &ls {
                    let (a, b) = (table.block(l1, l2, l).unwrap(), table.block(l1, l2, lp).unwrap());
                    for m in 0..2 * l + 1 {
                        for mp in 0..2 * lp + 1 {
                            let mut s = 0.0;
                            for m1 in 0..2 * l1 + 1 {
                                for m2 in 0..2 * l2 + 1 {
                                    s += a.at(m1, m2, m) * b.at(m1, m2, mp);
                                }
                            }
                            let expect = if l == lp && m == mp { 1.0 } else { 0.0 };
                            worst = worst.max((s - expect).abs());
                        }
                    }
                }
            }
        }
    }
    worst
}
