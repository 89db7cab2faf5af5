//! O(3) algebra: real spherical harmonics, Clebsch-Gordan coefficients and
//! Wigner-D matrices.
//!
//! Every table here is built once and is immutable afterwards.

pub mod cg;
pub mod rsh;
pub mod wigner;

use nalgebra::{Matrix3, UnitQuaternion, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use cg::{cg_o3, cg_so3, CgTable};
pub use rsh::real_spherical_harmonic;
pub use wigner::{check_rotation, wigner_d, wigner_d_all};

/// Highest degree carried by network neurons.
pub const L_MAX: usize = 4;

/// Highest degree that may appear when coupling two degree-`L_MAX` neurons.
pub const L_MAX_COUPLED: usize = 2 * L_MAX;

/// Behaviour under spatial inversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub const BOTH: [Parity; 2] = [Parity::Even, Parity::Odd];

    pub fn sign(self) -> i32 {
        match self {
            Parity::Even => 1,
            Parity::Odd => -1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Parity::Even => 0,
            Parity::Odd => 1,
        }
    }
}

/// An O(3) irreducible representation label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Irrep {
    pub l: usize,
    pub p: Parity,
}

impl Irrep {
    pub fn new(l: usize, p: Parity) -> Self {
        Irrep { l, p }
    }

    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    /// Sign picked up under inversion: `(-1)^l * p`.
    pub fn inversion_sign(&self) -> f64 {
        let s = if self.l % 2 == 0 { 1 } else { -1 } * self.p.sign();
        s as f64
    }
}

/// Uniformly distributed proper rotation.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Matrix3<f64> {
    let v = Vector4::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
        rng.sample::<f64, _>(StandardNormal),
    );
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(v));
    q.to_rotation_matrix().into_inner()
}
