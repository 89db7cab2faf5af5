//! Random small molecules for tests and synthetic datasets.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::featurizer::Geometry;

/// Elements drawn by default (H, C, N, O).
pub const ORGANIC: [u32; 4] = [1, 6, 7, 8];

/// Parameters of the random-molecule generator.
#[derive(Clone, Debug)]
pub struct MoleculeSampler {
    pub elements: Vec<u32>,
    /// Closest allowed approach between any two atoms (Bohr).
    pub min_distance: f64,
    /// Each new atom is placed within this distance of an existing one.
    pub bond_length: f64,
}

impl Default for MoleculeSampler {
    fn default() -> Self {
        MoleculeSampler {
            elements: ORGANIC.to_vec(),
            min_distance: 1.9,
            bond_length: 2.4,
        }
    }
}

impl MoleculeSampler {
    /// Connected random molecule with `natoms` atoms; the total charge is
    /// 0 or +1 so the electron count is even.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, natoms: usize) -> Geometry {
        assert!(natoms > 0);
        let zs: Vec<u32> = (0..natoms).map(|_| *self.elements.choose(rng).unwrap()).collect();
        let mut coords: Vec<[f64; 3]> = vec![[0.0; 3]];
        while coords.len() < natoms {
            let anchor = coords[rng.random_range(0..coords.len())];
            let dir = random_unit(rng);
            let r = self.bond_length * rng.random_range(0.9..1.15);
            let x = [anchor[0] + r * dir[0], anchor[1] + r * dir[1], anchor[2] + r * dir[2]];
            if coords.iter().all(|c| dist(c, &x) >= self.min_distance) {
                coords.push(x);
            }
        }
        let n_elec: u32 = zs.iter().sum();
        Geometry {
            atomic_numbers: zs,
            coords,
            charge: (n_elec % 2) as i32,
        }
    }
}

pub fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Gaussian displacement of every coordinate with standard deviation `sigma`.
pub fn jitter<R: Rng + ?Sized>(g: &Geometry, rng: &mut R, sigma: f64) -> Geometry {
    let coords = g
        .coords
        .iter()
        .map(|x| {
            let d: [f64; 3] = [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ];
            [x[0] + sigma * d[0], x[1] + sigma * d[1], x[2] + sigma * d[2]]
        })
        .collect();
    Geometry {
        coords,
        ..g.clone()
    }
}

/// Two copies of `g`, the second shifted by `separation` along x.
pub fn far_dimer(g: &Geometry, separation: f64) -> Geometry {
    let mut zs = g.atomic_numbers.clone();
    zs.extend_from_slice(&g.atomic_numbers);
    let mut xs = g.coords.clone();
    xs.extend(g.coords.iter().map(|x| [x[0] + separation, x[1], x[2]]));
    Geometry {
        atomic_numbers: zs,
        coords: xs,
        charge: 2 * g.charge,
    }
}

/// Linear chain of `n` repeats of `unit`, each translated by `spacing` along x.
pub fn chain(unit: &Geometry, n: usize, spacing: f64) -> Geometry {
    let mut zs = Vec::new();
    let mut xs = Vec::new();
    for k in 0..n {
        zs.extend_from_slice(&unit.atomic_numbers);
        xs.extend(
            unit.coords
                .iter()
                .map(|x| [x[0] + k as f64 * spacing, x[1], x[2]]),
        );
    }
    Geometry {
        atomic_numbers: zs,
        coords: xs,
        charge: unit.charge * n as i32,
    }
}
