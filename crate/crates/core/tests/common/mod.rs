#![allow(dead_code)]

pub mod quadrature;

use nalgebra::Matrix3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unite_core::basis::AoBasis;
use unite_core::checks::{random_molecules, test_model};
use unite_core::featurizer::Geometry;
use unite_core::net::{EquivariantRep, Model, Prepared};
use unite_core::pooling::HeadConfig;
use unite_core::toy::MoleculeSampler;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn prepare(model: &Model, g: &Geometry) -> Prepared {
    Prepared::from_geometry(model, g).unwrap().0
}

/// Model with all layers active, calibrated on `count` random molecules.
pub fn calibrated(full: bool, head: HeadConfig, seed: u64, count: usize) -> (Model, Vec<Geometry>, Vec<Prepared>) {
    let mut model = test_model(full, head, seed).unwrap();
    let mols = random_molecules(&mut rng(seed + 1000), &model.basis, count, 3..=6);
    let preps: Vec<Prepared> = mols.iter().map(|g| prepare(&model, g)).collect();
    model.calibrate(&preps).unwrap();
    (model, mols, preps)
}

/// Random connected molecule that contains a sulfur atom (the only toy
/// element with a d shell).
pub fn with_sulfur(seed: u64, natoms: usize) -> Geometry {
    let mut r = rng(seed);
    let sampler = MoleculeSampler {
        elements: vec![1, 6, 16],
        ..MoleculeSampler::default()
    };
    loop {
        let g = sampler.sample(&mut r, natoms);
        if g.atomic_numbers.contains(&16) {
            return g;
        }
    }
}

pub fn random_rep(r: &mut ChaCha8Rng, natoms: usize, size: usize) -> EquivariantRep<f64> {
    let mut h = EquivariantRep::filled(natoms, size, 0.0);
    for v in &mut h.data {
        *v = r.random_range(-1.0..1.0);
    }
    h
}

/// Rotate a `[channel][ao]` vector of one atom shell by shell.
pub fn rotate_ao(model: &Model, z: u32, rot: &Matrix3<f64>, v: &[f64]) -> Vec<f64> {
    let u = AoBasis::new(&model.basis, &[z]).unwrap().rotation_matrix(rot).unwrap();
    let n = u.nrows();
    let mut out = vec![0.0; v.len()];
    for (src, dst) in v.chunks(n).zip(out.chunks_mut(n)) {
        for i in 0..n {
            dst[i] = (0..n).map(|j| u[(i, j)] * src[j]).sum();
        }
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Random molecules on which the default force stencil has converged: the
/// forces at steps 0.01 and 0.005 Bohr agree within `1e-7` per component.
/// Truncation error of the 5-point stencil grows with the fifth derivative of
/// the energy, which is large for some compact toy geometries. Agreement
/// between the two steps says nothing about symmetry, so the net force and
/// rotation checks keep their power.
pub fn converged_stencil_molecules(
    model: &Model,
    seed: u64,
    count: usize,
    atoms: std::ops::RangeInclusive<usize>,
) -> Vec<Geometry> {
    use unite_core::training::{fd_forces, predict_energy, stencil_forces};
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g = random_molecules(&mut r, &model.basis, 1, atoms.clone()).remove(0);
        let coarse = fd_forces(model, &g).unwrap();
        let fine = stencil_forces(&g, 0.005, |x| predict_energy(model, x)).unwrap();
        let gap = coarse
            .iter()
            .zip(&fine)
            .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).abs()))
            .fold(0.0, f64::max);
        if gap < 1e-7 {
            out.push(g);
        }
    }
    out
}
