mod common;

use std::sync::Arc;

use common::{calibrated, max_abs, max_abs_diff, prepare, random_rep, rng, rotate_ao, with_sulfur};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use unite_core::basis::{AoBasis, Channel, NBodyTensor};
use unite_core::checks::{random_molecules, test_model};
use unite_core::featurizer::Geometry;
use unite_core::net::forward::{
    aggregate, attention_weights, block_convolution, diagonal_reduce, evnorm, matching, message_step, morlet,
    pointwise_interaction, regularized_norm, NormMode, PairInput,
};
use unite_core::net::{EvStats, Model, Prepared};
use unite_core::o3::{random_rotation, Parity};
use unite_core::pooling::HeadConfig;

fn small() -> (Model, Vec<Geometry>, Vec<Prepared>) {
    calibrated(false, HeadConfig::energy(), 3, 4)
}

/// Single-atom tensor with every channel set to `block`.
fn one_atom_tensor(model: &Model, z: u32, block: impl Fn(usize) -> DMatrix<f64>) -> (NBodyTensor, Geometry) {
    let basis = Arc::new(AoBasis::new(&model.basis, &[z]).unwrap());
    let nc = model.config().input_channels;
    let channels = vec![Channel::Fock, Channel::Density, Channel::CoreHamiltonian, Channel::Overlap];
    let mats = (0..nc).map(&block).collect();
    let g = Geometry::new(vec![z], vec![[0.3, -0.2, 0.1]], 0).unwrap();
    (NBodyTensor::new(basis, channels[..nc].to_vec(), mats).unwrap(), g)
}

#[test]
fn evnorm_hand_example() {
    let (model, _, _) = small();
    let g = model.layout.group(1, Parity::Even).unwrap().clone();
    let mut h = unite_core::net::EquivariantRep::filled(1, model.layout.size(), 0.0);
    h.atom_mut(0)[g.at(0, 0)] = 3.0;
    h.atom_mut(0)[g.at(0, 1)] = 4.0;
    let nn = model.layout.neurons();
    let stats = EvStats::identity(nn);
    let beta = vec![f64::INFINITY; nn];
    let (bar, hat) = evnorm(&model, &h, NormMode::Batch(&stats), &beta).unwrap();
    assert!((bar[g.neuron] - 4.90100).abs() < 1e-5);
    assert!((hat.atom(0)[g.at(0, 0)] - 0.59988).abs() < 1e-5);
    assert!((hat.atom(0)[g.at(0, 1)] - 0.79984).abs() < 1e-5);
    assert_eq!(hat.atom(0)[g.at(0, 2)], 0.0);
    // zero neurons stay zero
    let l0 = model.layout.group(0, Parity::Even).unwrap();
    assert_eq!(hat.atom(0)[l0.at(0, 0)], 0.0);
    assert_eq!(bar[l0.neuron], 0.0);
}

#[test]
fn evnorm_rejects_bad_statistics() {
    let (model, _, _) = small();
    let nn = model.layout.neurons();
    let h = unite_core::net::EquivariantRep::filled(2, model.layout.size(), 0.5);
    let mut stats = EvStats::identity(nn);
    stats.std[0] = 0.0;
    assert!(evnorm(&model, &h, NormMode::Batch(&stats), &vec![1.0; nn]).is_err());
    let short = EvStats::identity(nn - 1);
    assert!(evnorm(&model, &h, NormMode::Batch(&short), &vec![1.0; nn]).is_err());
}

#[test]
fn layer_statistics_are_centered_per_group() {
    let (model, _, _) = small();
    let mut r = rng(5);
    let h = random_rep(&mut r, 4, model.layout.size());
    let nn = model.layout.neurons();
    let (bar, _) = evnorm(&model, &h, NormMode::Layer, &vec![1.0; nn]).unwrap();
    for g in model.layout.groups() {
        let s: f64 = (0..4).flat_map(|a| (0..g.n).map(move |n| a * nn + g.neuron + n)).map(|k| bar[k]).sum();
        assert!(s.abs() < 1e-12);
    }
}

#[test]
fn regularized_norm_values() {
    assert!((regularized_norm(&[3.0, 4.0], 0.1) - (25.01f64.sqrt() - 0.1)).abs() < 1e-15);
    assert_eq!(regularized_norm(&[0.0, 0.0, 0.0], 0.1), 0.0);
}

#[test]
fn diagonal_reduce_is_linear_in_the_blocks() {
    let (model, _, preps) = small();
    let w = model.params.values();
    let mut p = preps[0].clone();
    for atom in &mut p.atoms {
        atom.raw.iter_mut().for_each(|v| *v = 0.0);
    }
    assert_eq!(diagonal_reduce::<f64>(&model, w, &p).max_abs(), 0.0);
}

#[test]
fn s_only_atom_has_only_scalar_features() {
    let (model, _, _) = small();
    let (t, g) = one_atom_tensor(&model, 1, |_| DMatrix::identity(1, 1));
    let p = Prepared::new(&model, &t, &g, 0.0).unwrap();
    let h = diagonal_reduce::<f64>(&model, model.params.values(), &p);
    let l0 = model.layout.group(0, Parity::Even).unwrap();
    assert!(max_abs(&h.atom(0)[l0.offset..l0.offset + l0.len()]) > 0.0);
    for g in model.layout.groups().iter().filter(|g| g.l > 0 || g.p == Parity::Odd) {
        assert_eq!(max_abs(&h.atom(0)[g.offset..g.offset + g.len()]), 0.0, "l={} p={:?}", g.l, g.p);
    }
}

#[test]
fn diagonal_reduce_rotates_with_the_molecule() {
    let (model, mols, _) = small();
    let w = model.params.values();
    let mut r = rng(11);
    for g in mols.iter().chain([&with_sulfur(4, 4)]) {
        let rot = random_rotation(&mut r);
        let h = diagonal_reduce::<f64>(&model, w, &prepare(&model, g));
        let hr = diagonal_reduce::<f64>(&model, w, &prepare(&model, &g.rotated(&rot)));
        let s = h.max_abs().max(1.0);
        assert!(hr.max_abs_diff(&h.rotated(&model.layout, &rot).unwrap()) / s < 1e-9);
        let hi = diagonal_reduce::<f64>(&model, w, &prepare(&model, &g.inverted()));
        assert!(hi.max_abs_diff(&h.inverted(&model.layout)) / s < 1e-9);
    }
}

#[test]
fn matching_skips_absent_shells_and_is_equivariant() {
    let (model, _, _) = small();
    let w = model.params.values();
    let ni = model.config().conv_channels;
    let mut r = rng(2);
    let g = with_sulfur(8, 4);
    let p = prepare(&model, &g);
    for (a, atom) in p.atoms.iter().enumerate() {
        let h = random_rep(&mut r, 1, model.layout.size());
        let out = matching(&model, w, 0, atom, h.atom(0));
        assert_eq!(out.len(), ni * atom.n_ao);
        assert_eq!(atom.shells.iter().any(|s| s.l == 2), atom.z == 16, "atom {a}");
        let zero = matching(&model, w, 0, atom, &vec![0.0; model.layout.size()]);
        assert_eq!(max_abs(&zero), 0.0);

        let rot = random_rotation(&mut r);
        let hr = h.rotated(&model.layout, &rot).unwrap();
        let lhs = matching(&model, w, 0, atom, hr.atom(0));
        let rhs = rotate_ao(&model, atom.z, &rot, &out);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-9 * max_abs(&out).max(1.0));
    }
}

#[test]
fn block_convolution_joint_equivariance() {
    let (model, _, _) = small();
    let w = model.params.values();
    let ni = model.config().conv_channels;
    let mut r = rng(21);
    let g = with_sulfur(3, 5);
    let rot = random_rotation(&mut r);
    let p = prepare(&model, &g);
    let pr = prepare(&model, &g.rotated(&rot));
    assert_eq!(p.pairs.len(), pr.pairs.len());
    for (pair, pair_r) in p.pairs.iter().zip(&pr.pairs) {
        assert_eq!((pair.a, pair.b), (pair_r.a, pair_r.b));
        let nb = p.atoms[pair.b].n_ao;
        let rho: Vec<f64> = (0..ni * nb).map(|_| r.random_range(-1.0..1.0)).collect();
        let rho_r = rotate_ao(&model, p.atoms[pair.b].z, &rot, &rho);
        let m = block_convolution(&model, w, &p, pair, &rho);
        let mr = block_convolution(&model, w, &pr, pair_r, &rho_r);
        let expect = rotate_ao(&model, p.atoms[pair.a].z, &rot, &m);
        assert!(max_abs_diff(&mr, &expect) < 1e-9 * max_abs(&m).max(1.0));
    }
}

#[test]
fn block_convolution_with_identity_block_returns_matched_vector() {
    let (mut model, _, _) = small();
    let nc = model.config().input_channels;
    let mix = model.params.find("input.mix").unwrap().clone();
    let vals = model.params.values_mut();
    for i in 0..model.spec.model.conv_channels {
        for c in 0..nc {
            vals[mix.offset + i * nc + c] = if c == 0 { 1.0 } else { 0.0 };
        }
    }
    model.input_scale = vec![1.0; nc];
    let (t, g) = one_atom_tensor(&model, 8, |c| if c == 0 { DMatrix::identity(5, 5) } else { DMatrix::zeros(5, 5) });
    let p = Prepared::new(&model, &t, &g, 0.0).unwrap();
    assert!(p.pairs.is_empty(), "a single atom has no neighbours");
    let n = p.atoms[0].n_ao;
    let mut blocks = vec![0.0; nc * n * n];
    for k in 0..n {
        blocks[k * n + k] = 1.0;
    }
    let pair = PairInput {
        a: 0,
        b: 0,
        blocks,
        ylm: vec![vec![1.0], vec![0.0; 3], vec![0.0; 5]],
        log_norms: vec![0.0; nc * 9],
        n_shell_pairs: 9,
    };
    let mut r = rng(1);
    let rho: Vec<f64> = (0..model.config().conv_channels * n).map(|_| r.random_range(-1.0..1.0)).collect();
    let m = block_convolution(&model, model.params.values(), &p, &pair, &rho);
    assert!(max_abs_diff(&m, &rho) < 1e-15);
}

#[test]
fn zero_off_diagonal_blocks_give_no_messages() {
    let (model, _, preps) = small();
    let mut p = preps[0].clone();
    for pair in &mut p.pairs {
        pair.blocks.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut r = rng(3);
    let pair = &p.pairs[0];
    let nb = p.atoms[pair.b].n_ao;
    let rho: Vec<f64> = (0..model.config().conv_channels * nb).map(|_| r.random_range(-1.0..1.0)).collect();
    assert_eq!(max_abs(&block_convolution(&model, model.params.values(), &p, pair, &rho)), 0.0);
}

#[test]
fn attention_is_rotation_invariant_and_finite_at_zero() {
    let (model, mols, _) = small();
    let w = model.params.values();
    let mut r = rng(8);
    let g = &mols[0];
    let rot = random_rotation(&mut r);
    let p = prepare(&model, g);
    let pr = prepare(&model, &g.rotated(&rot));
    let h = random_rep(&mut r, g.natoms(), model.layout.size());
    let hr = h.rotated(&model.layout, &rot).unwrap();
    for (pair, pair_r) in p.pairs.iter().zip(&pr.pairs) {
        let a = attention_weights(&model, w, 0, pair, h.atom(pair.a), h.atom(pair.b));
        let ar = attention_weights(&model, w, 0, pair_r, hr.atom(pair.a), hr.atom(pair.b));
        assert_eq!(a.len(), model.config().heads);
        assert!(max_abs_diff(&a, &ar) < 1e-10 * max_abs(&a).max(1.0));
        let zero = vec![0.0; model.layout.size()];
        assert!(attention_weights(&model, w, 0, pair, &zero, &zero).iter().all(|v| v.is_finite()));
    }
}

#[test]
fn morlet_at_origin_is_one() {
    assert_eq!(morlet(0.3, 0.0), 1.0);
    assert_eq!(morlet(7.0, 0.0), 1.0);
    assert!((morlet(0.3, 2.0) - (-1.2f64).exp() * (0.6 * std::f64::consts::PI).cos()).abs() < 1e-15);
}

#[test]
fn isolated_atom_and_zero_attention_give_zero_messages() {
    let (model, _, _) = small();
    let w = model.params.values();
    let g = Geometry::new(vec![8], vec![[0.0; 3]], 0).unwrap();
    let (t, _) = unite_core::featurizer::featurize(&g, &model.basis, &model.spec.featurizer).unwrap();
    let p = Prepared::new(&model, &t, &g, 0.0).unwrap();
    let h = diagonal_reduce::<f64>(&model, w, &p);
    assert_eq!(message_step(&model, w, 0, &p, &h).max_abs(), 0.0);

    let msgs = vec![vec![1.0, -2.0, 0.5, 3.0], vec![0.25, 1.0, -1.0, 2.0]];
    let alphas = vec![vec![0.0; 3]; 2];
    assert_eq!(max_abs(&aggregate(2, 2, 3, &msgs, &alphas)), 0.0);
    let ones = vec![vec![1.0; 3]; 2];
    let sum = aggregate(2, 2, 3, &msgs, &ones);
    // layout [nu][i][j]; message layout [i][nu]
    assert_eq!(sum[0], 1.25);
    assert_eq!(sum[(1 * 2 + 1) * 3 + 2], 5.0);
}

#[test]
fn messages_follow_rotation_and_relabeling() {
    let (model, mols, _) = small();
    let w = model.params.values();
    let mut r = rng(13);
    for g in &mols {
        let p = prepare(&model, g);
        let h = diagonal_reduce::<f64>(&model, w, &p);
        let m = message_step(&model, w, 0, &p, &h);
        let s = m.max_abs().max(1.0);

        let rot = random_rotation(&mut r);
        let pr = prepare(&model, &g.rotated(&rot));
        let mr = message_step(&model, w, 0, &pr, &h.rotated(&model.layout, &rot).unwrap());
        assert!(mr.max_abs_diff(&m.rotated(&model.layout, &rot).unwrap()) / s < 1e-9);

        let mut perm: Vec<usize> = (0..g.natoms()).collect();
        perm.shuffle(&mut r);
        let pp = prepare(&model, &g.permuted(&perm).unwrap());
        let mp = message_step(&model, w, 0, &pp, &h.permuted(&perm).unwrap());
        assert!(mp.max_abs_diff(&m.permuted(&perm).unwrap()) / s < 1e-12);
    }
}

#[test]
fn pointwise_is_identity_for_zero_messages() {
    let fcfg = unite_core::featurizer::FeaturizerConfig::default();
    let model = Model::new(
        unite_core::net::ModelSpec::new(unite_core::net::ModelConfig::small(4), HeadConfig::energy(), fcfg).unwrap(),
        unite_core::basis::BasisSet::toy(),
        0,
    )
    .unwrap();
    assert!(model.config().zero_init_final);
    let mut r = rng(4);
    let h = random_rep(&mut r, 3, model.layout.size());
    let g = unite_core::net::EquivariantRep::filled(3, model.layout.size(), 0.0);
    for step in 0..model.config().steps() {
        let out = pointwise_interaction(&model, model.params.values(), step, &h, &g, None).unwrap();
        assert_eq!(out, h);
        // zero-initialized output layer: identity even with nonzero g
        let out = pointwise_interaction(&model, model.params.values(), step, &h, &h, None).unwrap();
        assert_eq!(out, h);
    }
}

#[test]
fn pointwise_is_equivariant() {
    let (model, _, _) = small();
    let w = model.params.values();
    let mut r = rng(17);
    for step in 0..model.config().steps() {
        let h = random_rep(&mut r, 3, model.layout.size());
        let g = random_rep(&mut r, 3, model.layout.size());
        let out = pointwise_interaction(&model, w, step, &h, &g, None).unwrap();
        let s = out.max_abs().max(1.0);
        let rot = random_rotation(&mut r);
        let (hr, gr) = (h.rotated(&model.layout, &rot).unwrap(), g.rotated(&model.layout, &rot).unwrap());
        let lhs = pointwise_interaction(&model, w, step, &hr, &gr, None).unwrap();
        assert!(lhs.max_abs_diff(&out.rotated(&model.layout, &rot).unwrap()) / s < 1e-9);
        let (hi, gi) = (h.inverted(&model.layout), g.inverted(&model.layout));
        let lhs = pointwise_interaction(&model, w, step, &hi, &gi, None).unwrap();
        assert!(lhs.max_abs_diff(&out.inverted(&model.layout)) / s < 1e-9);
        assert!(out.max_abs_diff(&h) > 0.0, "layers are active");
    }
}

#[test]
fn forward_is_deterministic() {
    let (model, _, preps) = small();
    let a = model.features(&preps[0]).unwrap();
    let b = model.features(&preps[0]).unwrap();
    assert!(a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn unknown_element_is_rejected() {
    let model = test_model(false, HeadConfig::energy(), 0).unwrap();
    let g = Geometry::new(vec![1, 9], vec![[0.0; 3], [1.7, 0.0, 0.0]], 0).unwrap();
    assert!(Prepared::from_geometry(&model, &g).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn direction_part_is_capped(seed in 0u64..10_000, scale in 1e-3f64..1e3) {
        let (model, _, _) = small();
        let mut r = rng(seed);
        let mut h = random_rep(&mut r, 2, model.layout.size());
        h.data.iter_mut().for_each(|v| *v *= scale);
        let nn = model.layout.neurons();
        let beta: Vec<f64> = (0..nn).map(|_| r.random_range(0.1..10.0)).collect();
        let (_, hat) = evnorm(&model, &h, NormMode::Layer, &beta).unwrap();
        for a in 0..2 {
            for g in model.layout.groups() {
                for n in 0..g.n {
                    let s = g.at(n, 0);
                    let v = &hat.atom(a)[s..s + g.dim()];
                    prop_assert!(v.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1.0 + 1e-12);
                }
            }
        }
    }

    #[test]
    fn forward_symmetries(seed in 0u64..10_000) {
        let (model, _, _) = small();
        let mut r = rng(seed);
        let g = random_molecules(&mut r, &model.basis, 1, 3..=6).remove(0);
        let h = model.features(&prepare(&model, &g)).unwrap();
        let s = h.max_abs().max(1.0);
        let rot = random_rotation(&mut r);

        let hr = model.features(&prepare(&model, &g.rotated(&rot))).unwrap();
        prop_assert!(hr.max_abs_diff(&h.rotated(&model.layout, &rot).unwrap()) / s < 1e-8);

        let hi = model.features(&prepare(&model, &g.inverted())).unwrap();
        prop_assert!(hi.max_abs_diff(&h.inverted(&model.layout)) / s < 1e-8);

        let mut perm: Vec<usize> = (0..g.natoms()).collect();
        perm.shuffle(&mut r);
        let hp = model.features(&prepare(&model, &g.permuted(&perm).unwrap())).unwrap();
        prop_assert!(hp.max_abs_diff(&h.permuted(&perm).unwrap()) / s < 1e-10);

        let shift = [0, 1, 2].map(|_| r.random_range(-20.0..20.0));
        let ht = model.features(&prepare(&model, &g.translated(shift))).unwrap();
        prop_assert!(ht.max_abs_diff(&h) / s < 1e-10);
    }
}
