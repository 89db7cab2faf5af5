//! Readout heads, density evaluation on grids and the density error metric.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{Error, Result};
use crate::featurizer::{AuxBasisSpec, Geometry};
use crate::gaussian::normalization;
use crate::net::forward::{column_of, neuron_norms, Prepared};
use crate::net::model::Model;
use crate::net::params::{Init, ParamSet, P};
use crate::net::rep::{EquivariantRep, RepLayout};
use crate::o3::rsh::solid_harmonics;
use crate::o3::Parity;

/// Below this total predicted charge the spatial-extent centroid is undefined.
pub const MIN_CENTROID_CHARGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Energy,
    Dipole,
    Polarizability,
    Homo,
    Lumo,
    Gap,
    SpatialExtent,
    Density,
}

/// How global-attention weights are normalized in orbital-energy heads.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionKind {
    Linear,
    #[default]
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    #[serde(default)]
    pub attention: AttentionKind,
    /// Add the baseline tight-binding energy to energy predictions.
    #[serde(default)]
    pub delta_learning: bool,
    /// Start every head weight at zero.
    #[serde(default)]
    pub zero_init: bool,
}

impl HeadConfig {
    pub fn new(kind: HeadKind) -> Self {
        HeadConfig {
            kind,
            attention: AttentionKind::default(),
            delta_learning: false,
            zero_init: false,
        }
    }

    pub fn energy() -> Self {
        Self::new(HeadKind::Energy)
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ChargeIndex {
    pub charge_w: P,
    pub charge_bias: P,
    pub vector_w: P,
}

#[derive(Clone, Debug)]
pub(crate) struct OrbitalIndex {
    pub attn_w: P,
    pub w: P,
    pub bias: P,
}

#[derive(Clone, Debug)]
pub(crate) enum HeadIndex {
    Energy { w: P, bias: P },
    Dipole(ChargeIndex),
    Polarizability(ChargeIndex),
    Orbital(OrbitalIndex),
    Gap { homo: OrbitalIndex, lumo: OrbitalIndex },
    SpatialExtent { charges: ChargeIndex, extent_w: P },
    /// `[element][l]`, each `n_aux_l x N_{l,+}`.
    Density(Vec<Vec<P>>),
}

impl HeadIndex {
    /// Per-element bias vector, if the head has one.
    pub(crate) fn element_bias(&self) -> Option<P> {
        match self {
            HeadIndex::Energy { bias, .. } => Some(*bias),
            HeadIndex::Orbital(o) => Some(o.bias),
            _ => None,
        }
    }
}

pub(crate) fn build_head(
    ps: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    cfg: &HeadConfig,
    layout: &RepLayout,
    elements: &[u32],
    aux: &AuxBasisSpec,
) -> Result<HeadIndex> {
    let weight = || if cfg.zero_init { Init::Zeros } else { Init::Scaled(1.0) };
    let ne = elements.len();
    let n_total = layout.neurons();
    let even = |l: usize| layout.group(l, Parity::Even).map_or(0, |g| g.n);
    let charges = |ps: &mut ParamSet, rng: &mut ChaCha8Rng, pre: &str| ChargeIndex {
        charge_w: ps.add(format!("{pre}.charge_w"), 1, even(0), weight(), rng),
        charge_bias: ps.add(format!("{pre}.charge_bias"), 1, ne, Init::Zeros, rng),
        vector_w: ps.add(format!("{pre}.vector_w"), 1, even(1), weight(), rng),
    };
    let orbital = |ps: &mut ParamSet, rng: &mut ChaCha8Rng, pre: &str| OrbitalIndex {
        attn_w: ps.add(format!("{pre}.attn_w"), 1, n_total, weight(), rng),
        w: ps.add(format!("{pre}.w"), 1, n_total, weight(), rng),
        bias: ps.add(format!("{pre}.bias"), 1, ne, Init::Zeros, rng),
    };
    Ok(match cfg.kind {
        HeadKind::Energy => HeadIndex::Energy {
            w: ps.add("head.energy.w", 1, n_total, weight(), rng),
            bias: ps.add("head.energy.bias", 1, ne, Init::Zeros, rng),
        },
        HeadKind::Dipole => HeadIndex::Dipole(charges(ps, rng, "head.dipole")),
        HeadKind::Polarizability => HeadIndex::Polarizability(charges(ps, rng, "head.polarizability")),
        HeadKind::Homo => HeadIndex::Orbital(orbital(ps, rng, "head.homo")),
        HeadKind::Lumo => HeadIndex::Orbital(orbital(ps, rng, "head.lumo")),
        HeadKind::Gap => HeadIndex::Gap {
            homo: orbital(ps, rng, "head.gap.homo"),
            lumo: orbital(ps, rng, "head.gap.lumo"),
        },
        HeadKind::SpatialExtent => HeadIndex::SpatialExtent {
            charges: charges(ps, rng, "head.extent"),
            extent_w: ps.add("head.extent.extent_w", 1, even(0), weight(), rng),
        },
        HeadKind::Density => {
            if aux.lmax() > 2 {
                return Err(Error::UnsupportedDegree { l: aux.lmax(), max: 2 });
            }
            let w = elements
                .iter()
                .map(|z| {
                    (0..=aux.lmax())
                        .map(|l| ps.add(format!("head.density.z{z}.l{l}"), aux.count(l), even(l), weight(), rng))
                        .collect()
                })
                .collect();
            HeadIndex::Density(w)
        }
    })
}

/// Model output; the variant matches the configured head.
#[derive(Clone, Debug, PartialEq)]
pub enum Prediction<T> {
    Scalar(T),
    Vector([T; 3]),
    /// Per-atom density coefficients concatenated, each atom laid out `[l][n][m]`.
    Density(Vec<T>),
}

impl<T: Real> Prediction<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Prediction::Scalar(x) => vec![*x],
            Prediction::Vector(v) => v.to_vec(),
            Prediction::Density(d) => d.clone(),
        }
    }

    pub fn to_f64(&self) -> Prediction<f64> {
        match self {
            Prediction::Scalar(x) => Prediction::Scalar(x.val()),
            Prediction::Vector(v) => Prediction::Vector([v[0].val(), v[1].val(), v[2].val()]),
            Prediction::Density(d) => Prediction::Density(d.iter().map(Real::val).collect()),
        }
    }
}

/// Even-parity degree-1 features contracted with `w`, as a Cartesian vector.
fn atom_vector<T: Real>(model: &Model, w: &[T], vector_w: P, h: &[T]) -> [T; 3] {
    let Some(g) = model.layout.group(1, Parity::Even) else {
        return [T::zero(); 3];
    };
    let comp: Vec<T> = (0..3).map(|m| T::dot(vector_w.slice(w), &column_of(h, g, m))).collect();
    // degree-1 components are ordered (y, z, x)
    [comp[2], comp[0], comp[1]]
}

fn atom_scalar<T: Real>(model: &Model, w: &[T], weights: P, h: &[T]) -> T {
    let g = model.layout.group(0, Parity::Even).expect("scalar channels exist");
    T::dot(weights.slice(w), &h[g.offset..g.offset + g.n])
}

/// Raw charges `q'` and atomic vectors.
fn charges_and_vectors<T: Real>(model: &Model, w: &[T], idx: &ChargeIndex, prep: &Prepared, h: &EquivariantRep<T>) -> (Vec<T>, Vec<[T; 3]>) {
    let q = (0..h.natoms)
        .map(|a| atom_scalar(model, w, idx.charge_w, h.atom(a)) + idx.charge_bias.slice(w)[prep.atoms[a].element])
        .collect();
    let v = (0..h.natoms).map(|a| atom_vector(model, w, idx.vector_w, h.atom(a))).collect();
    (q, v)
}

/// Subtract the mean so the values sum to zero.
pub fn compensate<T: Real>(q: &[T]) -> Vec<T> {
    if q.is_empty() {
        return Vec::new();
    }
    let mean = T::sum(q) / q.len() as f64;
    q.iter().map(|&x| x - mean).collect()
}

/// `sum_A x_A q_A + v_A`.
fn first_moment<T: Real>(coords: &[[f64; 3]], q: &[T], v: &[[T; 3]]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for (k, o) in out.iter_mut().enumerate() {
        let xs: Vec<f64> = coords.iter().map(|x| x[k]).collect();
        let vs: Vec<T> = v.iter().map(|v| v[k]).collect();
        *o = T::lin(q, &xs) + T::sum(&vs);
    }
    out
}

fn orbital_pool<T: Real>(model: &Model, w: &[T], idx: &OrbitalIndex, prep: &Prepared, norms: &[Vec<T>]) -> Result<T> {
    let scores: Vec<T> = norms.iter().map(|n| T::dot(idx.attn_w.slice(w), n)).collect();
    let weights: Vec<T> = match model.spec.head.attention {
        AttentionKind::Exponential => {
            let shift = scores.iter().map(Real::val).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<T> = scores.iter().map(|&s| (s - shift).exp()).collect();
            let total = T::sum(&e);
            e.iter().map(|&x| x / total).collect()
        }
        AttentionKind::Linear => {
            let total = T::sum(&scores);
            if !(total.val() > 0.0) {
                return Err(Error::Domain(format!(
                    "linear attention normalizer {} is not positive",
                    total.val()
                )));
            }
            scores.iter().map(|&x| x / total).collect()
        }
    };
    let values: Vec<T> = norms
        .iter()
        .zip(&prep.atoms)
        .map(|(n, atom)| T::dot(idx.w.slice(w), n) + idx.bias.slice(w)[atom.element])
        .collect();
    Ok(T::dot(&weights, &values))
}

/// Apply the configured head to final features.
pub fn pool<T: Real>(model: &Model, w: &[T], prep: &Prepared, h: &EquivariantRep<T>) -> Result<Prediction<T>> {
    let norms = || -> Vec<Vec<T>> { (0..h.natoms).map(|a| neuron_norms(model, h.atom(a))).collect() };
    Ok(match &model.head_index {
        HeadIndex::Energy { w: wo, bias } => {
            let per_atom: Vec<T> = norms()
                .iter()
                .zip(&prep.atoms)
                .map(|(n, atom)| T::dot(wo.slice(w), n) + bias.slice(w)[atom.element])
                .collect();
            let e = T::sum(&per_atom);
            Prediction::Scalar(if model.spec.head.delta_learning { e + prep.e_tb } else { e })
        }
        HeadIndex::Dipole(idx) => {
            let (q, v) = charges_and_vectors(model, w, idx, prep, h);
            Prediction::Vector(first_moment(&prep.coords, &compensate(&q), &v))
        }
        HeadIndex::Polarizability(idx) => {
            let (alpha, p) = charges_and_vectors(model, w, idx, prep, h);
            let mut terms = alpha;
            for k in 0..3 {
                let pk: Vec<T> = p.iter().map(|v| v[k]).collect();
                let xs: Vec<f64> = prep.coords.iter().map(|x| x[k]).collect();
                terms.push(T::lin(&compensate(&pk), &xs));
            }
            Prediction::Scalar(T::sum(&terms))
        }
        HeadIndex::Orbital(idx) => Prediction::Scalar(orbital_pool(model, w, idx, prep, &norms())?),
        HeadIndex::Gap { homo, lumo } => {
            let n = norms();
            Prediction::Scalar(orbital_pool(model, w, lumo, prep, &n)? - orbital_pool(model, w, homo, prep, &n)?)
        }
        HeadIndex::SpatialExtent { charges, extent_w } => {
            let (q, v) = charges_and_vectors(model, w, charges, prep, h);
            let total = T::sum(&q);
            if total.val().abs() < MIN_CENTROID_CHARGE {
                return Err(Error::DegenerateCentroid(total.val()));
            }
            let moment = first_moment(&prep.coords, &q, &v);
            let centroid = moment.map(|c| c / total);
            let mut terms = Vec::with_capacity(2 * h.natoms);
            for (a, x) in prep.coords.iter().enumerate() {
                let d: Vec<T> = (0..3).map(|k| centroid[k] * -1.0 + x[k]).collect();
                terms.push(T::dot(&d, &d) * q[a]);
                terms.push(atom_scalar(model, w, *extent_w, h.atom(a)));
            }
            Prediction::Scalar(T::sum(&terms))
        }
        HeadIndex::Density(weights) => {
            let aux = &model.spec.aux;
            let mut out = Vec::with_capacity(h.natoms * aux.ncomponents());
            for (a, atom) in prep.atoms.iter().enumerate() {
                for (l, wl) in weights[atom.element].iter().enumerate() {
                    let g = model.layout.group(l, Parity::Even).expect("even groups up to l=2 exist");
                    let cols: Vec<Vec<T>> = (0..2 * l + 1).map(|m| column_of(h.atom(a), g, m)).collect();
                    for n in 0..aux.count(l) {
                        for col in &cols {
                            out.push(T::dot(wl.row(w, n), col));
                        }
                    }
                }
            }
            Prediction::Density(out)
        }
    })
}

/// Index of the per-element bias array of the head, if any.
pub fn element_bias_param(model: &Model) -> Option<P> {
    model.head_index.element_bias()
}

/// Rectilinear grid; points are ordered with `z` fastest, then `y`, then `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub counts: [usize; 3],
}

/// Default voxel edge (Bohr).
pub const DEFAULT_GRID_SPACING: f64 = 0.2;
/// Reference density below which grid points are ignored by the error metric.
pub const DENSITY_CUTOFF: f64 = 1e-5;

impl Grid {
    /// Box enclosing all atoms with `padding` on every side.
    pub fn around(g: &Geometry, spacing: f64, padding: f64) -> Result<Self> {
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Config(format!("grid spacing {spacing} must be positive")));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for x in &g.coords {
            for k in 0..3 {
                lo[k] = lo[k].min(x[k]);
                hi[k] = hi[k].max(x[k]);
            }
        }
        let origin = lo.map(|v| v - padding);
        let counts = [0, 1, 2].map(|k| ((hi[k] - lo[k] + 2.0 * padding) / spacing).ceil() as usize + 1);
        Ok(Grid { origin, spacing, counts })
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        let [_, ny, nz] = self.counts;
        let (ix, iy, iz) = (i / (ny * nz), (i / nz) % ny, i % nz);
        [
            self.origin[0] + ix as f64 * self.spacing,
            self.origin[1] + iy as f64 * self.spacing,
            self.origin[2] + iz as f64 * self.spacing,
        ]
    }

    pub fn points(&self) -> Vec<[f64; 3]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn voxel_volume(&self) -> f64 {
        self.spacing.powi(3)
    }
}

/// `rho(r) = sum_A sum_{nlm} d_A^{nlm} chi_A^{nlm}(r)`.
pub fn density_evaluate(aux: &AuxBasisSpec, coeffs: &[f64], g: &Geometry, points: &[[f64; 3]]) -> Result<Vec<f64>> {
    let per_atom = aux.ncomponents();
    if coeffs.len() != per_atom * g.natoms() {
        return Err(Error::Config(format!(
            "expected {} density coefficients, got {}",
            per_atom * g.natoms(),
            coeffs.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite grid point".into()));
    }
    let norms: Vec<Vec<f64>> = aux
        .exponents
        .iter()
        .enumerate()
        .map(|(l, ex)| ex.iter().map(|&a| normalization(l, a)).collect())
        .collect();
    Ok(points
        .par_iter()
        .map(|r| {
            let mut acc = 0.0;
            for (a, x) in g.coords.iter().enumerate() {
                let d = [r[0] - x[0], r[1] - x[1], r[2] - x[2]];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let c = &coeffs[a * per_atom..(a + 1) * per_atom];
                for (l, ex) in aux.exponents.iter().enumerate() {
                    let ylm = solid_harmonics(l, d);
                    for (n, &gamma) in ex.iter().enumerate() {
                        let radial = norms[l][n] * (-gamma * r2).exp();
                        if radial == 0.0 {
                            continue;
                        }
                        let base = aux.offset(l) + n * (2 * l + 1);
                        for (m, y) in ylm.iter().enumerate() {
                            acc += c[base + m] * radial * y;
                        }
                    }
                }
            }
            acc
        })
        .collect())
}

/// Integral of the normalized s-type aux function with exponent `a`.
pub fn s_function_integral(a: f64) -> f64 {
    normalization(0, a) * (std::f64::consts::PI / a).powf(1.5)
}

/// Relative L1 density error in percent.
pub fn epsilon_rho(reference: &[f64], predicted: &[f64], weights: &[f64]) -> Result<f64> {
    let (num, den) = l1_integrals(reference, predicted, weights)?;
    Ok(100.0 * num / den)
}

/// `(int |rho - rho_hat|, int |rho|)` by the same quadrature.
pub fn l1_integrals(reference: &[f64], predicted: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    if reference.len() != predicted.len() || reference.len() != weights.len() {
        return Err(Error::Config("density samples and weights differ in length".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((r, p), w) in reference.iter().zip(predicted).zip(weights) {
        num += w * (r - p).abs();
        den += w * r.abs();
    }
    if den == 0.0 {
        return Err(Error::Domain("reference density integrates to zero".into()));
    }
    Ok((num, den))
}

/// Grid-based relative error with voxel weights, skipping points where the
/// reference falls below `cutoff`.
pub fn epsilon_rho_on_grid(reference: &[f64], predicted: &[f64], grid: &Grid, cutoff: f64) -> Result<f64> {
    let (r, p): (Vec<f64>, Vec<f64>) = reference
        .iter()
        .zip(predicted)
        .filter(|(r, _)| r.abs() >= cutoff)
        .map(|(a, b)| (*a, *b))
        .unzip();
    let w = vec![grid.voxel_volume(); r.len()];
    epsilon_rho(&r, &p, &w)
}

/// How per-molecule density errors are combined over a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityAveraging {
    /// Plain mean of per-molecule percentages.
    PerMolecule,
    /// Percentages weighted by electron count.
    PerElectron,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityErrorSample {
    pub error_integral: f64,
    pub reference_integral: f64,
    pub electrons: f64,
}

pub fn epsilon_rho_dataset(samples: &[DensityErrorSample], mode: DensityAveraging) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Domain("no density samples".into()));
    }
    if samples.iter().any(|s| s.reference_integral == 0.0) {
        return Err(Error::Domain("reference density integrates to zero".into()));
    }
    let pct = |s: &DensityErrorSample| 100.0 * s.error_integral / s.reference_integral;
    Ok(match mode {
        DensityAveraging::PerMolecule => samples.iter().map(pct).sum::<f64>() / samples.len() as f64,
        DensityAveraging::PerElectron => {
            let total: f64 = samples.iter().map(|s| s.electrons).sum();
            samples.iter().map(|s| pct(s) * s.electrons).sum::<f64>() / total
        }
    })
}

/// Gaussian cube text: two comment lines, origin, axes, atoms, then values
/// with `z` fastest, six per line.
pub fn write_cube<W: Write>(mut out: W, title: &str, g: &Geometry, grid: &Grid, values: &[f64]) -> Result<()> {
    if values.len() != grid.len() {
        return Err(Error::Config("cube values do not match grid size".into()));
    }
    writeln!(out, "{title}")?;
    writeln!(out, "density on a rectilinear grid (bohr)")?;
    writeln!(
        out,
        "{:5} {:12.6} {:12.6} {:12.6}",
        g.natoms(),
        grid.origin[0],
        grid.origin[1],
        grid.origin[2]
    )?;
    for k in 0..3 {
        let mut axis = [0.0; 3];
        axis[k] = grid.spacing;
        writeln!(out, "{:5} {:12.6} {:12.6} {:12.6}", grid.counts[k], axis[0], axis[1], axis[2])?;
    }
    for (z, x) in g.atomic_numbers.iter().zip(&g.coords) {
        writeln!(out, "{:5} {:12.6} {:12.6} {:12.6} {:12.6}", z, *z as f64, x[0], x[1], x[2])?;
    }
    let nz = grid.counts[2];
    for row in values.chunks(nz) {
        for line in row.chunks(6) {
            let s: Vec<String> = line.iter().map(|v| format!("{v:13.5E}")).collect();
            writeln!(out, "{}", s.join(""))?;
        }
    }
    Ok(())
}
