//! One-shot Hückel-plus-charge tight-binding model producing the AO feature
//! matrices, the on-site auxiliary overlaps and a baseline energy.
//!
//! All quantities depend on coordinates only through interatomic difference
//! vectors.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{AoBasis, BasisSet, Channel, NBodyTensor, AO_L_MAX};
use crate::error::{Error, Result};
use crate::gaussian::{shell_overlap, three_center_onsite};

pub const MIN_DISTANCE: f64 = 0.1;
pub const MAX_CONDITION: f64 = 1e10;
pub const DEFAULT_BETAS: [f64; 4] = [4.0, 16.0, 64.0, 256.0];
const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub atomic_numbers: Vec<u32>,
    /// Cartesian coordinates in Bohr.
    pub coords: Vec<[f64; 3]>,
    #[serde(default)]
    pub charge: i32,
}

impl Geometry {
    pub fn new(atomic_numbers: Vec<u32>, coords: Vec<[f64; 3]>, charge: i32) -> Result<Self> {
        let g = Geometry {
            atomic_numbers,
            coords,
            charge,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.atomic_numbers.len() != self.coords.len() {
            return Err(Error::Featurization(format!(
                "{} atomic numbers but {} coordinates",
                self.atomic_numbers.len(),
                self.coords.len()
            )));
        }
        if self.atomic_numbers.is_empty() {
            return Err(Error::Featurization("empty geometry".into()));
        }
        if let Some(&z) = self.atomic_numbers.iter().find(|&&z| z == 0) {
            return Err(Error::UnknownElement(z));
        }
        if self.coords.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Featurization("non-finite coordinate".into()));
        }
        for a in 0..self.natoms() {
            for b in 0..a {
                let r = self.distance(a, b);
                if r < MIN_DISTANCE {
                    return Err(Error::Featurization(format!(
                        "atoms {b} and {a} are {r:.3e} Bohr apart (minimum {MIN_DISTANCE})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn natoms(&self) -> usize {
        self.atomic_numbers.len()
    }

    /// `x_B - x_A`.
    pub fn displacement(&self, a: usize, b: usize) -> [f64; 3] {
        let (xa, xb) = (self.coords[a], self.coords[b]);
        [xb[0] - xa[0], xb[1] - xa[1], xb[2] - xa[2]]
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let d = self.displacement(a, b);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn electron_count(&self) -> i64 {
        self.atomic_numbers.iter().map(|&z| z as i64).sum::<i64>() - self.charge as i64
    }

    pub fn translated(&self, shift: [f64; 3]) -> Self {
        let coords = self
            .coords
            .iter()
            .map(|x| [x[0] + shift[0], x[1] + shift[1], x[2] + shift[2]])
            .collect();
        Geometry {
            coords,
            ..self.clone()
        }
    }

    pub fn rotated(&self, rot: &nalgebra::Matrix3<f64>) -> Self {
        let coords = self
            .coords
            .iter()
            .map(|x| {
                let v = rot * nalgebra::Vector3::new(x[0], x[1], x[2]);
                [v[0], v[1], v[2]]
            })
            .collect();
        Geometry {
            coords,
            ..self.clone()
        }
    }

    pub fn inverted(&self) -> Self {
        let coords = self.coords.iter().map(|x| [-x[0], -x[1], -x[2]]).collect();
        Geometry {
            coords,
            ..self.clone()
        }
    }

    /// Atom `A` of `self` becomes atom `perm[A]` of the result.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        crate::basis::check_permutation(perm, self.natoms())?;
        let mut zs = vec![0; self.natoms()];
        let mut xs = vec![[0.0; 3]; self.natoms()];
        for (a, &pa) in perm.iter().enumerate() {
            zs[pa] = self.atomic_numbers[a];
            xs[pa] = self.coords[a];
        }
        Ok(Geometry {
            atomic_numbers: zs,
            coords: xs,
            charge: self.charge,
        })
    }
}

/// Constants of the toy tight-binding model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaturizerConfig {
    /// Append the energy-weighted hole/particle densities.
    pub fmo_features: bool,
    pub betas: Vec<f64>,
    /// Hückel proportionality constant.
    pub k_huckel: f64,
    /// Charge-response hardness.
    pub hardness: f64,
    /// Entries with smaller magnitude are set to zero in every channel.
    pub flush: f64,
}

impl Default for FeaturizerConfig {
    fn default() -> Self {
        FeaturizerConfig {
            fmo_features: false,
            betas: DEFAULT_BETAS.to_vec(),
            k_huckel: 1.75,
            hardness: 0.4,
            flush: 1e-12,
        }
    }
}

impl FeaturizerConfig {
    pub fn with_fmo(mut self, on: bool) -> Self {
        self.fmo_features = on;
        self
    }

    pub fn nchannels(&self) -> usize {
        if self.fmo_features {
            4 + 2 * self.betas.len()
        } else {
            4
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeanFieldState {
    /// MO coefficients, one column per orbital.
    pub coeffs: DMatrix<f64>,
    /// Orbital energies in ascending order.
    pub energies: DVector<f64>,
    /// Number of doubly occupied spatial orbitals.
    pub n_occ: usize,
    /// `sum_occ C C^T` (no factor of two).
    pub density: DMatrix<f64>,
    pub fock: DMatrix<f64>,
    pub core_hamiltonian: DMatrix<f64>,
    pub overlap: DMatrix<f64>,
    pub mulliken: Vec<f64>,
    pub e_tb: f64,
    /// Set when HOMO or LUMO is degenerate within 1e-8 Hartree.
    pub degenerate_frontier: bool,
}

impl MeanFieldState {
    pub fn homo(&self) -> f64 {
        self.energies[self.n_occ - 1]
    }

    pub fn lumo(&self) -> Option<f64> {
        (self.n_occ < self.energies.len()).then(|| self.energies[self.n_occ])
    }
}

/// Screening: blocks with `mu d^2` above this are below any flush threshold.
const SCREEN: f64 = 60.0;

/// Normalized AO overlap matrix.
pub fn overlap_matrix(g: &Geometry, basis: &AoBasis) -> Result<DMatrix<f64>> {
    let n = basis.dim();
    let mut s = DMatrix::zeros(n, n);
    let atoms = basis.atoms();
    if atoms.len() != g.natoms() {
        return Err(Error::Featurization("basis and geometry disagree on atom count".into()));
    }
    for a in 0..atoms.len() {
        for b in a..atoms.len() {
            let d = g.displacement(a, b);
            let d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            for sa in &atoms[a].shells {
                for sb in &atoms[b].shells {
                    let (ea, eb) = (sa.spec.exponent, sb.spec.exponent);
                    if ea * eb / (ea + eb) * d2 > SCREEN {
                        continue;
                    }
                    let blk = if a == b && sa.offset == sb.offset {
                        // exact identity for a normalized shell with itself
                        DMatrix::identity(sa.spec.dim(), sa.spec.dim())
                    } else {
                        shell_overlap(sa.spec.l, ea, [0.0; 3], sb.spec.l, eb, d)
                    };
                    for i in 0..blk.nrows() {
                        for j in 0..blk.ncols() {
                            s[(sa.offset + i, sb.offset + j)] = blk[(i, j)];
                            s[(sb.offset + j, sa.offset + i)] = blk[(i, j)];
                        }
                    }
                }
            }
        }
    }
    let eig = SymmetricEigen::new(s.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo > 0.0) || hi / lo > MAX_CONDITION {
        return Err(Error::Featurization(format!(
            "overlap matrix is singular or ill-conditioned (eigenvalues {lo:e} .. {hi:e})"
        )));
    }
    Ok(s)
}

/// Solve `H C = S C diag(eps)` with `S = L L^T`. Eigenvalues ascending,
/// ties kept in solver index order.
pub fn generalized_eigen(h: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let chol = s
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Featurization("overlap matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Featurization("Cholesky factor is singular".into()))?;
    let mut a = &linv * h * linv.transpose();
    a = (&a + a.transpose()) * 0.5;
    let eig = a.try_symmetric_eigen(1e-15, 10_000).ok_or_else(|| {
        Error::Featurization("symmetric eigensolver did not converge".into())
    })?;
    let n = h.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]).then(i.cmp(&j)));
    let eps = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let v = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let c = linv.transpose() * v;
    Ok((eps, c))
}

fn occupied_density(c: &DMatrix<f64>, n_occ: usize) -> DMatrix<f64> {
    let co = c.columns(0, n_occ);
    &co * co.transpose()
}

/// Mean-field state of the toy model.
pub fn mean_field(g: &Geometry, set: &BasisSet, cfg: &FeaturizerConfig) -> Result<MeanFieldState> {
    g.validate()?;
    let basis = AoBasis::new(set, &g.atomic_numbers)?;
    mean_field_with_basis(g, set, &basis, cfg)
}

fn mean_field_with_basis(
    g: &Geometry,
    set: &BasisSet,
    basis: &AoBasis,
    cfg: &FeaturizerConfig,
) -> Result<MeanFieldState> {
    let n_elec = g.electron_count();
    if n_elec <= 0 || n_elec % 2 != 0 {
        return Err(Error::Featurization(format!(
            "closed-shell model needs a positive even electron count, got {n_elec}"
        )));
    }
    let n_occ = (n_elec / 2) as usize;
    if n_occ > basis.dim() {
        return Err(Error::Featurization(format!(
            "{n_occ} occupied orbitals exceed the basis dimension {}",
            basis.dim()
        )));
    }
    let s = overlap_matrix(g, basis)?;
    let n = basis.dim();

    let mut onsite = vec![0.0; n];
    for at in basis.atoms() {
        let el = set.element(at.z)?;
        for (slot, &e) in at.shells.iter().zip(&el.onsite) {
            onsite[slot.offset..slot.offset + slot.spec.dim()].fill(e);
        }
    }
    // Diagonal carries the bare on-site energy; scaling it by K as well would
    // make H proportional to S for a homonuclear basis.
    let h = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            onsite[i]
        } else {
            0.5 * cfg.k_huckel * (onsite[i] + onsite[j]) * s[(i, j)]
        }
    });

    let (eps, c) = generalized_eigen(&h, &s)?;
    let p = occupied_density(&c, n_occ);

    let ps = &p * &s;
    let ao_atom = basis.ao_atom();
    let mut pop = vec![0.0; g.natoms()];
    for (i, &a) in ao_atom.iter().enumerate() {
        pop[a] += ps[(i, i)];
    }
    let mulliken: Vec<f64> = g
        .atomic_numbers
        .iter()
        .zip(&pop)
        .map(|(&z, &q)| z as f64 - 2.0 * q)
        .collect();
    let v: Vec<f64> = mulliken.iter().map(|q| cfg.hardness * q).collect();
    let f = DMatrix::from_fn(n, n, |i, j| {
        h[(i, j)] + 0.5 * (v[ao_atom[i]] + v[ao_atom[j]]) * s[(i, j)]
    });

    let mut e_tb = 2.0 * eps.rows(0, n_occ).sum();
    for a in 0..g.natoms() {
        let za = set.element(g.atomic_numbers[a])?.z_eff;
        for b in (a + 1)..g.natoms() {
            let zb = set.element(g.atomic_numbers[b])?.z_eff;
            let r = g.distance(a, b);
            e_tb += za * zb * (-r).exp() / r;
        }
    }

    let near = |i: usize, j: usize| (eps[i] - eps[j]).abs() < DEGENERACY_TOL;
    let mut degenerate = n_occ >= 2 && near(n_occ - 1, n_occ - 2);
    if n_occ < n {
        degenerate |= near(n_occ - 1, n_occ);
        if n_occ + 1 < n {
            degenerate |= near(n_occ, n_occ + 1);
        }
    }

    Ok(MeanFieldState {
        coeffs: c,
        energies: eps,
        n_occ,
        density: p,
        fock: f,
        core_hamiltonian: h,
        overlap: s,
        mulliken,
        e_tb,
        degenerate_frontier: degenerate,
    })
}

/// Hole and particle energy-weighted densities for a given spectrum.
///
/// `D_h(beta) = sum_occ C_i C_i^T exp(-beta (e_HOMO - e_i))` and
/// `D_p(beta) = sum_virt C_a C_a^T exp(-beta (e_a - e_LUMO))`.
pub fn energy_weighted_from_spectrum(
    coeffs: &DMatrix<f64>,
    energies: &DVector<f64>,
    n_occ: usize,
    betas: &[f64],
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    let n = energies.len();
    if n_occ == 0 {
        return Err(Error::Featurization("no occupied orbitals: HOMO undefined".into()));
    }
    if n_occ >= n {
        return Err(Error::Featurization(
            "no virtual orbitals: particle density undefined".into(),
        ));
    }
    let (homo, lumo) = (energies[n_occ - 1], energies[n_occ]);
    let weighted = |range: std::ops::Range<usize>, w: &dyn Fn(f64) -> f64| {
        let mut m = DMatrix::zeros(coeffs.nrows(), coeffs.nrows());
        for i in range {
            let wi = w(energies[i]);
            if wi == 0.0 {
                continue;
            }
            let ci = coeffs.column(i);
            m += wi * &ci * ci.transpose();
        }
        m
    };
    let hole = betas
        .iter()
        .map(|&b| weighted(0..n_occ, &|e| (-b * (homo - e)).exp()))
        .collect();
    let particle = betas
        .iter()
        .map(|&b| weighted(n_occ..n, &|e| (-b * (e - lumo)).exp()))
        .collect();
    Ok((hole, particle))
}

pub fn energy_weighted_density(
    state: &MeanFieldState,
    betas: &[f64],
) -> Result<(Vec<DMatrix<f64>>, Vec<DMatrix<f64>>)> {
    energy_weighted_from_spectrum(&state.coeffs, &state.energies, state.n_occ, betas)
}

/// Shells of the auxiliary expansion used by the diagonal reduction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxBasisSpec {
    /// `exponents[l][n]`, strictly decreasing in `n`.
    pub exponents: Vec<Vec<f64>>,
}

impl Default for AuxBasisSpec {
    fn default() -> Self {
        let geom = |start: f64, ratio: f64, count: usize| -> Vec<f64> {
            (0..count).map(|k| start * ratio.powi(k as i32)).collect()
        };
        AuxBasisSpec {
            exponents: vec![geom(128.0, 0.5, 16), geom(32.0, 0.25, 8), geom(4.0, 0.25, 4)],
        }
    }
}

impl AuxBasisSpec {
    pub fn validate(&self) -> Result<()> {
        for (l, ex) in self.exponents.iter().enumerate() {
            if ex.iter().any(|&g| !(g > 0.0)) || ex.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Config(format!(
                    "aux exponents of degree {l} must be positive and strictly decreasing"
                )));
            }
        }
        Ok(())
    }

    pub fn lmax(&self) -> usize {
        self.exponents.len().saturating_sub(1)
    }

    /// Number of radial functions of degree `l`.
    pub fn count(&self, l: usize) -> usize {
        self.exponents.get(l).map_or(0, Vec::len)
    }

    /// Total number of components; layout is `[l][n][m]`.
    pub fn ncomponents(&self) -> usize {
        self.exponents
            .iter()
            .enumerate()
            .map(|(l, e)| e.len() * (2 * l + 1))
            .sum()
    }

    /// Offset of the first component of degree `l`.
    pub fn offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.count(k) * (2 * k + 1)).sum()
    }
}

/// On-site three-index overlaps `int phi_mu phi_nu chi_{nlm}` for one element.
#[derive(Clone, Debug)]
pub struct AuxOverlap {
    pub n_ao: usize,
    pub n_aux: usize,
    /// Layout `[k][mu][nu]`.
    pub values: Vec<f64>,
}

impl AuxOverlap {
    pub fn at(&self, k: usize, mu: usize, nu: usize) -> f64 {
        self.values[(k * self.n_ao + mu) * self.n_ao + nu]
    }

    /// `sum_{mu nu} block[mu, nu] Q[k][mu][nu]` for every aux component `k`.
    pub fn contract(&self, block: &DMatrix<f64>) -> Vec<f64> {
        let nn = self.n_ao * self.n_ao;
        let flat: Vec<f64> = (0..nn).map(|i| block[(i / self.n_ao, i % self.n_ao)]).collect();
        (0..self.n_aux)
            .map(|k| {
                self.values[k * nn..(k + 1) * nn]
                    .iter()
                    .zip(&flat)
                    .map(|(q, t)| q * t)
                    .sum()
            })
            .collect()
    }
}

pub fn aux_overlap(set: &BasisSet, aux: &AuxBasisSpec, z: u32) -> Result<AuxOverlap> {
    aux.validate()?;
    let el = set.element(z)?;
    let layout = AoBasis::new(set, &[z])?;
    let shells = &layout.atoms()[0].shells;
    let n_ao = layout.dim();
    let n_aux = aux.ncomponents();
    let mut values = vec![0.0; n_aux * n_ao * n_ao];
    for (l, exps) in aux.exponents.iter().enumerate() {
        for (n, &g) in exps.iter().enumerate() {
            let k0 = aux.offset(l) + n * (2 * l + 1);
            for s1 in shells {
                for s2 in shells {
                    let t = three_center_onsite(
                        (s1.spec.l, s1.spec.exponent),
                        (s2.spec.l, s2.spec.exponent),
                        (l, g),
                    );
                    for (i, ti) in t.iter().enumerate() {
                        for (j, tij) in ti.iter().enumerate() {
                            for (m, &v) in tij.iter().enumerate() {
                                let (mu, nu) = (s1.offset + i, s2.offset + j);
                                values[((k0 + m) * n_ao + mu) * n_ao + nu] = v;
                            }
                        }
                    }
                }
            }
        }
    }
    debug_assert_eq!(el.ao_count(), n_ao);
    Ok(AuxOverlap {
        n_ao,
        n_aux,
        values,
    })
}

/// Aux overlap tables for every element of a basis set.
#[derive(Clone, Debug)]
pub struct AuxTables {
    pub spec: AuxBasisSpec,
    tables: BTreeMap<u32, AuxOverlap>,
}

impl AuxTables {
    pub fn new(set: &BasisSet, spec: AuxBasisSpec) -> Result<Self> {
        let mut tables = BTreeMap::new();
        for z in set.atomic_numbers() {
            tables.insert(z, aux_overlap(set, &spec, z)?);
        }
        Ok(AuxTables { spec, tables })
    }

    pub fn get(&self, z: u32) -> Result<&AuxOverlap> {
        self.tables.get(&z).ok_or(Error::UnknownElement(z))
    }
}

/// Feature tensor plus the mean-field state that produced it.
pub fn featurize(g: &Geometry, set: &BasisSet, cfg: &FeaturizerConfig) -> Result<(NBodyTensor, MeanFieldState)> {
    g.validate()?;
    let basis = Arc::new(AoBasis::new(set, &g.atomic_numbers)?);
    if basis.atoms().iter().any(|a| a.shells.iter().any(|s| s.spec.l > AO_L_MAX)) {
        return Err(Error::UnsupportedDegree { l: AO_L_MAX + 1, max: AO_L_MAX });
    }
    let state = mean_field_with_basis(g, set, &basis, cfg)?;
    let mut channels = vec![Channel::Fock, Channel::Density, Channel::CoreHamiltonian, Channel::Overlap];
    let mut mats = vec![
        state.fock.clone(),
        state.density.clone(),
        state.core_hamiltonian.clone(),
        state.overlap.clone(),
    ];
    if cfg.fmo_features {
        let (hole, particle) = energy_weighted_density(&state, &cfg.betas)?;
        channels.extend(cfg.betas.iter().map(|&b| Channel::Hole(b)));
        channels.extend(cfg.betas.iter().map(|&b| Channel::Particle(b)));
        mats.extend(hole);
        mats.extend(particle);
    }
    for m in mats.iter_mut() {
        let sym = (&*m + m.transpose()) * 0.5;
        *m = sym.map(|x| if x.abs() < cfg.flush { 0.0 } else { x });
    }
    let t = NBodyTensor::new(basis, channels, mats)?;
    Ok((t, state))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2(d: f64) -> Geometry {
        Geometry::new(vec![1, 1], vec![[0.0; 3], [0.0, 0.0, d]], 0).unwrap()
    }

    #[test]
    fn single_s_shell_overlap() {
        let set = BasisSet::toy();
        let g = Geometry::new(vec![1], vec![[0.3, 0.1, 0.0]], 1).unwrap();
        let b = AoBasis::new(&set, &g.atomic_numbers).unwrap();
        assert_eq!(overlap_matrix(&g, &b).unwrap(), DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn hydrogen_molecule_electron_count() {
        let set = BasisSet::toy();
        let st = mean_field(&h2(1.4), &set, &FeaturizerConfig::default()).unwrap();
        assert!(((&st.density * &st.overlap).trace() - 1.0).abs() < 1e-12);
        assert_eq!(st.n_occ, 1);
        let resid = &st.core_hamiltonian * &st.coeffs - &st.overlap * &st.coeffs * DMatrix::from_diagonal(&st.energies);
        assert!(resid.abs().max() < 1e-8);
        assert!(st.mulliken.iter().all(|q| q.abs() < 1e-12), "{:?}", st.mulliken);
    }

    #[test]
    fn geometry_errors() {
        assert!(matches!(
            Geometry::new(vec![1, 1], vec![[0.0; 3], [0.05, 0.0, 0.0]], 0),
            Err(Error::Featurization(_))
        ));
        let set = BasisSet::toy();
        let g = Geometry::new(vec![1, 1], vec![[0.0; 3], [1.4, 0.0, 0.0]], 1).unwrap();
        assert!(matches!(mean_field(&g, &set, &FeaturizerConfig::default()), Err(Error::Featurization(_))));
    }

    #[test]
    fn toy_spectrum_weights() {
        let c = DMatrix::identity(4, 4);
        let e = DVector::from_vec(vec![-1.0, -0.5, 0.2, 0.9]);
        let (h, p) = energy_weighted_from_spectrum(&c, &e, 2, &[4.0]).unwrap();
        assert!((h[0][(0, 0)] - 0.1353352832366127).abs() < 1e-15);
        assert_eq!(h[0][(1, 1)], 1.0);
        assert_eq!(p[0][(2, 2)], 1.0);
        assert!((p[0][(3, 3)] - (-2.8f64).exp()).abs() < 1e-15);
        assert!(energy_weighted_from_spectrum(&c, &e, 4, &[4.0]).is_err());
    }

    #[test]
    fn aux_spec_defaults() {
        let a = AuxBasisSpec::default();
        a.validate().unwrap();
        assert_eq!(a.ncomponents(), 16 + 8 * 3 + 4 * 5);
        assert_eq!(a.exponents[0][15], 128.0 * 0.5f64.powi(15));
        assert_eq!(a.exponents[2][3], 4.0 * 0.25f64.powi(3));
        assert!(AuxBasisSpec { exponents: vec![vec![1.0, 2.0]] }.validate().is_err());
    }
}
