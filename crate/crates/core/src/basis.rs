//! Atomic-orbital basis layout and order-2 N-body tensors.
//!
//! AO indices are grouped by atom, then by shell in element-table order, and
//! within a shell by `m = -l..=l` (the harmonic ordering used everywhere).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::o3::wigner::{check_rotation, wigner_d_unchecked};

/// Highest AO shell degree supported by the basis tables.
pub const AO_L_MAX: usize = 2;

/// One single-Gaussian solid-harmonic shell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShellSpec {
    /// 1-based index among the element's shells of the same degree.
    pub n: usize,
    pub l: usize,
    /// Gaussian exponent in inverse squared Bohr.
    pub exponent: f64,
}

impl ShellSpec {
    pub fn new(n: usize, l: usize, exponent: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("shell principal index must be positive".into()));
        }
        if l > AO_L_MAX {
            return Err(Error::UnsupportedDegree { l, max: AO_L_MAX });
        }
        if !(exponent > 0.0) {
            return Err(Error::Config(format!("shell exponent must be positive, got {exponent}")));
        }
        Ok(ShellSpec { n, l, exponent })
    }

    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }
}

/// Shells and tight-binding constants for one element.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElementBasis {
    pub z: u32,
    pub symbol: String,
    pub shells: Vec<ShellSpec>,
    /// On-site energy (Hartree) for each shell.
    pub onsite: Vec<f64>,
    /// Effective core charge for the pair repulsion.
    pub z_eff: f64,
}

impl ElementBasis {
    pub fn ao_count(&self) -> usize {
        self.shells.iter().map(ShellSpec::dim).sum()
    }

    /// Number of shells of degree `l`.
    pub fn shell_count(&self, l: usize) -> usize {
        self.shells.iter().filter(|s| s.l == l).count()
    }
}

/// Per-element shell table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisSet {
    elements: Vec<ElementBasis>,
}

fn shells(spec: &[(usize, f64, f64)]) -> (Vec<ShellSpec>, Vec<f64>) {
    let mut counts = [0usize; AO_L_MAX + 1];
    let mut out = Vec::new();
    let mut onsite = Vec::new();
    for &(l, exponent, e) in spec {
        counts[l] += 1;
        out.push(ShellSpec {
            n: counts[l],
            l,
            exponent,
        });
        onsite.push(e);
    }
    (out, onsite)
}

impl BasisSet {
    pub fn new(mut elements: Vec<ElementBasis>) -> Result<Self> {
        elements.sort_by_key(|e| e.z);
        for e in &elements {
            if e.onsite.len() != e.shells.len() {
                return Err(Error::Config(format!("element {} has mismatched on-site table", e.z)));
            }
            for (i, s) in e.shells.iter().enumerate() {
                ShellSpec::new(s.n, s.l, s.exponent)?;
                let expected = e.shells[..i].iter().filter(|t| t.l == s.l).count() + 1;
                if s.n != expected {
                    return Err(Error::Config(format!(
                        "element {}: shells of degree {} must be numbered 1, 2, ...",
                        e.z, s.l
                    )));
                }
            }
        }
        Ok(BasisSet { elements })
    }

    /// Minimal single-Gaussian table: H 1s; C, N, O two s shells and one p
    /// shell; S two s shells, one p and one d shell.
    ///
    /// Exponents and on-site energies are model constants of the toy
    /// tight-binding scheme, not fitted values.
    pub fn toy() -> Self {
        let mk = |z: u32, symbol: &str, spec: &[(usize, f64, f64)], z_eff: f64| {
            let (shells, onsite) = shells(spec);
            ElementBasis {
                z,
                symbol: symbol.to_string(),
                shells,
                onsite,
                z_eff,
            }
        };
        BasisSet::new(vec![
            mk(1, "H", &[(0, 0.40, -0.50)], 1.0),
            mk(6, "C", &[(0, 8.0, -11.0), (0, 0.45, -0.70), (1, 0.40, -0.40)], 4.0),
            mk(7, "N", &[(0, 11.0, -15.5), (0, 0.60, -0.95), (1, 0.50, -0.50)], 5.0),
            mk(8, "O", &[(0, 14.5, -20.5), (0, 0.75, -1.20), (1, 0.60, -0.60)], 6.0),
            mk(
                16,
                "S",
                &[(0, 40.0, -88.0), (0, 0.50, -0.80), (1, 0.45, -0.45), (2, 0.35, -0.15)],
                6.0,
            ),
        ])
        .expect("toy table is consistent")
    }

    pub fn elements(&self) -> &[ElementBasis] {
        &self.elements
    }

    pub fn element(&self, z: u32) -> Result<&ElementBasis> {
        self.elements
            .iter()
            .find(|e| e.z == z)
            .ok_or(Error::UnknownElement(z))
    }

    pub fn atomic_numbers(&self) -> Vec<u32> {
        self.elements.iter().map(|e| e.z).collect()
    }

    /// `M_l`: largest number of degree-`l` shells on any element.
    pub fn max_shells(&self) -> [usize; AO_L_MAX + 1] {
        let mut m = [0; AO_L_MAX + 1];
        for e in &self.elements {
            for (l, slot) in m.iter_mut().enumerate() {
                *slot = (*slot).max(e.shell_count(l));
            }
        }
        m
    }
}

/// A shell placed on a particular atom.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShellSlot {
    pub spec: ShellSpec,
    /// First AO index of the shell in the molecule.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomShells {
    pub z: u32,
    pub offset: usize,
    pub len: usize,
    pub shells: Vec<ShellSlot>,
}

/// AO layout of one molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct AoBasis {
    atoms: Vec<AtomShells>,
    dim: usize,
}

impl AoBasis {
    pub fn new(set: &BasisSet, atomic_numbers: &[u32]) -> Result<Self> {
        let mut atoms = Vec::with_capacity(atomic_numbers.len());
        let mut offset = 0;
        for &z in atomic_numbers {
            let el = set.element(z)?;
            let start = offset;
            let shells = el
                .shells
                .iter()
                .map(|&spec| {
                    let slot = ShellSlot { spec, offset };
                    offset += spec.dim();
                    slot
                })
                .collect();
            atoms.push(AtomShells {
                z,
                offset: start,
                len: offset - start,
                shells,
            });
        }
        Ok(AoBasis { atoms, dim: offset })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn natoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[AtomShells] {
        &self.atoms
    }

    pub fn atom(&self, a: usize) -> Result<&AtomShells> {
        self.atoms.get(a).ok_or(Error::AtomIndex {
            index: a,
            natoms: self.atoms.len(),
        })
    }

    /// Atom owning each AO index.
    pub fn ao_atom(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for (a, at) in self.atoms.iter().enumerate() {
            out[at.offset..at.offset + at.len].fill(a);
        }
        out
    }

    /// Degree of each AO index.
    pub fn ao_degree(&self) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for at in &self.atoms {
            for s in &at.shells {
                out[s.offset..s.offset + s.spec.dim()].fill(s.spec.l);
            }
        }
        out
    }

    /// Block-diagonal matrix carrying `D^l(R)` on every shell.
    pub fn rotation_matrix(&self, rot: &Matrix3<f64>) -> Result<DMatrix<f64>> {
        check_rotation(rot)?;
        let ds: Vec<DMatrix<f64>> = (0..=AO_L_MAX).map(|l| wigner_d_unchecked(l, rot)).collect();
        let mut u = DMatrix::zeros(self.dim, self.dim);
        for at in &self.atoms {
            for s in &at.shells {
                let d = &ds[s.spec.l];
                u.view_mut((s.offset, s.offset), (d.nrows(), d.ncols())).copy_from(d);
            }
        }
        Ok(u)
    }
}

/// Name of a feature channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Channel {
    Fock,
    Density,
    CoreHamiltonian,
    Overlap,
    /// Energy-weighted hole density at inverse temperature `beta`.
    Hole(f64),
    /// Energy-weighted particle density at inverse temperature `beta`.
    Particle(f64),
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Fock => write!(f, "F"),
            Channel::Density => write!(f, "P"),
            Channel::CoreHamiltonian => write!(f, "H"),
            Channel::Overlap => write!(f, "S"),
            Channel::Hole(b) => write!(f, "D_h({b})"),
            Channel::Particle(b) => write!(f, "D_p({b})"),
        }
    }
}

/// Stack of symmetric AO matrices sharing one basis layout.
#[derive(Clone, Debug)]
pub struct NBodyTensor {
    basis: Arc<AoBasis>,
    channels: Vec<Channel>,
    mats: Vec<DMatrix<f64>>,
    /// For each atom, the other atoms whose blocks are nonzero in any channel.
    neighbours: Vec<Vec<usize>>,
}

impl NBodyTensor {
    pub fn new(basis: Arc<AoBasis>, channels: Vec<Channel>, mats: Vec<DMatrix<f64>>) -> Result<Self> {
        if channels.len() != mats.len() {
            return Err(Error::Config("channel names and matrices differ in count".into()));
        }
        for (c, m) in channels.iter().zip(&mats) {
            if m.nrows() != basis.dim() || m.ncols() != basis.dim() {
                return Err(Error::Config(format!(
                    "channel {c} has shape {}x{}, basis dimension is {}",
                    m.nrows(),
                    m.ncols(),
                    basis.dim()
                )));
            }
        }
        let neighbours = Self::find_neighbours(&basis, &mats);
        Ok(NBodyTensor {
            basis,
            channels,
            mats,
            neighbours,
        })
    }

    fn find_neighbours(basis: &AoBasis, mats: &[DMatrix<f64>]) -> Vec<Vec<usize>> {
        let atoms = basis.atoms();
        let n = atoms.len();
        let mut out = vec![Vec::new(); n];
        for a in 0..n {
            for b in (a + 1)..n {
                let (ra, rb) = (&atoms[a], &atoms[b]);
                let nonzero = mats.iter().any(|m| {
                    m.view((ra.offset, rb.offset), (ra.len, rb.len))
                        .iter()
                        .any(|&x| x != 0.0)
                        || m.view((rb.offset, ra.offset), (rb.len, ra.len))
                            .iter()
                            .any(|&x| x != 0.0)
                });
                if nonzero {
                    out[a].push(b);
                    out[b].push(a);
                }
            }
        }
        out
    }

    pub fn basis(&self) -> &AoBasis {
        &self.basis
    }

    pub fn basis_arc(&self) -> &Arc<AoBasis> {
        &self.basis
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn nchannels(&self) -> usize {
        self.mats.len()
    }

    pub fn matrix(&self, channel: usize) -> &DMatrix<f64> {
        &self.mats[channel]
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }

    /// Atoms `B != A` with a nonzero `(A, B)` block.
    pub fn neighbours(&self, a: usize) -> &[usize] {
        &self.neighbours[a]
    }

    /// Number of nonzero atom-pair blocks, diagonal included.
    pub fn nonzero_blocks(&self) -> usize {
        self.basis.natoms() + self.neighbours.iter().map(Vec::len).sum::<usize>()
    }

    /// Dense copy of the `(A, B)` block of one channel.
    pub fn block_at(&self, channel: usize, a: usize, b: usize) -> Result<DMatrix<f64>> {
        if channel >= self.mats.len() {
            return Err(Error::Config(format!("channel index {channel} out of range")));
        }
        let ra = self.basis.atom(a)?;
        let rb = self.basis.atom(b)?;
        Ok(self.mats[channel]
            .view((ra.offset, rb.offset), (ra.len, rb.len))
            .into_owned())
    }

    /// Largest deviation from symmetry over all channels.
    pub fn asymmetry(&self) -> f64 {
        self.mats
            .iter()
            .map(|m| (m - m.transpose()).abs().max())
            .fold(0.0, f64::max)
    }

    /// Apply `D^l(R) . T^{l;l'} . D^{l'}(R)^T` to every shell-pair block.
    pub fn rotate(&self, rot: &Matrix3<f64>) -> Result<Self> {
        let u = self.basis.rotation_matrix(rot)?;
        let mats = self.mats.iter().map(|m| &u * m * u.transpose()).collect();
        Self::new(self.basis.clone(), self.channels.clone(), mats)
    }

    /// Inversion: every shell-pair block picks up `(-1)^(l + l')`.
    pub fn invert(&self) -> Self {
        let deg = self.basis.ao_degree();
        let mats = self
            .mats
            .iter()
            .map(|m| {
                DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
                    if (deg[i] + deg[j]) % 2 == 0 {
                        m[(i, j)]
                    } else {
                        -m[(i, j)]
                    }
                })
            })
            .collect();
        NBodyTensor {
            basis: self.basis.clone(),
            channels: self.channels.clone(),
            mats,
            neighbours: self.neighbours.clone(),
        }
    }

    /// Relabel atoms: atom `A` of the input becomes atom `perm[A]`.
    pub fn permute_atoms(&self, set: &BasisSet, perm: &[usize]) -> Result<Self> {
        let n = self.basis.natoms();
        check_permutation(perm, n)?;
        let atoms = self.basis.atoms();
        let mut zs = vec![0; n];
        for (a, &pa) in perm.iter().enumerate() {
            zs[pa] = atoms[a].z;
        }
        let new_basis = AoBasis::new(set, &zs)?;
        // old AO index -> new AO index
        let mut map = vec![0; self.basis.dim()];
        for (a, &pa) in perm.iter().enumerate() {
            let (old, new) = (&atoms[a], &new_basis.atoms()[pa]);
            for k in 0..old.len {
                map[old.offset + k] = new.offset + k;
            }
        }
        let mats = self
            .mats
            .iter()
            .map(|m| {
                let mut out = DMatrix::zeros(m.nrows(), m.ncols());
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        out[(map[i], map[j])] = m[(i, j)];
                    }
                }
                out
            })
            .collect();
        Self::new(Arc::new(new_basis), self.channels.clone(), mats)
    }
}

pub(crate) fn check_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::Permutation(format!(
            "length {} does not match {n} atoms",
            perm.len()
        )));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || seen[p] {
            return Err(Error::Permutation(format!("{perm:?} is not a bijection")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Inverse of a permutation given as `perm[A] = sigma(A)`.
pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (a, &p) in perm.iter().enumerate() {
        inv[p] = a;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_s_atoms(sigma: f64) -> NBodyTensor {
        let set = BasisSet::toy();
        let basis = Arc::new(AoBasis::new(&set, &[1, 1]).unwrap());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, sigma, sigma, 1.0]);
        NBodyTensor::new(basis, vec![Channel::Overlap], vec![m]).unwrap()
    }

    #[test]
    fn layout_offsets_are_contiguous() {
        let set = BasisSet::toy();
        let b = AoBasis::new(&set, &[8, 1, 1, 16]).unwrap();
        assert_eq!(b.dim(), 5 + 1 + 1 + 10);
        let mut next = 0;
        for at in b.atoms() {
            assert_eq!(at.offset, next);
            for s in &at.shells {
                assert_eq!(s.offset, next);
                next += s.spec.dim();
            }
        }
        assert_eq!(next, b.dim());
        assert_eq!(set.max_shells(), [2, 1, 1]);
        assert!(matches!(AoBasis::new(&set, &[2]), Err(Error::UnknownElement(2))));
    }

    #[test]
    fn block_reads() {
        let t = two_s_atoms(0.3);
        assert_eq!(t.block_at(0, 0, 1).unwrap()[(0, 0)], 0.3);
        assert_eq!(t.block_at(0, 1, 1).unwrap()[(0, 0)], 1.0);
        assert!(matches!(t.block_at(0, 2, 0), Err(Error::AtomIndex { index: 2, .. })));
        assert_eq!(t.neighbours(0), &[1]);
    }

    #[test]
    fn identity_channel_diagonal_block() {
        let set = BasisSet::toy();
        let basis = Arc::new(AoBasis::new(&set, &[6, 1]).unwrap());
        let t = NBodyTensor::new(basis, vec![Channel::Overlap], vec![DMatrix::identity(6, 6)]).unwrap();
        assert_eq!(t.block_at(0, 0, 0).unwrap(), DMatrix::identity(5, 5));
        assert!(t.neighbours(0).is_empty());
    }

    #[test]
    fn swap_two_atoms() {
        let set = BasisSet::toy();
        let basis = Arc::new(AoBasis::new(&set, &[1, 1]).unwrap());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        let t = NBodyTensor::new(basis, vec![Channel::Overlap], vec![m]).unwrap();
        let p = t.permute_atoms(&set, &[1, 0]).unwrap();
        assert_eq!(p.block_at(0, 0, 0).unwrap()[(0, 0)], 3.0);
        assert_eq!(p.block_at(0, 1, 1).unwrap()[(0, 0)], 1.0);
        assert!(matches!(
            t.permute_atoms(&set, &[0, 0]),
            Err(Error::Permutation(_))
        ));
    }

    #[test]
    fn s_only_rotation_is_trivial() {
        let t = two_s_atoms(0.4);
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let r = t.rotate(&rot).unwrap();
        assert!((r.matrix(0) - t.matrix(0)).abs().max() < 1e-15);
    }
}
