//! Flat storage of per-atom equivariant features.
//!
//! One atom's features are laid out group by group, `(p = +1, l = 0..4)`
//! then `(p = -1, l = 0..4)`, each group as `[channel][m]`.

use nalgebra::Matrix3;

use crate::basis::check_permutation;
use crate::error::Result;
use crate::o3::{wigner_d_all, Parity, L_MAX};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Group {
    pub l: usize,
    pub p: Parity,
    /// Number of channels.
    pub n: usize,
    /// First flat index of the group within an atom.
    pub offset: usize,
    /// Index of the group's first neuron among all neurons.
    pub neuron: usize,
}

impl Group {
    pub fn dim(&self) -> usize {
        2 * self.l + 1
    }

    pub fn len(&self) -> usize {
        self.n * self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Flat index of `(channel, m)` within an atom.
    pub fn at(&self, channel: usize, m: usize) -> usize {
        self.offset + channel * self.dim() + m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepLayout {
    groups: Vec<Group>,
    lookup: [[Option<usize>; L_MAX + 1]; 2],
    size: usize,
    neurons: usize,
}

impl RepLayout {
    pub fn new(channels: &[[usize; L_MAX + 1]; 2]) -> Self {
        let mut groups = Vec::new();
        let mut lookup = [[None; L_MAX + 1]; 2];
        let (mut offset, mut neuron) = (0, 0);
        for p in Parity::BOTH {
            for l in 0..=L_MAX {
                let n = channels[p.index()][l];
                if n == 0 {
                    continue;
                }
                lookup[p.index()][l] = Some(groups.len());
                groups.push(Group {
                    l,
                    p,
                    n,
                    offset,
                    neuron,
                });
                offset += n * (2 * l + 1);
                neuron += n;
            }
        }
        RepLayout {
            groups,
            lookup,
            size: offset,
            neurons: neuron,
        }
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn group(&self, l: usize, p: Parity) -> Option<&Group> {
        self.lookup
            .get(p.index())
            .and_then(|row| row.get(l))
            .copied()
            .flatten()
            .map(|g| &self.groups[g])
    }

    /// Flat length per atom.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of neurons (channels summed over groups).
    pub fn neurons(&self) -> usize {
        self.neurons
    }
}

/// Features of every atom of one molecule.
#[derive(Clone, Debug, PartialEq)]
pub struct EquivariantRep<T> {
    pub natoms: usize,
    pub size: usize,
    pub data: Vec<T>,
}

impl<T: Copy> EquivariantRep<T> {
    pub fn filled(natoms: usize, size: usize, value: T) -> Self {
        EquivariantRep {
            natoms,
            size,
            data: vec![value; natoms * size],
        }
    }

    pub fn atom(&self, a: usize) -> &[T] {
        &self.data[a * self.size..(a + 1) * self.size]
    }

    pub fn atom_mut(&mut self, a: usize) -> &mut [T] {
        &mut self.data[a * self.size..(a + 1) * self.size]
    }

    pub fn group<'a>(&'a self, a: usize, g: &Group) -> &'a [T] {
        &self.atom(a)[g.offset..g.offset + g.len()]
    }
}

impl EquivariantRep<f64> {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.abs()).fold(0.0, f64::max)
    }
}

impl EquivariantRep<f64> {
    /// Apply `D^l(R)` to every neuron.
    pub fn rotated(&self, layout: &RepLayout, rot: &Matrix3<f64>) -> Result<Self> {
        let d = wigner_d_all(L_MAX, rot)?;
        let mut out = self.clone();
        for a in 0..self.natoms {
            let src = self.atom(a);
            let dst = out.atom_mut(a);
            for g in layout.groups() {
                let dl = &d[g.l];
                for n in 0..g.n {
                    for i in 0..g.dim() {
                        dst[g.at(n, i)] = (0..g.dim()).map(|j| dl[(i, j)] * src[g.at(n, j)]).sum();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Multiply each neuron by `(-1)^l p`.
    pub fn inverted(&self, layout: &RepLayout) -> Self {
        let mut out = self.clone();
        for a in 0..self.natoms {
            let dst = out.atom_mut(a);
            for g in layout.groups() {
                let sign = if g.l % 2 == 0 { 1.0 } else { -1.0 } * g.p.sign() as f64;
                for v in &mut dst[g.offset..g.offset + g.len()] {
                    *v *= sign;
                }
            }
        }
        out
    }

    /// Atom `A` moves to row `perm[A]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.natoms)?;
        let mut out = self.clone();
        for (a, &pa) in perm.iter().enumerate() {
            out.atom_mut(pa).copy_from_slice(self.atom(a));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_layout_counts() {
        let layout = RepLayout::new(&[[128, 48, 24, 12, 6], [24, 8, 4, 2, 0]]);
        assert_eq!(layout.neurons(), 256);
        assert_eq!(layout.groups().len(), 9);
        assert!(layout.group(4, Parity::Odd).is_none());
        let g = layout.group(1, Parity::Even).unwrap();
        assert_eq!((g.offset, g.neuron, g.dim()), (128, 128, 3));
        let sizes: usize = layout.groups().iter().map(Group::len).sum();
        assert_eq!(sizes, layout.size());
    }
}
