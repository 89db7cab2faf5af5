//! Line-oriented JSON datasets and the synthetic toy-label generator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::BasisSet;
use crate::error::{Error, Result};
use crate::featurizer::{mean_field, FeaturizerConfig, Geometry};
use crate::pooling::HeadKind;
use crate::toy::MoleculeSampler;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Labels {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_hartree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces_hartree_per_bohr: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole_au: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub homo_hartree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lumo_hartree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_hartree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarizability_au: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2_au: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_coeffs: Option<Vec<f64>>,
}

impl Labels {
    /// Scalar target for a scalar head.
    pub fn scalar(&self, kind: HeadKind) -> Option<f64> {
        match kind {
            HeadKind::Energy => self.energy_hartree,
            HeadKind::Homo => self.homo_hartree,
            HeadKind::Lumo => self.lumo_hartree,
            HeadKind::Gap => self.gap_hartree,
            HeadKind::Polarizability => self.polarizability_au,
            HeadKind::SpatialExtent => self.r2_au,
            HeadKind::Dipole | HeadKind::Density => None,
        }
    }

    /// Flat target values for a head, if present.
    pub fn target(&self, kind: HeadKind) -> Option<Vec<f64>> {
        match kind {
            HeadKind::Dipole => self.dipole_au.map(|d| d.to_vec()),
            HeadKind::Density => self.density_coeffs.clone(),
            _ => self.scalar(kind).map(|v| vec![v]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub atoms: Vec<u32>,
    pub coords_bohr: Vec<[f64; 3]>,
    #[serde(default)]
    pub charge: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Labels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub molecule_id: Option<String>,
}

impl Record {
    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.atoms.clone(), self.coords_bohr.clone(), self.charge)
    }

    pub fn from_geometry(g: &Geometry) -> Self {
        Record {
            atoms: g.atomic_numbers.clone(),
            coords_bohr: g.coords.clone(),
            charge: g.charge,
            labels: None,
            molecule_id: None,
        }
    }
}

/// A parsed record with its 1-based line number.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub line: usize,
    pub record: Record,
}

/// Parse one JSON object per line. Blank lines are allowed; anything else
/// that fails to parse or validate is an error naming the line.
pub fn parse_dataset(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(raw).map_err(|e| Error::Dataset { line, msg: e.to_string() })?;
        validate_record(&record).map_err(|e| Error::Dataset { line, msg: e.to_string() })?;
        out.push(Entry { line, record });
    }
    Ok(out)
}

fn validate_record(r: &Record) -> Result<()> {
    if r.atoms.len() != r.coords_bohr.len() {
        return Err(Error::Config(format!(
            "{} atoms but {} coordinates",
            r.atoms.len(),
            r.coords_bohr.len()
        )));
    }
    r.geometry()?;
    if let Some(l) = &r.labels {
        if let Some(f) = &l.forces_hartree_per_bohr {
            if f.len() != r.atoms.len() {
                return Err(Error::Config(format!("{} force vectors for {} atoms", f.len(), r.atoms.len())));
            }
        }
        let scalars = [l.energy_hartree, l.homo_hartree, l.lumo_hartree, l.gap_hartree, l.polarizability_au, l.r2_au];
        let finite = scalars.iter().flatten().all(|v| v.is_finite())
            && l.dipole_au.iter().flatten().all(|v| v.is_finite())
            && l.forces_hartree_per_bohr.iter().flatten().flatten().all(|v| v.is_finite())
            && l.density_coeffs.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("non-finite label".into()));
        }
    }
    Ok(())
}

pub fn read_dataset(path: &std::path::Path) -> Result<Vec<Entry>> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn write_dataset<W: std::io::Write>(mut out: W, records: &[Record]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

/// Constants of the reference model used to label toy data. They differ
/// from the featurizer's, so the labels are not a copy of the baseline.
pub fn label_model() -> FeaturizerConfig {
    FeaturizerConfig {
        k_huckel: 1.9,
        hardness: 0.55,
        ..FeaturizerConfig::default()
    }
}

/// Energy of the reference model.
pub fn label_energy(g: &Geometry, set: &BasisSet) -> Result<f64> {
    Ok(mean_field(g, set, &label_model())?.e_tb)
}

/// Five-point-stencil forces of the reference model.
pub fn label_forces(g: &Geometry, set: &BasisSet, step: f64) -> Result<Vec<[f64; 3]>> {
    crate::training::stencil_forces(g, step, |x| label_energy(x, set))
}

/// Energy, dipole and frontier orbital labels from the reference model.
pub fn toy_labels(g: &Geometry, set: &BasisSet, with_forces: bool) -> Result<Labels> {
    let st = mean_field(g, set, &label_model())?;
    let mut dipole = [0.0; 3];
    for (x, q) in g.coords.iter().zip(&st.mulliken) {
        for k in 0..3 {
            dipole[k] += q * x[k];
        }
    }
    let homo = st.homo();
    let lumo = st.lumo();
    Ok(Labels {
        energy_hartree: Some(st.e_tb),
        forces_hartree_per_bohr: if with_forces { Some(label_forces(g, set, 0.01)?) } else { None },
        dipole_au: Some(dipole),
        homo_hartree: Some(homo),
        lumo_hartree: lumo,
        gap_hartree: lumo.map(|l| l - homo),
        ..Labels::default()
    })
}

/// Random molecules with reference labels. Each base molecule contributes
/// `conformers` jittered geometries sharing a molecule id.
pub fn make_toy<R: Rng + ?Sized>(
    rng: &mut R,
    set: &BasisSet,
    molecules: usize,
    conformers: usize,
    atoms: std::ops::RangeInclusive<usize>,
    with_forces: bool,
) -> Result<Vec<Record>> {
    let sampler = MoleculeSampler::default();
    let mut out = Vec::with_capacity(molecules * conformers.max(1));
    let mut made = 0;
    while made < molecules {
        let n = rng.random_range(atoms.clone()).max(2);
        let base = sampler.sample(rng, n);
        let mut group = Vec::new();
        for c in 0..conformers.max(1) {
            let g = if c == 0 { base.clone() } else { crate::toy::jitter(&base, rng, 0.05) };
            // resample unlucky geometries (too close, or no gap)
            let Ok(labels) = toy_labels(&g, set, with_forces) else { break };
            let mut r = Record::from_geometry(&g);
            r.labels = Some(labels);
            r.molecule_id = Some(format!("mol{made}"));
            group.push(r);
        }
        if group.len() == conformers.max(1) {
            out.extend(group);
            made += 1;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_name_the_line() {
        let text = "{\"atoms\":[1,1],\"coords_bohr\":[[0,0,0],[1.4,0,0]]}\n\n{\"atoms\":[1],\"coords_bohr\":[]}\n";
        match parse_dataset(text) {
            Err(Error::Dataset { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad = "{\"atoms\":[1,1],\"coords_bohr\":[[0,0,0],[1.4,0,0]],\"labels\":{\"energy\":1}}";
        assert!(matches!(parse_dataset(bad), Err(Error::Dataset { line: 1, .. })));
    }

    #[test]
    fn round_trip() {
        let r = Record {
            atoms: vec![8, 1, 1],
            coords_bohr: vec![[0.0; 3], [1.8, 0.0, 0.0], [-0.4, 1.7, 0.0]],
            charge: 0,
            labels: Some(Labels {
                energy_hartree: Some(-1.25),
                ..Default::default()
            }),
            molecule_id: Some("water".into()),
        };
        let mut buf = Vec::new();
        write_dataset(&mut buf, std::slice::from_ref(&r)).unwrap();
        let back = parse_dataset(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back[0].record, r);
    }
}
