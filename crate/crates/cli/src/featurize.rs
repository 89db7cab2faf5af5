use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use unite_core::basis::BasisSet;
use unite_core::dataset::{make_toy, read_dataset, write_dataset};
use unite_core::featurizer::{featurize, FeaturizerConfig};

pub struct ToyOptions {
    pub molecules: usize,
    pub conformers: usize,
    pub min_atoms: usize,
    pub max_atoms: usize,
    pub forces: bool,
    pub seed: u64,
}

/// Random small molecules labelled by the reference tight-binding model.
pub fn make_toy_dataset(opts: &ToyOptions, out: &Path) -> Result<usize> {
    if opts.min_atoms < 2 || opts.min_atoms > opts.max_atoms {
        bail!("atom range {}..={} is empty or below 2", opts.min_atoms, opts.max_atoms);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let records = make_toy(
        &mut rng,
        &BasisSet::toy(),
        opts.molecules,
        opts.conformers,
        opts.min_atoms..=opts.max_atoms,
        opts.forces,
    )?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    write_dataset(&mut w, &records)?;
    w.flush()?;
    Ok(records.len())
}

/// Feature matrices of every record, one JSON object per line.
pub fn featurize_dataset(dataset: &Path, cfg: &FeaturizerConfig, out: &Path) -> Result<usize> {
    let entries = read_dataset(dataset)?;
    let set = BasisSet::toy();
    let rows: Vec<String> = entries
        .par_iter()
        .map(|e| -> Result<String> {
            let g = e.record.geometry().with_context(|| format!("line {}", e.line))?;
            let (t, st) = featurize(&g, &set, cfg).with_context(|| format!("line {}", e.line))?;
            let channels: Vec<String> = t.channels().iter().map(ToString::to_string).collect();
            let matrices: Vec<Vec<f64>> = t.matrices().iter().map(|m| m.transpose().as_slice().to_vec()).collect();
            let row = json!({
                "line": e.line,
                "n_ao": t.matrix(0).nrows(),
                "e_tb": st.e_tb,
                "homo": st.homo(),
                "lumo": st.lumo(),
                "mulliken": st.mulliken,
                "channels": channels,
                "matrices_row_major": matrices,
            });
            Ok(row.to_string())
        })
        .collect::<Result<_>>()?;
    let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
    for r in &rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(rows.len())
}
