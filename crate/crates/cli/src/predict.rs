use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde_json::{json, Value};
use unite_core::dataset::Entry;
use unite_core::featurizer::Geometry;
use unite_core::net::{Model, Prepared};
use unite_core::pooling::{
    density_evaluate, epsilon_rho_dataset, l1_integrals, write_cube, DensityAveraging, DensityErrorSample, Grid, HeadKind,
    Prediction, DEFAULT_GRID_SPACING, DENSITY_CUTOFF,
};
use unite_core::training::fd_forces;

/// Padding around the molecule for density grids (Bohr).
pub const GRID_PADDING: f64 = 5.0;

const SYMBOLS: [&str; 18] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar",
];

fn symbol(z: u32) -> String {
    SYMBOLS.get((z as usize).wrapping_sub(1)).map_or_else(|| format!("Z{z}"), |s| s.to_string())
}

/// Every element of every record must be known to the model.
pub fn check_coverage(model: &Model, entries: &[Entry]) -> Result<()> {
    for e in entries {
        if let Some(&z) = e.record.atoms.iter().find(|z| !model.elements.contains(z)) {
            let known: Vec<String> = model.elements.iter().map(|&z| symbol(z)).collect();
            bail!(
                "record on line {}: element {} (Z = {z}) is not covered by the checkpoint (covers {})",
                e.line,
                symbol(z),
                known.join(", ")
            );
        }
    }
    Ok(())
}

fn prediction_json(p: &Prediction<f64>) -> Value {
    match p {
        Prediction::Scalar(x) => json!(x),
        Prediction::Vector(v) => json!(v),
        Prediction::Density(d) => json!(d),
    }
}

pub struct PredictOptions {
    pub forces: bool,
    /// Grid spacing for density cube files, written into `cube_dir`.
    pub cube_spacing: Option<f64>,
    pub cube_dir: Option<PathBuf>,
}

fn predict_one(model: &Model, g: &Geometry) -> Result<Prediction<f64>> {
    let (prep, _) = Prepared::from_geometry(model, g)?;
    Ok(model.predict(&prep)?)
}

/// Predictions for every record, in input order.
pub fn predict_rows(model: &Model, entries: &[Entry], opts: &PredictOptions) -> Result<Vec<Value>> {
    check_coverage(model, entries)?;
    let kind = model.spec.head.kind;
    if opts.forces && kind != HeadKind::Energy {
        bail!("--forces needs a checkpoint with the energy head, this one has {kind:?}");
    }
    if opts.cube_spacing.is_some() && kind != HeadKind::Density {
        bail!("--density-cube needs a checkpoint with the density head, this one has {kind:?}");
    }
    if let Some(dir) = &opts.cube_dir {
        std::fs::create_dir_all(dir)?;
    }
    entries
        .par_iter()
        .map(|e| -> Result<Value> {
            let ctx = || format!("record on line {}", e.line);
            let g = e.record.geometry().with_context(ctx)?;
            let p = predict_one(model, &g).with_context(ctx)?;
            let mut row = json!({ "line": e.line, "prediction": prediction_json(&p) });
            if let Some(id) = &e.record.molecule_id {
                row["molecule_id"] = json!(id);
            }
            if opts.forces {
                row["forces_hartree_per_bohr"] = json!(fd_forces(model, &g).with_context(ctx)?);
            }
            if let (Some(spacing), Prediction::Density(d)) = (opts.cube_spacing, &p) {
                let grid = Grid::around(&g, spacing, GRID_PADDING)?;
                let rho = density_evaluate(&model.spec.aux, d, &g, &grid.points())?;
                let dir = opts.cube_dir.clone().unwrap_or_else(|| PathBuf::from("."));
                let path = dir.join(format!("line{}.cube", e.line));
                let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                write_cube(&mut w, &format!("predicted density, record on line {}", e.line), &g, &grid, &rho)?;
                w.flush()?;
                row["cube"] = json!(path.display().to_string());
                row["grid_counts"] = json!(grid.counts);
            }
            Ok(row)
        })
        .collect()
}

pub fn write_rows(path: &Path, rows: &[Value]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for r in rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;
    Ok(())
}

/// Error metrics of a checkpoint on a labelled dataset.
pub fn evaluate(model: &Model, entries: &[Entry], grid_spacing: Option<f64>) -> Result<Value> {
    check_coverage(model, entries)?;
    let kind = model.spec.head.kind;
    let per_record: Vec<(Vec<f64>, Vec<f64>, Option<DensityErrorSample>)> = entries
        .par_iter()
        .map(|e| {
            let ctx = || format!("record on line {}", e.line);
            let target = e
                .record
                .labels
                .as_ref()
                .and_then(|l| l.target(kind))
                .with_context(|| format!("record on line {} has no label for the {kind:?} head", e.line))?;
            let g = e.record.geometry().with_context(ctx)?;
            let pred = predict_one(model, &g).with_context(ctx)?.values();
            if pred.len() != target.len() {
                bail!("record on line {}: label has {} values, head predicts {}", e.line, target.len(), pred.len());
            }
            let density = if kind == HeadKind::Density {
                let grid = Grid::around(&g, grid_spacing.unwrap_or(DEFAULT_GRID_SPACING), GRID_PADDING)?;
                let pts = grid.points();
                let reference = density_evaluate(&model.spec.aux, &target, &g, &pts)?;
                let predicted = density_evaluate(&model.spec.aux, &pred, &g, &pts)?;
                let (r, p): (Vec<f64>, Vec<f64>) =
                    reference.iter().zip(&predicted).filter(|(r, _)| r.abs() >= DENSITY_CUTOFF).unzip();
                let (num, den) = l1_integrals(&r, &p, &vec![grid.voxel_volume(); r.len()]).with_context(ctx)?;
                Some(DensityErrorSample {
                    error_integral: num,
                    reference_integral: den,
                    electrons: g.electron_count() as f64,
                })
            } else {
                None
            };
            Ok((pred, target, density))
        })
        .collect::<Result<_>>()?;
    let (mut abs, mut sq, mut n) = (0.0, 0.0, 0usize);
    for (p, t, _) in &per_record {
        for (a, b) in p.iter().zip(t) {
            abs += (a - b).abs();
            sq += (a - b).powi(2);
            n += 1;
        }
    }
    let n = n.max(1) as f64;
    let mut report = json!({
        "head": kind,
        "records": entries.len(),
        "mae": abs / n,
        "rmse": (sq / n).sqrt(),
    });
    let density: Vec<DensityErrorSample> = per_record.iter().filter_map(|r| r.2).collect();
    if !density.is_empty() {
        report["epsilon_rho_percent"] = json!({
            "per_molecule": epsilon_rho_dataset(&density, DensityAveraging::PerMolecule)?,
            "per_electron": epsilon_rho_dataset(&density, DensityAveraging::PerElectron)?,
        });
    }
    Ok(report)
}
