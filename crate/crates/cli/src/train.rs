use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unite_core::basis::BasisSet;
use unite_core::checkpoint;
use unite_core::dataset::{read_dataset, Entry};
use unite_core::net::Model;
use unite_core::training::{build_samples, Trainer};

use crate::config::RunConfig;
use crate::predict::{predict_rows, write_rows, PredictOptions};

pub struct TrainOutputs {
    pub best: PathBuf,
    pub last: PathBuf,
    pub log: PathBuf,
}

/// Seeded split into training and validation entries.
fn split(entries: Vec<Entry>, fraction: f64, seed: u64) -> Result<(Vec<Entry>, Vec<Entry>)> {
    let n = entries.len();
    let n_val = (fraction * n as f64).round() as usize;
    if n == 0 || n_val >= n {
        bail!("dataset has {n} records, too few for a validation fraction of {fraction}");
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = entries.into_iter().zip(is_val).partition(|(_, v)| *v);
    Ok((train.into_iter().map(|x| x.0).collect(), val.into_iter().map(|x| x.0).collect()))
}

pub fn train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<TrainOutputs> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let entries = read_dataset(dataset)?;
    let (train_entries, val_entries) = split(entries, cfg.training.validation_fraction, cfg.training.seed)?;
    let model = Model::new(cfg.spec()?, BasisSet::toy(), cfg.training.seed)?;
    let train_set = build_samples(&model, &train_entries, &cfg.training.loss)?;
    let val_set = build_samples(&model, &val_entries, &cfg.training.loss)?;

    let mut tr = Trainer::new(model, cfg.training.clone())?;
    tr.initialize(&train_set)?;

    let log_path = out.join("train.log");
    let mut log = BufWriter::new(File::create(&log_path)?);
    writeln!(log, "# epoch lr train_loss val_mae")?;
    let mut best_score = f64::INFINITY;
    let mut best = out.join("best.json");
    for epoch in 0..cfg.training.epochs {
        let e = tr.run_epoch(epoch, &train_set, &val_set)?;
        let val = e.val_mae.map_or_else(|| "-".to_string(), |v| v.to_string());
        writeln!(log, "{} {} {} {}", e.epoch, e.lr, e.train_loss, val)?;
        let score = e.val_mae.unwrap_or(e.train_loss);
        if score < best_score {
            best_score = score;
            best = checkpoint::save(&tr.model, out, "best")?;
        }
    }
    log.flush()?;

    let mut steps = BufWriter::new(File::create(out.join("steps.log"))?);
    writeln!(steps, "# step lr loss")?;
    for s in &tr.steps {
        writeln!(steps, "{} {} {}", s.step, s.lr, s.loss)?;
    }
    steps.flush()?;

    let last = checkpoint::save(&tr.model, out, "final")?;
    let opts = PredictOptions { forces: false, cube_spacing: None, cube_dir: None };
    write_rows(&out.join("train_predictions.jsonl"), &predict_rows(&tr.model, &train_entries, &opts)?)?;
    Ok(TrainOutputs { best, last, log: log_path })
}
