mod config;
mod featurize;
mod predict;
mod train;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use unite_core::checkpoint;
use unite_core::checks::{self, CheckOptions, Suite};
use unite_core::dataset::read_dataset;
use unite_core::net::Model;

use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "unite", version, about = "Equivariant networks on atomic-orbital features")]
struct Cli {
    /// Worker threads; 1 makes every command bit-for-bit reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy dataset or dump feature matrices of a dataset.
    Featurize(FeaturizeArgs),
    /// Fit a model and write checkpoints and logs.
    Train(TrainArgs),
    /// Run a checkpoint on a dataset.
    Predict(PredictArgs),
    /// Run property suites and write a JSON report.
    Check(CheckArgs),
    /// Error metrics of a checkpoint on a labelled dataset.
    Eval(EvalArgs),
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Generate this many random molecules with reference labels.
    #[arg(long, value_name = "N", conflicts_with = "dataset")]
    make_toy: Option<usize>,
    /// Dataset whose records are featurized.
    #[arg(long, required_unless_present = "make_toy")]
    dataset: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    /// Jittered conformers per toy molecule (they share a molecule id).
    #[arg(long, default_value_t = 1)]
    conformers: usize,
    #[arg(long, default_value_t = 3)]
    min_atoms: usize,
    #[arg(long, default_value_t = 6)]
    max_atoms: usize,
    /// Add reference forces to toy labels.
    #[arg(long)]
    forces: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Configuration file; only its `featurizer` section is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Append the energy-weighted hole and particle densities.
    #[arg(long)]
    fmo_features: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: PathBuf,
    /// Output directory for checkpoints and logs.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Learn a correction to the baseline tight-binding energy.
    #[arg(long)]
    delta_learning: bool,
    #[arg(long)]
    fmo_features: bool,
}

#[derive(Args)]
struct PredictArgs {
    /// Checkpoint manifest, or a training output directory (uses final.json).
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    /// Add finite-difference forces (energy head only).
    #[arg(long)]
    forces: bool,
    /// Write cube files of the predicted density, e.g. `spacing=0.2`.
    #[arg(long, value_name = "spacing=BOHR", value_parser = parse_cube)]
    density_cube: Option<f64>,
    /// Directory for cube files (default: next to the output file).
    #[arg(long)]
    cube_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Suites to run: equivariance, gradcheck, cg, extensivity, scaling (default: all).
    #[arg(value_parser = parse_suite)]
    suites: Vec<Suite>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    molecules: usize,
    #[arg(long, default_value_t = 3)]
    transforms: usize,
    /// Use the production-size network.
    #[arg(long)]
    full_model: bool,
    /// Scale one coupling coefficient to confirm the equivariance suite fails.
    #[arg(long)]
    inject_cg_bug: bool,
    /// Chain lengths for the scaling suite.
    #[arg(long, value_delimiter = ',', default_values_t = vec![8, 16, 32, 64])]
    chain_units: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Grid spacing for the density error metric (Bohr).
    #[arg(long)]
    grid_spacing: Option<f64>,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse::<Suite>().map_err(|e| e.to_string())
}

fn parse_cube(s: &str) -> Result<f64, String> {
    let v = s.strip_prefix("spacing=").ok_or_else(|| format!("expected spacing=<bohr>, got `{s}`"))?;
    let x: f64 = v.parse().map_err(|_| format!("invalid spacing `{v}`"))?;
    if !(x > 0.0 && x.is_finite()) {
        return Err(format!("spacing must be positive, got {x}"));
    }
    Ok(x)
}

fn load_checkpoint(path: &Path) -> Result<Model> {
    let manifest = if path.is_dir() { path.join("final.json") } else { path.to_path_buf() };
    checkpoint::load(&manifest).with_context(|| format!("loading checkpoint {}", manifest.display()))
}

fn emit(report: &serde_json::Value, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Featurize(a) => {
            if let Some(molecules) = a.make_toy {
                let opts = featurize::ToyOptions {
                    molecules,
                    conformers: a.conformers,
                    min_atoms: a.min_atoms,
                    max_atoms: a.max_atoms,
                    forces: a.forces,
                    seed: a.seed,
                };
                let n = featurize::make_toy_dataset(&opts, &a.out)?;
                eprintln!("wrote {n} records to {}", a.out.display());
            } else {
                let flags = Overrides { fmo_features: a.fmo_features, ..Overrides::default() };
                let cfg = RunConfig::load(a.config.as_deref(), &flags)?;
                let dataset = a.dataset.expect("clap requires a dataset");
                let n = featurize::featurize_dataset(&dataset, &cfg.featurizer, &a.out)?;
                eprintln!("featurized {n} records into {}", a.out.display());
            }
        }
        Command::Train(a) => {
            let flags = Overrides { seed: a.seed, delta_learning: a.delta_learning, fmo_features: a.fmo_features };
            let cfg = RunConfig::load(a.config.as_deref(), &flags)?;
            let out = train::train(&cfg, &a.dataset, &a.out)?;
            eprintln!(
                "best checkpoint {}, final checkpoint {}, log {}",
                out.best.display(),
                out.last.display(),
                out.log.display()
            );
        }
        Command::Predict(a) => {
            let model = load_checkpoint(&a.checkpoint)?;
            let entries = read_dataset(&a.dataset)?;
            let cube_dir = a
                .density_cube
                .map(|_| a.cube_dir.clone().unwrap_or_else(|| a.out.parent().map(Path::to_path_buf).unwrap_or_default()));
            let opts = predict::PredictOptions { forces: a.forces, cube_spacing: a.density_cube, cube_dir };
            let rows = predict::predict_rows(&model, &entries, &opts)?;
            predict::write_rows(&a.out, &rows)?;
        }
        Command::Check(a) => {
            let suites = if a.suites.is_empty() { Suite::ALL.to_vec() } else { a.suites };
            let opts = CheckOptions {
                seed: a.seed,
                molecules: a.molecules,
                transforms: a.transforms,
                full_model: a.full_model,
                inject_cg_bug: a.inject_cg_bug,
                chain_units: a.chain_units,
                repeats: a.repeats,
            };
            let report = checks::run(&suites, &opts)?;
            emit(&serde_json::to_value(&report)?, a.report.as_deref())?;
            for c in report.cases.iter().filter(|c| !c.pass) {
                eprintln!("FAIL {}/{}: {:e} > {:e}", c.suite, c.case, c.max_deviation, c.tolerance);
            }
            if !report.pass {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Eval(a) => {
            let model = load_checkpoint(&a.checkpoint)?;
            let entries = read_dataset(&a.dataset)?;
            let report = predict::evaluate(&model, &entries, a.grid_spacing)?;
            emit(&report, a.report.as_deref())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
