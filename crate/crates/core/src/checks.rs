//! Named property suites with machine-readable results.

use std::str::FromStr;
use std::time::Instant;

use nalgebra::Matrix3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::basis::BasisSet;
use crate::dataset::Entry;
use crate::error::{Error, Result};
use crate::featurizer::{featurize, FeaturizerConfig, Geometry};
use crate::net::forward::Prepared;
use crate::net::{Model, ModelConfig, ModelSpec};
use crate::o3::cg::orthogonality_deviation;
use crate::o3::random_rotation;
use crate::pooling::{HeadConfig, HeadKind, Prediction};
use crate::toy::{chain, far_dimer, MoleculeSampler};
use crate::training::{build_samples, gradcheck, LossConfig, Objective, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Equivariance,
    Gradcheck,
    Cg,
    Extensivity,
    Scaling,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Equivariance, Suite::Gradcheck, Suite::Cg, Suite::Extensivity, Suite::Scaling];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Equivariance => "equivariance",
            Suite::Gradcheck => "gradcheck",
            Suite::Cg => "cg",
            Suite::Extensivity => "extensivity",
            Suite::Scaling => "scaling",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite `{s}` (expected one of equivariance, gradcheck, cg, extensivity, scaling)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseResult {
    pub suite: String,
    pub case: String,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CaseResult {
    fn new(suite: Suite, case: impl Into<String>, max_deviation: f64, tolerance: f64) -> Self {
        CaseResult {
            suite: suite.name().into(),
            case: case.into(),
            max_deviation,
            tolerance,
            pass: max_deviation.is_finite() && max_deviation <= tolerance,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub units: usize,
    pub atoms: usize,
    pub median_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Report {
    pub cases: Vec<CaseResult>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub scaling: Vec<ScalingRow>,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub seed: u64,
    pub molecules: usize,
    pub transforms: usize,
    /// Production-size network instead of the reduced one.
    pub full_model: bool,
    /// Scale one coupling coefficient to confirm the harness notices.
    pub inject_cg_bug: bool,
    pub chain_units: Vec<usize>,
    pub repeats: usize,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            seed: 0,
            molecules: 5,
            transforms: 3,
            full_model: false,
            inject_cg_bug: false,
            chain_units: vec![8, 16, 32, 64],
            repeats: 3,
        }
    }
}

/// Tolerances for the end-to-end feature checks.
pub const ROTATION_TOL: f64 = 1e-8;
pub const PARITY_TOL: f64 = 1e-8;
pub const PERMUTATION_TOL: f64 = 1e-10;
pub const TRANSLATION_TOL: f64 = 1e-10;
pub const CG_TOL: f64 = 1e-12;
pub const GRADCHECK_TOL: f64 = 1e-5;
pub const GRADCHECK_STEP: f64 = 1e-5;
/// Denominator floor of the gradient relative error, as a fraction of the
/// largest gradient component (at least 1). Central differences at step 1e-5
/// carry about 1e-10 of rounding noise and up to 1e-9 of truncation error,
/// so components far below the gradient scale are compared absolutely.
pub const GRADCHECK_FLOOR: f64 = 1e-4;
pub const EXTENSIVITY_TOL: f64 = 1e-8;
pub const SCALING_EXPONENT_MAX: f64 = 1.7;

/// Random closed-shell molecules with non-degenerate frontier orbitals.
pub fn random_molecules(rng: &mut ChaCha8Rng, set: &BasisSet, count: usize, atoms: std::ops::RangeInclusive<usize>) -> Vec<Geometry> {
    let sampler = MoleculeSampler::default();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let n = rng.random_range(atoms.clone());
        let g = sampler.sample(rng, n);
        match featurize(&g, set, &FeaturizerConfig::default()) {
            Ok((_, st)) if !st.degenerate_frontier => out.push(g),
            _ => {}
        }
    }
    out
}

/// Model with every layer active (no zero-initialized output layers).
pub fn test_model(full: bool, head: HeadConfig, seed: u64) -> Result<Model> {
    let fcfg = FeaturizerConfig::default();
    let mut cfg = if full { ModelConfig::full(fcfg.nchannels()) } else { ModelConfig::small(fcfg.nchannels()) };
    cfg.zero_init_final = false;
    Model::new(ModelSpec::new(cfg, head, fcfg)?, BasisSet::toy(), seed)
}

fn features(model: &Model, g: &Geometry) -> Result<crate::net::EquivariantRep<f64>> {
    let (p, _) = Prepared::from_geometry(model, g)?;
    model.features(&p)
}

/// Relative scale used for feature deviations: `max(1, max |h|)`.
fn scale(h: &crate::net::EquivariantRep<f64>) -> f64 {
    h.max_abs().max(1.0)
}

/// Rotation, parity, permutation and translation behaviour of the features.
pub fn equivariance(opts: &CheckOptions) -> Result<Vec<CaseResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = test_model(opts.full_model, HeadConfig::energy(), opts.seed)?;
    let mols = random_molecules(&mut rng, &model.basis, opts.molecules, 3..=8);
    let preps: Vec<Prepared> = mols
        .iter()
        .map(|g| Prepared::from_geometry(&model, g).map(|x| x.0))
        .collect::<Result<_>>()?;
    model.calibrate(&preps)?;
    if opts.inject_cg_bug {
        model.perturb_coupling(1.5);
    }
    let mut worst = [0.0f64; 4];
    for (g, p) in mols.iter().zip(&preps) {
        let h = model.features(p)?;
        let s = scale(&h);
        for _ in 0..opts.transforms {
            let rot: Matrix3<f64> = random_rotation(&mut rng);
            let hr = features(&model, &g.rotated(&rot))?;
            worst[0] = worst[0].max(hr.max_abs_diff(&h.rotated(&model.layout, &rot)?) / s);

            let hi = features(&model, &g.rotated(&rot).inverted())?;
            let expect = h.rotated(&model.layout, &rot)?.inverted(&model.layout);
            worst[1] = worst[1].max(hi.max_abs_diff(&expect) / s);

            let mut perm: Vec<usize> = (0..g.natoms()).collect();
            perm.shuffle(&mut rng);
            let hp = features(&model, &g.permuted(&perm)?)?;
            worst[2] = worst[2].max(hp.max_abs_diff(&h.permuted(&perm)?) / s);

            let shift = [0, 1, 2].map(|_| rng.random_range(-10.0..10.0));
            let ht = features(&model, &g.translated(shift))?;
            worst[3] = worst[3].max(ht.max_abs_diff(&h) / s);
        }
    }
    let su = Suite::Equivariance;
    Ok(vec![
        CaseResult::new(su, "rotation", worst[0], ROTATION_TOL),
        CaseResult::new(su, "parity", worst[1], PARITY_TOL),
        CaseResult::new(su, "permutation", worst[2], PERMUTATION_TOL),
        CaseResult::new(su, "translation", worst[3], TRANSLATION_TOL),
    ])
}

pub fn cg() -> Vec<CaseResult> {
    vec![CaseResult::new(Suite::Cg, "orthogonality l<=8", orthogonality_deviation(8), CG_TOL)]
}

/// Samples for a gradient check: small random molecules with dummy labels.
pub fn gradcheck_samples(model: &Model, rng: &mut ChaCha8Rng, count: usize) -> Result<Vec<Sample>> {
    let mols = random_molecules(rng, &model.basis, count, 3..=4);
    let entries: Vec<Entry> = mols
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut r = crate::dataset::Record::from_geometry(g);
            r.labels = Some(crate::dataset::Labels {
                energy_hartree: Some(0.0),
                ..Default::default()
            });
            Entry { line: i + 1, record: r }
        })
        .collect();
    build_samples(model, &entries, &LossConfig::default())
}

/// Analytic versus central-difference gradients of the reduced model.
pub fn gradient_check(opts: &CheckOptions) -> Result<Vec<CaseResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut model = test_model(false, HeadConfig::energy(), opts.seed)?;
    let samples = gradcheck_samples(&model, &mut rng, 2)?;
    let preps: Vec<Prepared> = samples.iter().map(|s| s.prep.clone()).collect();
    model.calibrate(&preps)?;
    let batch: Vec<&Sample> = samples.iter().collect();
    let r = gradcheck(&model, &batch, &Objective::PredictionSum, GRADCHECK_STEP, GRADCHECK_FLOOR)?;
    Ok(vec![CaseResult::new(
        Suite::Gradcheck,
        format!("{} parameters, worst {}", r.checked, r.worst_parameter),
        r.max_rel_error,
        GRADCHECK_TOL,
    )])
}

fn scalar(p: Prediction<f64>) -> f64 {
    match p {
        Prediction::Scalar(x) => x,
        other => panic!("expected a scalar, got {other:?}"),
    }
}

/// Far-separated duplication: energy doubles, orbital-energy heads stay put.
pub fn extensivity(opts: &CheckOptions) -> Result<Vec<CaseResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut out = Vec::new();
    for (kind, case) in [(HeadKind::Energy, "energy doubles"), (HeadKind::Homo, "orbital energy unchanged")] {
        let model = test_model(opts.full_model, HeadConfig::new(kind), opts.seed)?;
        let mols = random_molecules(&mut rng, &model.basis, opts.molecules, 3..=6);
        let mut worst: f64 = 0.0;
        for g in &mols {
            let (p1, _) = Prepared::from_geometry(&model, g)?;
            let (p2, _) = Prepared::from_geometry(&model, &far_dimer(g, 60.0))?;
            let (y1, y2) = (scalar(model.predict(&p1)?), scalar(model.predict(&p2)?));
            let expect = if kind == HeadKind::Energy { 2.0 * y1 } else { y1 };
            worst = worst.max((y2 - expect).abs() / expect.abs().max(1.0));
        }
        out.push(CaseResult::new(Suite::Extensivity, case, worst, EXTENSIVITY_TOL));
    }
    Ok(out)
}

/// Repeat unit for the scaling chains: a bonded H2 pair.
pub fn scaling_unit() -> Geometry {
    Geometry::new(vec![1, 1], vec![[0.0; 3], [1.4, 0.0, 0.0]], 0).expect("valid unit")
}

pub const CHAIN_SPACING: f64 = 4.5;

/// Least-squares slope of `log t` against `log n`.
pub fn power_law_exponent(rows: &[ScalingRow]) -> f64 {
    let xs: Vec<f64> = rows.iter().map(|r| (r.atoms as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_seconds.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Median forward time on chains of increasing length.
pub fn scaling(opts: &CheckOptions) -> Result<(Vec<CaseResult>, Vec<ScalingRow>)> {
    let model = test_model(opts.full_model, HeadConfig::energy(), opts.seed)?;
    let unit = scaling_unit();
    let mut rows = Vec::new();
    for &n in &opts.chain_units {
        let g = chain(&unit, n, CHAIN_SPACING);
        let (p, _) = Prepared::from_geometry(&model, &g)?;
        let mut times: Vec<f64> = (0..opts.repeats.max(1))
            .map(|_| {
                let t0 = Instant::now();
                let h = model.features(&p);
                let dt = t0.elapsed().as_secs_f64();
                h.map(|_| dt)
            })
            .collect::<Result<_>>()?;
        times.sort_by(f64::total_cmp);
        rows.push(ScalingRow {
            units: n,
            atoms: g.natoms(),
            median_seconds: times[times.len() / 2],
        });
    }
    let k = power_law_exponent(&rows);
    Ok((vec![CaseResult::new(Suite::Scaling, "power-law exponent", k, SCALING_EXPONENT_MAX)], rows))
}

pub fn run(suites: &[Suite], opts: &CheckOptions) -> Result<Report> {
    let mut report = Report::default();
    for &s in suites {
        match s {
            Suite::Equivariance => report.cases.extend(equivariance(opts)?),
            Suite::Gradcheck => report.cases.extend(gradient_check(opts)?),
            Suite::Cg => report.cases.extend(cg()),
            Suite::Extensivity => report.cases.extend(extensivity(opts)?),
            Suite::Scaling => {
                let (c, rows) = scaling(opts)?;
                report.cases.extend(c);
                report.scaling = rows;
            }
        }
    }
    report.pass = report.cases.iter().all(|c| c.pass);
    Ok(report)
}
