//! Losses, optimizer, schedules, exact gradients and the training loop.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Real, Tape, Var};
use crate::dataset::Entry;
use crate::error::{Error, Result};
use crate::featurizer::Geometry;
use crate::gaussian::shell_overlap;
use crate::featurizer::AuxBasisSpec;
use crate::net::forward::{forward, Prepared, StatsAccumulator};
use crate::net::model::Model;
use crate::pooling::{element_bias_param, pool, HeadKind, Prediction};

/// Finite-difference step for forces (Bohr).
pub const FORCE_STEP: f64 = 0.01;

/// Mean Huber-style loss with transition at 1.
pub fn smooth_l1<T: Real>(pred: &[T], target: &[f64]) -> T {
    assert_eq!(pred.len(), target.len(), "prediction and target lengths differ");
    if pred.is_empty() {
        return T::zero();
    }
    let terms: Vec<T> = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            if d.val().abs() < 1.0 {
                d * d * 0.5
            } else if d.val() >= 0.0 {
                d - 0.5
            } else {
                d * -1.0 - 0.5
            }
        })
        .collect();
    T::sum(&terms) / pred.len() as f64
}

/// Symmetric matrix in coordinate form; both triangles are stored.
#[derive(Clone, Debug, PartialEq)]
pub struct CooMatrix {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    /// Nonzero entries of a dense matrix.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    entries.push((i, j, m[(i, j)]));
                }
            }
        }
        CooMatrix { n: m.nrows(), entries }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
        }
        m
    }
}

/// Metric of the density loss.
#[derive(Clone, Debug, PartialEq)]
pub enum DensityMetric {
    Dense(DMatrix<f64>),
    Coo(CooMatrix),
}

impl DensityMetric {
    pub fn dim(&self) -> usize {
        match self {
            DensityMetric::Dense(m) => m.nrows(),
            DensityMetric::Coo(c) => c.n,
        }
    }

    /// Reject metrics that are not symmetric positive definite.
    pub fn validate(&self) -> Result<()> {
        let dense = match self {
            DensityMetric::Dense(m) => {
                if !m.is_square() {
                    return Err(Error::Domain("density metric is not square".into()));
                }
                m.clone()
            }
            DensityMetric::Coo(c) => {
                if c.entries.iter().any(|&(i, j, _)| i >= c.n || j >= c.n) {
                    return Err(Error::Domain("density metric entry out of range".into()));
                }
                c.to_dense()
            }
        };
        let scale = dense.abs().max().max(1.0);
        if (&dense - dense.transpose()).abs().max() > 1e-12 * scale {
            return Err(Error::Domain("density metric is not symmetric".into()));
        }
        if dense.cholesky().is_none() {
            return Err(Error::Domain("density metric is not positive definite".into()));
        }
        Ok(())
    }

    fn terms(&self) -> Vec<(u32, u32, f64)> {
        match self {
            DensityMetric::Dense(m) => {
                let mut t = Vec::new();
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        if m[(i, j)] != 0.0 {
                            t.push((i as u32, j as u32, m[(i, j)]));
                        }
                    }
                }
                t
            }
            DensityMetric::Coo(c) => c.entries.iter().map(|&(i, j, v)| (i as u32, j as u32, v)).collect(),
        }
    }
}

/// `(d - d_hat)^T S (d - d_hat)`.
pub fn density_loss<T: Real>(pred: &[T], target: &[f64], metric: &DensityMetric) -> Result<T> {
    metric.validate()?;
    if pred.len() != target.len() || pred.len() != metric.dim() {
        return Err(Error::Config(format!(
            "density loss sizes differ: prediction {}, target {}, metric {}",
            pred.len(),
            target.len(),
            metric.dim()
        )));
    }
    let r: Vec<T> = pred.iter().zip(target).map(|(&p, &t)| p - t).collect();
    Ok(T::bilinear(&r, &r, &metric.terms()))
}

/// Overlap matrix of all aux functions of a molecule, atom-major.
pub fn aux_metric(aux: &AuxBasisSpec, g: &Geometry) -> DMatrix<f64> {
    let per_atom = aux.ncomponents();
    let n = per_atom * g.natoms();
    let mut s = DMatrix::zeros(n, n);
    let shells: Vec<(usize, usize, f64)> = aux
        .exponents
        .iter()
        .enumerate()
        .flat_map(|(l, ex)| ex.iter().enumerate().map(move |(k, &a)| (l, k, a)))
        .collect();
    for (a, xa) in g.coords.iter().enumerate() {
        for (b, xb) in g.coords.iter().enumerate() {
            for &(l1, k1, e1) in &shells {
                for &(l2, k2, e2) in &shells {
                    let blk = shell_overlap(l1, e1, *xa, l2, e2, *xb);
                    let o1 = a * per_atom + aux.offset(l1) + k1 * (2 * l1 + 1);
                    let o2 = b * per_atom + aux.offset(l2) + k2 * (2 * l2 + 1);
                    for i in 0..blk.nrows() {
                        for j in 0..blk.ncols() {
                            s[(o1 + i, o2 + j)] = blk[(i, j)];
                        }
                    }
                }
            }
        }
    }
    s
}

/// `L(E, E_hat) + c_G L(dE, dE_hat)` with `dE_i = E_i - E_{partner(i)}`.
pub fn geometry_pair_loss<T: Real>(pred: &[T], target: &[f64], partner: &[usize], c_g: f64) -> T {
    let dp: Vec<T> = partner.iter().enumerate().map(|(i, &j)| pred[i] - pred[j]).collect();
    let dt: Vec<f64> = partner.iter().enumerate().map(|(i, &j)| target[i] - target[j]).collect();
    smooth_l1(pred, target) + smooth_l1(&dp, &dt) * c_g
}

/// For each batch member, a uniformly drawn member with the same molecule id
/// (possibly itself).
pub fn sample_partners<R: Rng + ?Sized>(ids: &[&str], rng: &mut R) -> Vec<usize> {
    (0..ids.len())
        .map(|i| {
            let same: Vec<usize> = (0..ids.len()).filter(|&j| ids[j] == ids[i]).collect();
            same[rng.random_range(0..same.len())]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Plain,
    EnergyForce,
    GeometryPair,
    Density,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub c_e: f64,
    pub c_f: f64,
    pub c_g: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            kind: LossKind::Plain,
            c_e: 1.0,
            c_f: 1000.0,
            c_g: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Schedule {
    Constant,
    /// Linear warmup, then cosine annealing to zero at `total` epochs.
    WarmupCosine { warmup: usize, total: usize },
    /// Halve the rate every fifth of `total` epochs.
    StepDecay { total: usize },
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::WarmupCosine { warmup, total } if warmup > total || total == 0 => {
                Err(Error::Config(format!("warmup {warmup} must not exceed total {total} > 0")))
            }
            Schedule::StepDecay { total: 0 } => Err(Error::Config("step decay needs a positive epoch count".into())),
            _ => Ok(()),
        }
    }

    /// Learning rate at (possibly fractional) epoch `t`.
    pub fn rate(&self, max_lr: f64, t: f64) -> f64 {
        match *self {
            Schedule::Constant => max_lr,
            Schedule::WarmupCosine { warmup, total } => {
                let (w, n) = (warmup as f64, total as f64);
                if t < w {
                    max_lr * (t + 1.0).min(w) / w
                } else {
                    let frac = ((t - w) / (n - w).max(1.0)).clamp(0.0, 1.0);
                    0.5 * max_lr * (1.0 + (std::f64::consts::PI * frac).cos())
                }
            }
            Schedule::StepDecay { total } => {
                let every = (total as f64 / 5.0).ceil().max(1.0);
                max_lr * 0.5f64.powi((t / every).floor() as i32)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.lr, self.beta1, self.beta2, self.eps].iter().all(|v| *v > 0.0 && v.is_finite())
            && self.beta1 < 1.0
            && self.beta2 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("optimizer values must be positive and betas below 1".into()))
        }
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &OptimizerConfig, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

/// One training example with everything precomputed.
#[derive(Clone, Debug)]
pub struct Sample {
    pub line: usize,
    pub molecule_id: String,
    pub geometry: Geometry,
    pub prep: Prepared,
    pub target: Vec<f64>,
    pub forces: Option<Vec<f64>>,
    /// Per Cartesian coordinate, inputs at `+2h, +h, -h, -2h`.
    pub stencil: Vec<[Prepared; 4]>,
    pub metric: Option<DensityMetric>,
}

fn missing(line: usize, what: &str) -> Error {
    Error::Dataset {
        line,
        msg: format!("missing label `{what}`"),
    }
}

fn label_name(kind: HeadKind) -> &'static str {
    match kind {
        HeadKind::Energy => "energy_hartree",
        HeadKind::Dipole => "dipole_au",
        HeadKind::Polarizability => "polarizability_au",
        HeadKind::Homo => "homo_hartree",
        HeadKind::Lumo => "lumo_hartree",
        HeadKind::Gap => "gap_hartree",
        HeadKind::SpatialExtent => "r2_au",
        HeadKind::Density => "density_coeffs",
    }
}

fn displaced(g: &Geometry, coord: usize, delta: f64) -> Geometry {
    let mut out = g.clone();
    out.coords[coord / 3][coord % 3] += delta;
    out
}

/// Featurize dataset entries into training samples, checking labels and
/// element coverage.
pub fn build_samples(model: &Model, entries: &[Entry], loss: &LossConfig) -> Result<Vec<Sample>> {
    let kind = model.spec.head.kind;
    entries
        .par_iter()
        .map(|e| -> Result<Sample> {
            let line = e.line;
            let wrap = |err: Error| match err {
                Error::Dataset { .. } => err,
                other => Error::Dataset {
                    line,
                    msg: other.to_string(),
                },
            };
            let labels = e.record.labels.as_ref().ok_or_else(|| missing(line, label_name(kind)))?;
            let target = labels.target(kind).ok_or_else(|| missing(line, label_name(kind)))?;
            let geometry = e.record.geometry().map_err(wrap)?;
            let (prep, _) = Prepared::from_geometry(model, &geometry).map_err(wrap)?;
            let mut forces = None;
            let mut stencil = Vec::new();
            if loss.kind == LossKind::EnergyForce {
                if kind != HeadKind::Energy {
                    return Err(Error::Config("force training requires the energy head".into()));
                }
                let f = labels
                    .forces_hartree_per_bohr
                    .as_ref()
                    .ok_or_else(|| missing(line, "forces_hartree_per_bohr"))?;
                forces = Some(f.iter().flatten().copied().collect());
                for c in 0..3 * geometry.natoms() {
                    let p = |d: f64| Prepared::from_geometry(model, &displaced(&geometry, c, d)).map(|x| x.0).map_err(wrap);
                    let h = FORCE_STEP;
                    stencil.push([p(2.0 * h)?, p(h)?, p(-h)?, p(-2.0 * h)?]);
                }
            }
            let metric = match (loss.kind, kind) {
                (LossKind::Density, HeadKind::Density) => Some(DensityMetric::Dense(aux_metric(&model.spec.aux, &geometry))),
                (LossKind::Density, _) => return Err(Error::Config("density loss requires the density head".into())),
                _ => None,
            };
            if loss.kind == LossKind::GeometryPair && kind != HeadKind::Energy {
                return Err(Error::Config("geometry-pair loss requires the energy head".into()));
            }
            Ok(Sample {
                line,
                molecule_id: e.record.molecule_id.clone().unwrap_or_else(|| format!("line{line}")),
                geometry,
                prep,
                target,
                forces,
                stencil,
                metric,
            })
        })
        .collect()
}

/// Prediction for arbitrary scalar type, optionally recording batch statistics.
pub fn predict_with<T: Real>(model: &Model, w: &[T], prep: &Prepared, acc: Option<&mut StatsAccumulator>) -> Result<Prediction<T>> {
    let h = forward(model, w, prep, acc)?;
    pool(model, w, prep, &h)
}

fn scalar<T: Real>(p: Prediction<T>) -> Result<T> {
    match p {
        Prediction::Scalar(x) => Ok(x),
        _ => Err(Error::Config("expected a scalar prediction".into())),
    }
}

/// Five-point-stencil derivative: `-(dE/dx)` from energies at `+2h, +h, -h, -2h`.
pub fn stencil_force<T: Real>(e: [T; 4], h: f64) -> T {
    (e[0] * -1.0 + e[1] * 8.0 - e[2] * 8.0 + e[3]) * (-1.0 / (12.0 * h))
}

/// What a gradient is taken of.
#[derive(Clone, Debug, PartialEq)]
pub enum Objective {
    Loss(LossConfig),
    /// Sum of all predicted values; smooth everywhere, used for checks.
    PredictionSum,
}

/// Objective value over a batch. `partners` is only used by the
/// geometry-pair loss.
pub fn objective<T: Real>(
    model: &Model,
    w: &[T],
    batch: &[&Sample],
    partners: &[usize],
    obj: &Objective,
    mut acc: Option<&mut StatsAccumulator>,
) -> Result<T> {
    let mut preds = Vec::with_capacity(batch.len());
    for s in batch {
        preds.push(predict_with(model, w, &s.prep, acc.as_deref_mut())?);
    }
    let cfg = match obj {
        Objective::PredictionSum => {
            let all: Vec<T> = preds.iter().flat_map(Prediction::values).collect();
            return Ok(T::sum(&all));
        }
        Objective::Loss(c) => c,
    };
    match cfg.kind {
        LossKind::Plain => {
            let (mut p, mut t) = (Vec::new(), Vec::new());
            for (pr, s) in preds.iter().zip(batch) {
                let v = pr.values();
                if v.len() != s.target.len() {
                    return Err(Error::Dataset {
                        line: s.line,
                        msg: format!("label has {} values, head predicts {}", s.target.len(), v.len()),
                    });
                }
                p.extend(v);
                t.extend_from_slice(&s.target);
            }
            Ok(smooth_l1(&p, &t))
        }
        LossKind::GeometryPair => {
            let p: Vec<T> = preds.into_iter().map(scalar).collect::<Result<_>>()?;
            let t: Vec<f64> = batch.iter().map(|s| s.target[0]).collect();
            Ok(geometry_pair_loss(&p, &t, partners, cfg.c_g))
        }
        LossKind::EnergyForce => {
            let p: Vec<T> = preds.into_iter().map(scalar).collect::<Result<_>>()?;
            let t: Vec<f64> = batch.iter().map(|s| s.target[0]).collect();
            let (mut fp, mut ft) = (Vec::new(), Vec::new());
            for s in batch {
                let labels = s.forces.as_ref().ok_or_else(|| missing(s.line, "forces_hartree_per_bohr"))?;
                for (c, points) in s.stencil.iter().enumerate() {
                    let mut e = [T::zero(); 4];
                    for (k, prep) in points.iter().enumerate() {
                        e[k] = scalar(predict_with(model, w, prep, None)?)?;
                    }
                    fp.push(stencil_force(e, FORCE_STEP));
                    ft.push(labels[c]);
                }
            }
            Ok(smooth_l1(&p, &t) * cfg.c_e + smooth_l1(&fp, &ft) * cfg.c_f)
        }
        LossKind::Density => {
            let mut terms = Vec::with_capacity(batch.len());
            for (pr, s) in preds.iter().zip(batch) {
                let metric = s.metric.as_ref().ok_or_else(|| Error::Config("sample has no density metric".into()))?;
                terms.push(density_loss(&pr.values(), &s.target, metric)?);
            }
            Ok(T::sum(&terms) / batch.len() as f64)
        }
    }
}

/// Objective value and its exact gradient with respect to every parameter.
pub fn value_and_gradient(
    model: &Model,
    batch: &[&Sample],
    partners: &[usize],
    obj: &Objective,
    acc: Option<&mut StatsAccumulator>,
) -> Result<(f64, Vec<f64>)> {
    let tape = Tape::new();
    let w: Vec<Var> = model.params.values().iter().map(|&v| tape.var(v)).collect();
    let out = objective(model, &w, batch, partners, obj, acc)?;
    let grad = tape.gradient(out);
    let g: Vec<f64> = w.iter().map(|&v| grad.wrt(v)).collect();
    if let Some(i) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFiniteGradient(model.params.name_of(i).to_string()));
    }
    if !out.val().is_finite() {
        return Err(Error::NonFiniteGradient("objective value".into()));
    }
    Ok((out.val(), g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckResult {
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
}

/// Relative mismatch `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compare every analytic gradient component with central differences.
///
/// Finite-difference truncation and rounding errors are absolute, set by the
/// overall gradient scale rather than by each component, so the relative
/// error's denominator is floored at `floor * max(1, max |grad|)`.
pub fn gradcheck(model: &Model, batch: &[&Sample], obj: &Objective, step: f64, floor: f64) -> Result<GradcheckResult> {
    let partners: Vec<usize> = (0..batch.len()).collect();
    let (_, grad) = value_and_gradient(model, batch, &partners, obj, None)?;
    let floor = floor * grad.iter().fold(1.0f64, |m, g| m.max(g.abs()));
    let base = model.params.values();
    let errors: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let mut w = base.to_vec();
            w[i] = base[i] + step;
            let plus: f64 = objective(model, &w, batch, &partners, obj, None)?;
            w[i] = base[i] - step;
            let minus: f64 = objective(model, &w, batch, &partners, obj, None)?;
            Ok(relative_error(grad[i], (plus - minus) / (2.0 * step), floor))
        })
        .collect::<Result<_>>()?;
    let (worst_index, max_rel_error) = errors
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, e)| if e > acc.1 { (i, e) } else { acc });
    Ok(GradcheckResult {
        checked: errors.len(),
        max_rel_error,
        worst_parameter: model.params.name_of(worst_index).to_string(),
        worst_index,
    })
}

/// `-dE/dx` per atom by the five-point stencil of any energy function.
pub fn stencil_forces<F>(g: &Geometry, step: f64, energy: F) -> Result<Vec<[f64; 3]>>
where
    F: Fn(&Geometry) -> Result<f64> + Sync,
{
    let comps: Vec<f64> = (0..3 * g.natoms())
        .into_par_iter()
        .map(|c| -> Result<f64> {
            let e = [2.0, 1.0, -1.0, -2.0].map(|k| energy(&displaced(g, c, k * step)));
            let [a, b, c2, d] = e;
            Ok(stencil_force([a?, b?, c2?, d?], step))
        })
        .collect::<Result<_>>()?;
    Ok(comps.chunks(3).map(|c| [c[0], c[1], c[2]]).collect())
}

/// Predicted energy of a geometry, including the baseline under delta learning.
pub fn predict_energy(model: &Model, g: &Geometry) -> Result<f64> {
    if model.spec.head.kind != HeadKind::Energy {
        return Err(Error::Config("forces need the energy head".into()));
    }
    let (prep, _) = Prepared::from_geometry(model, g)?;
    scalar(model.predict(&prep)?)
}

/// Model forces by finite differences with the default 0.01 Bohr step.
pub fn fd_forces(model: &Model, g: &Geometry) -> Result<Vec<[f64; 3]>> {
    stencil_forces(g, FORCE_STEP, |x| predict_energy(model, x))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: Schedule,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub seed: u64,
    /// Fraction of records held out for validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 500,
            batch_size: 8,
            schedule: Schedule::WarmupCosine { warmup: 50, total: 500 },
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            seed: 0,
            validation_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config("validation fraction must lie in [0, 1)".into()));
        }
        self.schedule.validate()?;
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepLog {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: Option<f64>,
}

pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: Adam,
    pub steps: Vec<StepLog>,
    rng: ChaCha8Rng,
}

/// Mean absolute error of predictions over all target values.
pub fn mae(model: &Model, samples: &[Sample]) -> Result<f64> {
    let errs: Vec<(f64, usize)> = samples
        .par_iter()
        .map(|s| -> Result<(f64, usize)> {
            let p = model.predict(&s.prep)?.values();
            Ok((p.iter().zip(&s.target).map(|(a, b)| (a - b).abs()).sum(), p.len()))
        })
        .collect::<Result<_>>()?;
    let (sum, n) = errs.iter().fold((0.0, 0), |a, e| (a.0 + e.0, a.1 + e.1));
    Ok(sum / n.max(1) as f64)
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let n = model.params.len();
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            model,
            config,
            adam: Adam::new(n),
            steps: Vec::new(),
            rng,
        })
    }

    /// Calibrate batch statistics and fit per-element biases to the
    /// residuals of the untrained model.
    pub fn initialize(&mut self, train: &[Sample]) -> Result<()> {
        let preps: Vec<Prepared> = train.iter().map(|s| s.prep.clone()).collect();
        self.model.calibrate(&preps)?;
        let Some(bias) = element_bias_param(&self.model) else {
            return Ok(());
        };
        let residual: Vec<f64> = train
            .iter()
            .map(|s| Ok(s.target[0] - scalar(self.model.predict(&s.prep)?)?))
            .collect::<Result<_>>()?;
        let ne = self.model.elements.len();
        let fit: Vec<f64> = match self.model.spec.head.kind {
            HeadKind::Energy => {
                let mut x = DMatrix::zeros(train.len(), ne);
                for (i, s) in train.iter().enumerate() {
                    for a in &s.prep.atoms {
                        x[(i, a.element)] += 1.0;
                    }
                }
                let svd = x.svd(true, true);
                let b = svd
                    .solve(&DVector::from_vec(residual), 1e-10)
                    .map_err(|e| Error::Config(format!("bias regression failed: {e}")))?;
                b.iter().copied().collect()
            }
            _ => vec![residual.iter().sum::<f64>() / residual.len().max(1) as f64; ne],
        };
        let w = self.model.params.values_mut();
        for (k, v) in fit.iter().enumerate() {
            w[bias.offset + k] += v;
        }
        Ok(())
    }

    fn lr_at(&self, epoch: usize) -> f64 {
        self.config.schedule.rate(self.config.optimizer.lr, epoch as f64)
    }

    /// One optimizer update on a batch; returns the loss before the update.
    pub fn train_step(&mut self, batch: &[&Sample], lr: f64) -> Result<f64> {
        let ids: Vec<&str> = batch.iter().map(|s| s.molecule_id.as_str()).collect();
        let partners = sample_partners(&ids, &mut self.rng);
        let mut acc = StatsAccumulator::new(&self.model);
        let obj = Objective::Loss(self.config.loss.clone());
        let (loss, grad) = value_and_gradient(&self.model, batch, &partners, &obj, Some(&mut acc))?;
        self.adam.step(self.model.params.values_mut(), &grad, &self.config.optimizer, lr);
        self.model.update_stats(&acc);
        self.steps.push(StepLog {
            step: self.adam.t,
            lr,
            loss,
        });
        Ok(loss)
    }

    /// Shuffle `n` sample indices and split them into `ceil(n / batch_size)`
    /// batches whose sizes differ by at most one. Even batches keep the
    /// running normalization statistics from swinging on a small remainder.
    pub fn epoch_batches(&mut self, n: usize) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let count = n.div_ceil(self.config.batch_size).max(1);
        let (base, extra) = (n / count, n % count);
        let mut out = Vec::with_capacity(count);
        let mut start = 0;
        for b in 0..count {
            let len = base + usize::from(b < extra);
            out.push(order[start..start + len].to_vec());
            start += len;
        }
        out
    }

    /// One pass over shuffled training data.
    pub fn run_epoch(&mut self, epoch: usize, train: &[Sample], val: &[Sample]) -> Result<EpochLog> {
        let lr = self.lr_at(epoch);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in self.epoch_batches(train.len()) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            total += self.train_step(&batch, lr)?;
            batches += 1;
        }
        let val_mae = if val.is_empty() { None } else { Some(mae(&self.model, val)?) };
        Ok(EpochLog {
            epoch,
            lr,
            train_loss: total / batches.max(1) as f64,
            val_mae,
        })
    }

    /// Learning rate the schedule assigns to `epoch`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        self.lr_at(epoch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(&[1.0], &[1.0]), 0.0);
        assert_eq!(smooth_l1(&[0.5], &[0.0]), 0.125);
        assert_eq!(smooth_l1(&[-2.0], &[0.0]), 1.5);
    }

    #[test]
    fn adam_first_step() {
        let mut p = [1.0];
        let mut a = Adam::new(1);
        let cfg = OptimizerConfig::default();
        a.step(&mut p, &[1.0], &cfg, 0.1);
        assert!((p[0] - (1.0 - 0.1 / (1.0 + 1e-4))).abs() < 1e-15);
        let mut q = [3.0];
        Adam::new(1).step(&mut q, &[0.0], &cfg, 0.1);
        assert_eq!(q[0], 3.0);
    }

    #[test]
    fn schedules() {
        let s = Schedule::WarmupCosine { warmup: 10, total: 100 };
        assert!((s.rate(1.0, 0.0) - 0.1).abs() < 1e-15);
        assert_eq!(s.rate(1.0, 10.0), 1.0);
        assert!(s.rate(1.0, 100.0).abs() < 1e-12);
        let d = Schedule::StepDecay { total: 100 };
        assert_eq!(d.rate(1.0, 19.0), 1.0);
        assert_eq!(d.rate(1.0, 20.0), 0.5);
        assert_eq!(d.rate(1.0, 99.0), 0.0625);
        assert!(Schedule::WarmupCosine { warmup: 5, total: 4 }.validate().is_err());
    }

    #[test]
    fn batches_are_balanced() {
        let cfg = TrainConfig { batch_size: 8, ..Default::default() };
        let set = crate::basis::BasisSet::toy();
        let fcfg = crate::featurizer::FeaturizerConfig::default();
        let spec = crate::net::ModelSpec::new(crate::net::ModelConfig::small(fcfg.nchannels()), crate::pooling::HeadConfig::energy(), fcfg).unwrap();
        let mut t = Trainer::new(Model::new(spec, set, 0).unwrap(), cfg).unwrap();
        let sizes: Vec<usize> = t.epoch_batches(10).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![5, 5]);
        let b = t.epoch_batches(17);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![6, 6, 5]);
        let mut all: Vec<usize> = b.concat();
        all.sort();
        assert_eq!(all, (0..17).collect::<Vec<_>>());
    }

    #[test]
    fn single_geometry_pairs_with_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = sample_partners(&["a", "b", "b"], &mut rng);
        assert_eq!(p[0], 0);
        assert!(p[1] >= 1 && p[2] >= 1);
        let l = geometry_pair_loss(&[1.5, 2.5, 3.5], &[1.0, 2.0, 3.0], &p, 10.0);
        assert!((l - 0.125).abs() < 1e-15);
    }
}
