//! Forward pass, generic over plain floats and taped variables.

use std::f64::consts::PI;

use super::model::{EvStats, Mlp, Model};
use super::params::P;
use super::rep::{EquivariantRep, Group};
use crate::autodiff::Real;
use crate::basis::{NBodyTensor, AO_L_MAX};
use crate::error::{Error, Result};
use crate::featurizer::{featurize, Geometry, MeanFieldState};
use crate::o3::rsh::spherical_harmonics;
use crate::o3::Parity;

/// Floor applied to shell-pair block norms before taking the logarithm.
pub const LOG_NORM_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ShellRef {
    pub l: usize,
    /// Index among this atom's shells of the same degree.
    pub n: usize,
    /// First AO of the shell within the atom.
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AtomInput {
    pub z: u32,
    /// Position in the model's element table.
    pub element: usize,
    pub n_ao: usize,
    pub shells: Vec<ShellRef>,
    /// Diagonal-block contractions with the aux overlaps, layout `[k][c]`.
    pub raw: Vec<f64>,
}

/// Constant data for messages flowing from atom `b` into atom `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairInput {
    pub a: usize,
    pub b: usize,
    /// `T_BA` per channel, stored transposed: `[c][nu in A][mu in B]`.
    pub blocks: Vec<f64>,
    /// `Y_l(x_B - x_A)` for `l = 0..=2`.
    pub ylm: Vec<Vec<f64>>,
    /// Logarithms of floored Frobenius norms, `[c][shell pair]`.
    pub log_norms: Vec<f64>,
    pub n_shell_pairs: usize,
}

/// Everything about one molecule that does not depend on parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub atomic_numbers: Vec<u32>,
    pub coords: Vec<[f64; 3]>,
    pub atoms: Vec<AtomInput>,
    pub pairs: Vec<PairInput>,
    /// For each atom, indices into `pairs` of messages it receives.
    pub incoming: Vec<Vec<usize>>,
    pub nchannels: usize,
    /// Baseline tight-binding energy, used by delta learning.
    pub e_tb: f64,
}

impl Prepared {
    pub fn natoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn new(model: &Model, tensor: &NBodyTensor, geometry: &Geometry, e_tb: f64) -> Result<Self> {
        let cfg = model.config();
        if tensor.nchannels() != cfg.input_channels {
            return Err(Error::Config(format!(
                "tensor has {} channels, model expects {}",
                tensor.nchannels(),
                cfg.input_channels
            )));
        }
        let basis = tensor.basis();
        if basis.natoms() != geometry.natoms() {
            return Err(Error::Config("tensor and geometry disagree on atom count".into()));
        }
        let nc = tensor.nchannels();
        let mut atoms = Vec::with_capacity(basis.natoms());
        for (a, sh) in basis.atoms().iter().enumerate() {
            let z = geometry.atomic_numbers[a];
            if z != sh.z {
                return Err(Error::Config(format!("atom {a}: tensor element {} vs geometry {z}", sh.z)));
            }
            let element = model.element_index(z)?;
            let aux = model.aux.get(z)?;
            let mut counts = [0usize; AO_L_MAX + 1];
            let shells = sh
                .shells
                .iter()
                .map(|s| {
                    let l = s.spec.l;
                    if l > AO_L_MAX {
                        return Err(Error::UnsupportedDegree { l, max: AO_L_MAX });
                    }
                    let n = counts[l];
                    counts[l] += 1;
                    if n >= model.max_shells[l] {
                        return Err(Error::UnknownElement(z));
                    }
                    Ok(ShellRef {
                        l,
                        n,
                        offset: s.offset - sh.offset,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut raw = vec![0.0; aux.n_aux * nc];
            for c in 0..nc {
                let block = tensor.block_at(c, a, a)?;
                for (k, v) in aux.contract(&block).into_iter().enumerate() {
                    raw[k * nc + c] = v;
                }
            }
            atoms.push(AtomInput {
                z,
                element,
                n_ao: sh.len,
                shells,
                raw,
            });
        }

        let mut pairs = Vec::new();
        let mut incoming = vec![Vec::new(); atoms.len()];
        for a in 0..atoms.len() {
            for &b in tensor.neighbours(a) {
                let (ra, rb) = (basis.atom(a)?, basis.atom(b)?);
                let (na, nb) = (ra.len, rb.len);
                let mut blocks = vec![0.0; nc * na * nb];
                for c in 0..nc {
                    let m = tensor.matrix(c);
                    for nu in 0..na {
                        for mu in 0..nb {
                            blocks[(c * na + nu) * nb + mu] = m[(rb.offset + mu, ra.offset + nu)];
                        }
                    }
                }
                let dir = geometry.displacement(a, b);
                let ylm = (0..=AO_L_MAX)
                    .map(|l| spherical_harmonics(l, dir))
                    .collect::<Result<Vec<_>>>()?;
                let n_sp = ra.shells.len() * rb.shells.len();
                let mut log_norms = Vec::with_capacity(nc * n_sp);
                for c in 0..nc {
                    let m = tensor.matrix(c);
                    for sb in &rb.shells {
                        for sa in &ra.shells {
                            let mut ss = 0.0;
                            for i in 0..sb.spec.dim() {
                                for j in 0..sa.spec.dim() {
                                    ss += m[(sb.offset + i, sa.offset + j)].powi(2);
                                }
                            }
                            log_norms.push(ss.sqrt().max(LOG_NORM_FLOOR).ln());
                        }
                    }
                }
                incoming[a].push(pairs.len());
                pairs.push(PairInput {
                    a,
                    b,
                    blocks,
                    ylm,
                    log_norms,
                    n_shell_pairs: n_sp,
                });
            }
        }
        Ok(Prepared {
            atomic_numbers: geometry.atomic_numbers.clone(),
            coords: geometry.coords.clone(),
            atoms,
            pairs,
            incoming,
            nchannels: nc,
            e_tb,
        })
    }

    /// Featurize a geometry with the model's basis and featurizer settings.
    pub fn from_geometry(model: &Model, geometry: &Geometry) -> Result<(Self, MeanFieldState)> {
        let (tensor, state) = featurize(geometry, &model.basis, &model.spec.featurizer)?;
        let prep = Self::new(model, &tensor, geometry, state.e_tb)?;
        Ok((prep, state))
    }
}

/// Sums of neuron norms at each batch-statistics site.
#[derive(Clone, Debug)]
pub struct StatsAccumulator {
    sum: Vec<Vec<f64>>,
    sumsq: Vec<Vec<f64>>,
    count: Vec<usize>,
}

impl StatsAccumulator {
    pub fn new(model: &Model) -> Self {
        let (sites, n) = (model.stats.len(), model.layout.neurons());
        StatsAccumulator {
            sum: vec![vec![0.0; n]; sites],
            sumsq: vec![vec![0.0; n]; sites],
            count: vec![0; sites],
        }
    }

    fn record(&mut self, site: usize, norms: &[f64]) {
        for (k, &v) in norms.iter().enumerate() {
            self.sum[site][k] += v;
            self.sumsq[site][k] += v * v;
        }
        self.count[site] += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.count.iter().all(|&c| c == 0)
    }

    /// Per-site mean and `sqrt(var + floor)`.
    pub fn estimates(&self, floor: f64) -> Vec<EvStats> {
        (0..self.sum.len())
            .map(|s| {
                let n = self.count[s].max(1) as f64;
                let mean: Vec<f64> = self.sum[s].iter().map(|x| x / n).collect();
                let std = self.sumsq[s]
                    .iter()
                    .zip(&mean)
                    .map(|(q, m)| ((q / n - m * m).max(0.0) + floor).sqrt())
                    .collect();
                EvStats { mean, std }
            })
            .collect()
    }
}

/// `W x + b` with `W` a row-major parameter block.
pub(crate) fn affine<T: Real>(w: &[T], mat: P, bias: Option<P>, x: &[T]) -> Vec<T> {
    debug_assert_eq!(mat.cols, x.len());
    (0..mat.rows)
        .map(|r| {
            let y = T::dot(mat.row(w, r), x);
            match bias {
                Some(b) => y + b.slice(w)[r],
                None => y,
            }
        })
        .collect()
}

pub(crate) fn mlp<T: Real>(w: &[T], m: &Mlp, x: &[T]) -> Vec<T> {
    let hidden: Vec<T> = affine(w, m.w1, Some(m.b1), x).into_iter().map(T::swish).collect();
    affine(w, m.w2, Some(m.b2), &hidden)
}

/// `sqrt(|x|^2 + eps^2) - eps`.
pub fn regularized_norm<T: Real>(x: &[T], eps: f64) -> T {
    (T::dot(x, x) + eps * eps).sqrt() - eps
}

/// Column `m` of a group block: channel values at fixed component.
pub fn column_of<T: Real>(x: &[T], g: &Group, m: usize) -> Vec<T> {
    (0..g.n).map(|n| x[g.at(n, m)]).collect()
}

/// Per-neuron regularized norms of one atom's features.
pub fn neuron_norms<T: Real>(model: &Model, x: &[T]) -> Vec<T> {
    let eps = model.config().epsilon;
    let mut out = Vec::with_capacity(model.layout.neurons());
    for g in model.layout.groups() {
        for n in 0..g.n {
            let s = g.at(n, 0);
            out.push(regularized_norm(&x[s..s + g.dim()], eps));
        }
    }
    out
}

/// Normalization statistics source for one EvNorm call.
pub enum NormMode<'a> {
    /// Fixed per-neuron mean and standard deviation.
    Batch(&'a EvStats),
    /// Mean and variance over all atoms and channels of each `(l, p)` group.
    Layer,
}

/// Split features into normalized invariants (`[atom][neuron]`) and
/// unit-capped directions.
pub fn evnorm<T: Real>(model: &Model, x: &EquivariantRep<T>, mode: NormMode, beta: &[T]) -> Result<(Vec<T>, EquivariantRep<T>)> {
    let cfg = model.config();
    let eps = cfg.epsilon;
    let nn = model.layout.neurons();
    let norms: Vec<Vec<T>> = (0..x.natoms).map(|a| neuron_norms(model, x.atom(a))).collect();
    let mut bar = Vec::with_capacity(x.natoms * nn);
    match mode {
        NormMode::Batch(st) => {
            if st.mean.len() != nn {
                return Err(Error::Statistics("statistics length does not match channel count".into()));
            }
            st.validate()?;
            for nrm in &norms {
                for k in 0..nn {
                    bar.push((nrm[k] - st.mean[k]) * (1.0 / st.std[k]));
                }
            }
        }
        NormMode::Layer => {
            bar.resize(x.natoms * nn, T::zero());
            for g in model.layout.groups() {
                let vals: Vec<T> = norms
                    .iter()
                    .flat_map(|nrm| nrm[g.neuron..g.neuron + g.n].iter().copied())
                    .collect();
                let count = vals.len() as f64;
                let mean = T::sum(&vals) / count;
                let centered: Vec<T> = vals.iter().map(|&v| v - mean).collect();
                let var = T::dot(&centered, &centered) / count;
                let inv = (var + cfg.variance_floor).sqrt().recip();
                for a in 0..x.natoms {
                    for n in 0..g.n {
                        bar[a * nn + g.neuron + n] = centered[a * g.n + n] * inv;
                    }
                }
            }
        }
    }
    let mut hat = EquivariantRep::filled(x.natoms, x.size, T::zero());
    for a in 0..x.natoms {
        let src = x.atom(a);
        let dst = hat.atom_mut(a);
        for g in model.layout.groups() {
            for n in 0..g.n {
                let k = g.neuron + n;
                let scale = (norms[a][k] + beta[k].recip() + eps).recip();
                for m in 0..g.dim() {
                    dst[g.at(n, m)] = src[g.at(n, m)] * scale;
                }
            }
        }
    }
    Ok((bar, hat))
}

/// Row `i` of the input mixer with the fixed channel scale folded in.
fn scaled_mixer<T: Real>(model: &Model, w: &[T], i: usize) -> Vec<T> {
    model.index.w_in.row(w, i).iter().zip(&model.input_scale).map(|(&x, &s)| x * s).collect()
}

/// Initial features from the diagonal blocks.
pub fn diagonal_reduce<T: Real>(model: &Model, w: &[T], prep: &Prepared) -> EquivariantRep<T> {
    let cfg = model.config();
    let idx = &model.index;
    let aux = &model.spec.aux;
    let (ni, nc) = (cfg.conv_channels, cfg.input_channels);
    let mut h = EquivariantRep::filled(prep.natoms(), model.layout.size(), T::zero());
    for (a, atom) in prep.atoms.iter().enumerate() {
        let n_aux = atom.raw.len() / nc;
        // mixed[i][k]
        let mixed: Vec<T> = (0..ni)
            .flat_map(|i| {
                let row = scaled_mixer(model, w, i);
                (0..n_aux)
                    .map(|k| T::lin(&row, &atom.raw[k * nc..(k + 1) * nc]))
                    .collect::<Vec<_>>()
            })
            .collect();
        let out = h.atom_mut(a);
        for (l, proj) in idx.project.iter().enumerate() {
            let g = model.layout.group(l, Parity::Even).expect("even groups up to l=2 exist");
            let (count, off, dim) = (aux.count(l), aux.offset(l), 2 * l + 1);
            for m in 0..dim {
                let x: Vec<T> = (0..ni)
                    .flat_map(|i| (0..count).map(move |na| (i, na)))
                    .map(|(i, na)| mixed[i * n_aux + off + na * dim + m])
                    .collect();
                for n in 0..g.n {
                    out[g.at(n, m)] = T::dot(proj.row(w, n), &x);
                }
            }
        }
    }
    h
}

/// AO-indexed vectors `rho_i(h_A)` for every convolution channel, layout `[i][mu]`.
pub fn matching<T: Real>(model: &Model, w: &[T], step: usize, atom: &AtomInput, h: &[T]) -> Vec<T> {
    let ni = model.config().conv_channels;
    let conv = model.index.steps[step].conv.as_ref().expect("message-passing step");
    let mut out = vec![T::zero(); ni * atom.n_ao];
    for s in &atom.shells {
        let g = model.layout.group(s.l, Parity::Even).expect("even groups up to l=2 exist");
        let wm = conv.matching[s.l];
        let mshell = model.max_shells[s.l];
        for m in 0..g.dim() {
            let col = column_of(h, g, m);
            for i in 0..ni {
                out[i * atom.n_ao + s.offset + m] = T::dot(wm.row(w, i * mshell + s.n), &col);
            }
        }
    }
    out
}

/// Messages `m_BA` for every convolution channel, layout `[i][nu in A]`.
pub fn block_convolution<T: Real>(model: &Model, w: &[T], prep: &Prepared, pair: &PairInput, rho_b: &[T]) -> Vec<T> {
    let cfg = model.config();
    let (ni, nc) = (cfg.conv_channels, cfg.input_channels);
    let na = prep.atoms[pair.a].n_ao;
    let nb = prep.atoms[pair.b].n_ao;
    let mut out = Vec::with_capacity(ni * na);
    for i in 0..ni {
        let rho = &rho_b[i * nb..(i + 1) * nb];
        let mix = scaled_mixer(model, w, i);
        for nu in 0..na {
            let per_channel: Vec<T> = (0..nc)
                .map(|c| T::lin(rho, &pair.blocks[(c * na + nu) * nb..(c * na + nu + 1) * nb]))
                .collect();
            out.push(T::dot(&mix, &per_channel));
        }
    }
    out
}

/// `exp(-gamma x^2) cos(pi gamma x)`.
pub fn morlet<T: Real>(gamma: T, x: f64) -> T {
    (gamma * (-x * x)).exp() * (gamma * (PI * x)).cos()
}

/// Invariant attention weights (one per head) for a pair.
pub fn attention_weights<T: Real>(model: &Model, w: &[T], step: usize, pair: &PairInput, h_a: &[T], h_b: &[T]) -> Vec<T> {
    let cfg = model.config();
    let conv = model.index.steps[step].conv.as_ref().expect("message-passing step");
    let mut z = Vec::with_capacity(model.layout.neurons());
    for g in model.layout.groups() {
        for n in 0..g.n {
            let s = g.at(n, 0);
            z.push(T::dot(&h_a[s..s + g.dim()], &h_b[s..s + g.dim()]));
        }
    }
    let s1 = affine(w, conv.w_alpha, None, &z);
    let gamma = conv.gamma.slice(w);
    let mut feat = Vec::with_capacity(cfg.n_basis * cfg.input_channels);
    for c in 0..cfg.input_channels {
        let xs = &pair.log_norms[c * pair.n_shell_pairs..(c + 1) * pair.n_shell_pairs];
        for &g in gamma {
            let terms: Vec<T> = xs.iter().map(|&x| morlet(g, x)).collect();
            feat.push(T::sum(&terms));
        }
    }
    let kappa = affine(w, conv.w_kappa, None, &feat);
    let scale = 1.0 / (model.layout.neurons() as f64).sqrt();
    let gated: Vec<T> = s1.iter().zip(&kappa).map(|(&a, &b)| a * b * scale).collect();
    mlp(w, &conv.attn, &gated)
}

/// Message with the geometric term added, layout `[i][nu in A]`.
pub fn geometric_message<T: Real>(model: &Model, w: &[T], step: usize, atom_a: &AtomInput, pair: &PairInput, msg: &[T]) -> Vec<T> {
    let cfg = model.config();
    let conv = model.index.steps[step].conv.as_ref().expect("message-passing step");
    let na = atom_a.n_ao;
    let mut out = msg.to_vec();
    for i in 0..cfg.conv_channels {
        let nrm = regularized_norm(&msg[i * na..(i + 1) * na], cfg.epsilon);
        for s in &atom_a.shells {
            let scaled = conv.geometric[s.l].at(w, i, s.n) * nrm;
            for m in 0..2 * s.l + 1 {
                let k = i * na + s.offset + m;
                out[k] = out[k] + scaled * pair.ylm[s.l][m];
            }
        }
    }
    out
}

/// Attention-weighted sum of incoming messages, layout `[nu][i][j]`.
pub fn aggregate<T: Real>(n_ao: usize, ni: usize, nj: usize, messages: &[Vec<T>], alphas: &[Vec<T>]) -> Vec<T> {
    let mut out = vec![T::zero(); n_ao * ni * nj];
    if messages.is_empty() {
        return out;
    }
    for nu in 0..n_ao {
        for i in 0..ni {
            let e: Vec<T> = messages.iter().map(|m| m[i * n_ao + nu]).collect();
            for j in 0..nj {
                let al: Vec<T> = alphas.iter().map(|a| a[j]).collect();
                out[(nu * ni + i) * nj + j] = T::dot(&e, &al);
            }
        }
    }
    out
}

/// Scatter AO-indexed aggregates back to even-parity channels of degree <= 2.
pub fn reverse_matching<T: Real>(model: &Model, w: &[T], step: usize, atom: &AtomInput, agg: &[T], out: &mut [T]) {
    let cfg = model.config();
    let (ni, nj) = (cfg.conv_channels, cfg.heads);
    let conv = model.index.steps[step].conv.as_ref().expect("message-passing step");
    for l in 0..=AO_L_MAX {
        let shells: Vec<&ShellRef> = atom.shells.iter().filter(|s| s.l == l).collect();
        if shells.is_empty() {
            continue;
        }
        let g = model.layout.group(l, Parity::Even).expect("even groups up to l=2 exist");
        let wr = conv.reverse[l];
        for m in 0..2 * l + 1 {
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for s in &shells {
                for i in 0..ni {
                    for j in 0..nj {
                        cols.push((s.n * ni + i) * nj + j);
                        vals.push(agg[((s.offset + m) * ni + i) * nj + j]);
                    }
                }
            }
            for n in 0..g.n {
                let row = wr.row(w, n);
                let ws: Vec<T> = cols.iter().map(|&c| row[c]).collect();
                out[g.at(n, m)] = T::dot(&ws, &vals);
            }
        }
    }
}

/// One message-passing update producing `g` for the point-wise step.
pub fn message_step<T: Real>(model: &Model, w: &[T], step: usize, prep: &Prepared, h: &EquivariantRep<T>) -> EquivariantRep<T> {
    let cfg = model.config();
    let rho: Vec<Vec<T>> = prep
        .atoms
        .iter()
        .enumerate()
        .map(|(a, atom)| matching(model, w, step, atom, h.atom(a)))
        .collect();
    let mut g = EquivariantRep::filled(prep.natoms(), model.layout.size(), T::zero());
    for (a, atom) in prep.atoms.iter().enumerate() {
        let incoming = &prep.incoming[a];
        if incoming.is_empty() {
            continue;
        }
        let mut messages = Vec::with_capacity(incoming.len());
        let mut alphas = Vec::with_capacity(incoming.len());
        for &p in incoming {
            let pair = &prep.pairs[p];
            let msg = block_convolution(model, w, prep, pair, &rho[pair.b]);
            messages.push(geometric_message(model, w, step, atom, pair, &msg));
            alphas.push(attention_weights(model, w, step, pair, h.atom(a), h.atom(pair.b)));
        }
        let agg = aggregate(atom.n_ao, cfg.conv_channels, cfg.heads, &messages, &alphas);
        reverse_matching(model, w, step, atom, &agg, g.atom_mut(a));
    }
    g
}

/// Point-wise interaction `phi(h, g)`.
pub fn pointwise_interaction<T: Real>(
    model: &Model,
    w: &[T],
    step: usize,
    h: &EquivariantRep<T>,
    g: &EquivariantRep<T>,
    mut acc: Option<&mut StatsAccumulator>,
) -> Result<EquivariantRep<T>> {
    let cfg = model.config();
    let phi = &model.index.steps[step].phi;
    let batch = step < cfg.t1;
    let mode = |site: usize| {
        if batch {
            NormMode::Batch(&model.stats[site])
        } else {
            NormMode::Layer
        }
    };
    let nn = model.layout.neurons();
    let groups = model.layout.groups();

    if let Some(acc) = acc.as_deref_mut().filter(|_| batch) {
        for a in 0..h.natoms {
            let v: Vec<f64> = neuron_norms(model, h.atom(a)).iter().map(Real::val).collect();
            acc.record(2 * step, &v);
        }
    }
    let (hbar, hhat) = evnorm(model, h, mode(2 * step), phi.beta_h.slice(w))?;
    let mut q = EquivariantRep::filled(h.natoms, h.size, T::zero());
    for a in 0..h.natoms {
        let gate = mlp(w, &phi.mlp1, &hbar[a * nn..(a + 1) * nn]);
        let hh = hhat.atom(a);
        let mut f = vec![T::zero(); h.size];
        for (gi, grp) in groups.iter().enumerate() {
            for m in 0..grp.dim() {
                let col = column_of(hh, grp, m);
                for n in 0..grp.n {
                    f[grp.at(n, m)] = gate[grp.neuron + n] * T::dot(phi.w_in[gi].row(w, n), &col);
                }
            }
        }
        let ga = g.atom(a);
        let qa = q.atom_mut(a);
        for k in 0..h.size {
            let terms = &model.coupling[k];
            qa[k] = if terms.is_empty() {
                ga[k]
            } else {
                ga[k] + T::bilinear(&f, ga, terms)
            };
        }
    }

    if let Some(acc) = acc.filter(|_| batch) {
        for a in 0..q.natoms {
            let v: Vec<f64> = neuron_norms(model, q.atom(a)).iter().map(Real::val).collect();
            acc.record(2 * step + 1, &v);
        }
    }
    let (qbar, qhat) = evnorm(model, &q, mode(2 * step + 1), phi.beta_q.slice(w))?;
    let mut out = h.clone();
    for a in 0..h.natoms {
        let gate = mlp(w, &phi.mlp2, &qbar[a * nn..(a + 1) * nn]);
        let qa = qhat.atom(a);
        let dst = out.atom_mut(a);
        for (gi, grp) in groups.iter().enumerate() {
            for m in 0..grp.dim() {
                let col = column_of(qa, grp, m);
                for n in 0..grp.n {
                    let k = grp.at(n, m);
                    dst[k] = dst[k] + gate[grp.neuron + n] * T::dot(phi.w_out[gi].row(w, n), &col);
                }
            }
        }
    }
    Ok(out)
}

/// Final per-atom features.
pub fn forward<T: Real>(model: &Model, w: &[T], prep: &Prepared, mut acc: Option<&mut StatsAccumulator>) -> Result<EquivariantRep<T>> {
    if w.len() != model.params.len() {
        return Err(Error::Config(format!(
            "parameter vector has {} entries, model has {}",
            w.len(),
            model.params.len()
        )));
    }
    let cfg = model.config();
    let mut h = diagonal_reduce(model, w, prep);
    for t in 0..cfg.steps() {
        h = if t < cfg.t1 {
            let g = message_step(model, w, t, prep, &h);
            pointwise_interaction(model, w, t, &h, &g, acc.as_deref_mut())?
        } else {
            let g = h.clone();
            pointwise_interaction(model, w, t, &h, &g, acc.as_deref_mut())?
        };
    }
    Ok(h)
}
