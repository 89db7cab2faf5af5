use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{Init, ParamSet, P};
use super::rep::RepLayout;
use crate::basis::{BasisSet, AO_L_MAX};
use crate::error::{Error, Result};
use crate::featurizer::{AuxBasisSpec, AuxTables, FeaturizerConfig};
use crate::o3::cg::{model_table, parity_allowed};
use crate::o3::{Parity, L_MAX};
use super::forward::{forward, Prepared, StatsAccumulator};
use super::rep::EquivariantRep;
use crate::pooling::{build_head, pool, HeadConfig, HeadIndex, Prediction};

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelConfig,
    pub head: HeadConfig,
    pub featurizer: FeaturizerConfig,
    pub aux: AuxBasisSpec,
}

impl ModelSpec {
    pub fn new(model: ModelConfig, head: HeadConfig, featurizer: FeaturizerConfig) -> Result<Self> {
        if model.input_channels != featurizer.nchannels() {
            return Err(Error::Config(format!(
                "model expects {} input matrices, featurizer produces {}",
                model.input_channels,
                featurizer.nchannels()
            )));
        }
        Ok(ModelSpec {
            model,
            head,
            featurizer,
            aux: AuxBasisSpec::default(),
        })
    }
}

/// Running estimates for one batch-statistics normalization site.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl EvStats {
    pub fn identity(neurons: usize) -> Self {
        EvStats {
            mean: vec![0.0; neurons],
            std: vec![1.0; neurons],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Statistics("mean and std lengths differ".into()));
        }
        if let Some(s) = self.std.iter().find(|s| !(**s > 0.0) || !s.is_finite()) {
            return Err(Error::Statistics(format!("standard deviation {s} is not positive")));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Statistics("non-finite mean".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Mlp {
    pub w1: P,
    pub b1: P,
    pub w2: P,
    pub b2: P,
}

#[derive(Clone, Debug)]
pub(crate) struct ConvIndex {
    /// Per AO degree: rows `i * M_l + n`, columns the even-parity channels.
    pub matching: Vec<P>,
    /// Per AO degree: `I x M_l` geometric weights.
    pub geometric: Vec<P>,
    pub w_alpha: P,
    pub w_kappa: P,
    pub gamma: P,
    pub attn: Mlp,
    /// Per AO degree: `N_{l,+} x (M_l I J)`.
    pub reverse: Vec<P>,
}

#[derive(Clone, Debug)]
pub(crate) struct PhiIndex {
    pub beta_h: P,
    pub beta_q: P,
    pub mlp1: Mlp,
    pub mlp2: Mlp,
    /// Per layout group, square channel mixers.
    pub w_in: Vec<P>,
    pub w_out: Vec<P>,
}

#[derive(Clone, Debug)]
pub(crate) struct StepIndex {
    pub conv: Option<ConvIndex>,
    pub phi: PhiIndex,
}

#[derive(Clone, Debug)]
pub(crate) struct NetIndex {
    /// `I x C` input-matrix mixer.
    pub w_in: P,
    /// Per aux degree: `N_{l,+} x (I * n_aux_l)`.
    pub project: Vec<P>,
    pub steps: Vec<StepIndex>,
}

pub struct Model {
    pub spec: ModelSpec,
    pub basis: BasisSet,
    pub aux: AuxTables,
    pub layout: RepLayout,
    pub params: ParamSet,
    /// Batch-statistics sites, two per message-passing step.
    pub stats: Vec<EvStats>,
    /// Fixed per-channel multiplier on the input matrices, set by
    /// [`Model::calibrate`]. Ones until then.
    pub input_scale: Vec<f64>,
    /// Elements covered by element-specific weights, ascending.
    pub elements: Vec<u32>,
    pub max_shells: [usize; AO_L_MAX + 1],
    pub(crate) index: NetIndex,
    pub(crate) head_index: HeadIndex,
    /// For each flat feature index, the `(f index, g index, coefficient)`
    /// terms of the Clebsch-Gordan product landing there.
    pub(crate) coupling: Vec<Vec<(u32, u32, f64)>>,
}

fn mlp(ps: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, n_in: usize, hidden: usize, n_out: usize, zero_last: bool) -> Mlp {
    Mlp {
        w1: ps.add(format!("{name}.w1"), hidden, n_in, Init::Scaled(1.0), rng),
        b1: ps.add(format!("{name}.b1"), 1, hidden, Init::Zeros, rng),
        w2: ps.add(
            format!("{name}.w2"),
            n_out,
            hidden,
            if zero_last { Init::Zeros } else { Init::Scaled(1.0) },
            rng,
        ),
        b2: ps.add(format!("{name}.b2"), 1, n_out, Init::Zeros, rng),
    }
}

impl Model {
    pub fn new(spec: ModelSpec, basis: BasisSet, seed: u64) -> Result<Self> {
        let cfg = &spec.model;
        cfg.validate()?;
        spec.aux.validate()?;
        let aux = AuxTables::new(&basis, spec.aux.clone())?;
        let layout = RepLayout::new(&cfg.channels);
        let max_shells = basis.max_shells();
        let elements = basis.atomic_numbers();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ps = ParamSet::new();
        let (ni, nc, nj, nb) = (cfg.conv_channels, cfg.input_channels, cfg.heads, cfg.n_basis);
        let even = |l: usize| cfg.channels[0][l];

        let w_in = ps.add("input.mix", ni, nc, Init::Scaled(1.0), &mut rng);
        let project = (0..=spec.aux.lmax().min(L_MAX))
            .map(|l| {
                ps.add(
                    format!("input.project.l{l}"),
                    even(l),
                    ni * spec.aux.count(l),
                    Init::Scaled(1.0),
                    &mut rng,
                )
            })
            .collect();

        let n_total = layout.neurons();
        let hidden = cfg.hidden();
        let mut steps = Vec::with_capacity(cfg.steps());
        for t in 0..cfg.steps() {
            let conv = (t < cfg.t1).then(|| {
                let pre = format!("step{t}.conv");
                let matching = (0..=AO_L_MAX)
                    .map(|l| {
                        ps.add(
                            format!("{pre}.match.l{l}"),
                            ni * max_shells[l],
                            even(l),
                            Init::Scaled(1.0),
                            &mut rng,
                        )
                    })
                    .collect();
                let geometric = (0..=AO_L_MAX)
                    .map(|l| ps.add(format!("{pre}.geometric.l{l}"), ni, max_shells[l], Init::Scaled(1.0), &mut rng))
                    .collect();
                let w_alpha = ps.add(format!("{pre}.attn.w_alpha"), nb, n_total, Init::Scaled(1.0), &mut rng);
                let w_kappa = ps.add(format!("{pre}.attn.w_kappa"), nb, nb * nc, Init::Scaled(1.0), &mut rng);
                let gamma = ps.add(
                    format!("{pre}.attn.gamma"),
                    1,
                    nb,
                    Init::Values((0..nb).map(|k| cfg.gamma0 * cfg.gamma_ratio.powi(k as i32)).collect()),
                    &mut rng,
                );
                let attn = mlp(&mut ps, &mut rng, &format!("{pre}.attn.mlp"), nb, cfg.attn_hidden, nj, false);
                let reverse = (0..=AO_L_MAX)
                    .map(|l| {
                        ps.add(
                            format!("{pre}.reverse.l{l}"),
                            even(l),
                            max_shells[l] * ni * nj,
                            Init::Scaled(1.0),
                            &mut rng,
                        )
                    })
                    .collect();
                ConvIndex {
                    matching,
                    geometric,
                    w_alpha,
                    w_kappa,
                    gamma,
                    attn,
                    reverse,
                }
            });
            let pre = format!("step{t}.phi");
            let beta_h = ps.add(format!("{pre}.beta_h"), 1, n_total, Init::Uniform(0.5, 1.5), &mut rng);
            let beta_q = ps.add(format!("{pre}.beta_q"), 1, n_total, Init::Uniform(0.5, 1.5), &mut rng);
            let mlp1 = mlp(&mut ps, &mut rng, &format!("{pre}.mlp1"), n_total, hidden, n_total, false);
            let mlp2 = mlp(&mut ps, &mut rng, &format!("{pre}.mlp2"), n_total, hidden, n_total, cfg.zero_init_final);
            let mut w_in = Vec::new();
            let mut w_out = Vec::new();
            for g in layout.groups() {
                let tag = format!("l{}{}", g.l, if g.p == Parity::Even { "e" } else { "o" });
                w_in.push(ps.add(format!("{pre}.w_in.{tag}"), g.n, g.n, Init::Scaled(1.0), &mut rng));
                w_out.push(ps.add(format!("{pre}.w_out.{tag}"), g.n, g.n, Init::Scaled(1.0), &mut rng));
            }
            steps.push(StepIndex {
                conv,
                phi: PhiIndex {
                    beta_h,
                    beta_q,
                    mlp1,
                    mlp2,
                    w_in,
                    w_out,
                },
            });
        }
        let index = NetIndex {
            w_in,
            project,
            steps,
        };
        let head_index = build_head(&mut ps, &mut rng, &spec.head, &layout, &elements, &spec.aux)?;
        let coupling = build_coupling(&layout);
        let stats = vec![EvStats::identity(n_total); 2 * cfg.t1];
        let input_scale = vec![1.0; cfg.input_channels];
        Ok(Model {
            spec,
            basis,
            aux,
            layout,
            params: ps,
            stats,
            input_scale,
            elements,
            max_shells,
            index,
            head_index,
            coupling,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.spec.model
    }

    pub fn element_index(&self, z: u32) -> Result<usize> {
        self.elements.binary_search(&z).map_err(|_| Error::UnknownElement(z))
    }

    /// Multiply one Clebsch-Gordan coupling coefficient by `factor`. Used by
    /// the check harness to confirm that it detects a broken table.
    pub fn perturb_coupling(&mut self, factor: f64) {
        // first term of the (1,+) x (1,+) -> (2,+) product for channel 0
        let target = self.layout.group(2, Parity::Even).map(|g| g.at(0, 0));
        let f1 = self.layout.group(1, Parity::Even).map(|g| g.offset);
        if let (Some(t), Some(f1)) = (target, f1) {
            if let Some(term) = self.coupling[t]
                .iter_mut()
                .find(|(a, b, _)| (*a as usize) >= f1 && (*a as usize) < f1 + 3 && (*b as usize) >= f1 && (*b as usize) < f1 + 3)
            {
                term.2 *= factor;
            }
        }
    }

    pub fn validate_stats(&self) -> Result<()> {
        if self.input_scale.len() != self.config().input_channels || self.input_scale.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Statistics("input scale must be one positive value per channel".into()));
        }
        if self.stats.len() != 2 * self.config().t1 {
            return Err(Error::Statistics("wrong number of normalization sites".into()));
        }
        for s in &self.stats {
            if s.mean.len() != self.layout.neurons() {
                return Err(Error::Statistics("statistics length does not match channel count".into()));
            }
            s.validate()?;
        }
        Ok(())
    }
}

impl Model {
    /// Final features with the current parameters.
    pub fn features(&self, prep: &Prepared) -> Result<EquivariantRep<f64>> {
        forward(self, self.params.values(), prep, None)
    }

    /// Prediction with the current parameters.
    pub fn predict(&self, prep: &Prepared) -> Result<Prediction<f64>> {
        let w = self.params.values();
        let h = forward(self, w, prep, None)?;
        pool(self, w, prep, &h)
    }

    /// Data-dependent initialization on a set of molecules.
    ///
    /// Each input channel is scaled to unit root-mean-square over the
    /// on-site contractions, which keeps the network in a well-conditioned
    /// range whatever the energy scale of the input matrices. Then the batch
    /// statistics are set site by site: site `k` depends only on earlier
    /// sites, so pass `k` adopts only the estimate for site `k`.
    pub fn calibrate(&mut self, preps: &[Prepared]) -> Result<()> {
        if preps.is_empty() {
            return Err(Error::Statistics("calibration needs at least one molecule".into()));
        }
        self.input_scale = input_channel_scale(preps, self.config().input_channels);
        for s in 0..self.stats.len() {
            let mut acc = StatsAccumulator::new(self);
            for p in preps {
                forward(self, self.params.values(), p, Some(&mut acc))?;
            }
            let fresh = acc.estimates(self.config().variance_floor).swap_remove(s);
            fresh.validate()?;
            self.stats[s] = fresh;
        }
        Ok(())
    }

    /// Blend batch estimates into the running statistics.
    pub fn update_stats(&mut self, acc: &StatsAccumulator) {
        if acc.is_empty() {
            return;
        }
        let mom = self.config().momentum;
        let fresh = acc.estimates(self.config().variance_floor);
        for (old, new) in self.stats.iter_mut().zip(fresh) {
            for (o, n) in old.mean.iter_mut().zip(&new.mean) {
                *o = mom * *o + (1.0 - mom) * n;
            }
            for (o, n) in old.std.iter_mut().zip(&new.std) {
                *o = mom * *o + (1.0 - mom) * n;
            }
        }
    }
}

/// `1 / rms` of each channel's on-site contractions; 1 for all-zero channels.
pub fn input_channel_scale(preps: &[Prepared], nc: usize) -> Vec<f64> {
    let mut sumsq = vec![0.0; nc];
    let mut count = vec![0usize; nc];
    for p in preps {
        for atom in &p.atoms {
            for (k, v) in atom.raw.iter().enumerate() {
                sumsq[k % nc] += v * v;
                count[k % nc] += 1;
            }
        }
    }
    sumsq
        .iter()
        .zip(&count)
        .map(|(&ss, &n)| {
            let rms = (ss / n.max(1) as f64).sqrt();
            if rms > 0.0 && rms.is_finite() {
                rms.recip()
            } else {
                1.0
            }
        })
        .collect()
}

/// Restricted Clebsch-Gordan product: channel `n` of `(l1,p1)` couples with
/// channel `n` of `(l2,p2)` into channel `n` of `(l,p)` when `l1 + l2 <= L_MAX`
/// and all three groups have a channel `n`.
fn build_coupling(layout: &RepLayout) -> Vec<Vec<(u32, u32, f64)>> {
    let table = model_table();
    let mut out = vec![Vec::new(); layout.size()];
    for go in layout.groups() {
        for g1 in layout.groups() {
            for g2 in layout.groups() {
                if g1.l + g2.l > L_MAX || go.l < g1.l.abs_diff(g2.l) || go.l > g1.l + g2.l {
                    continue;
                }
                if !parity_allowed(g1.l, g1.p, g2.l, g2.p, go.l, go.p) {
                    continue;
                }
                let block = table.block(g1.l, g2.l, go.l).expect("degrees within table");
                let nmax = go.n.min(g1.n).min(g2.n);
                for n in 0..nmax {
                    for &(a, b, c, v) in &block.nonzeros {
                        out[go.at(n, c)].push((g1.at(n, a) as u32, g2.at(n, b) as u32, v));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pooling::HeadConfig;

    #[test]
    fn parameter_names_are_unique() {
        let spec = ModelSpec::new(ModelConfig::small(4), HeadConfig::energy(), FeaturizerConfig::default()).unwrap();
        let m = Model::new(spec, BasisSet::toy(), 0).unwrap();
        let mut names: Vec<&str> = m.params.entries().iter().map(|e| e.name.as_str()).collect();
        let n = names.len();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), n);
        assert_eq!(m.stats.len(), 2);
    }

    #[test]
    fn odd_output_from_two_even_vectors() {
        // (1,+) x (1,+) -> degree 1 lands only in odd parity
        let layout = RepLayout::new(&[[2, 2, 2, 1, 1], [1, 2, 1, 1, 0]]);
        let c = build_coupling(&layout);
        let e1 = layout.group(1, Parity::Even).unwrap();
        let o1 = layout.group(1, Parity::Odd).unwrap();
        let in_e1 = |i: u32| (i as usize) >= e1.offset && (i as usize) < e1.offset + e1.len();
        for m in 0..3 {
            assert!(c[e1.at(0, m)].iter().all(|(a, b, _)| !(in_e1(*a) && in_e1(*b))));
            assert!(c[o1.at(0, m)].iter().any(|(a, b, _)| in_e1(*a) && in_e1(*b)));
        }
    }

    #[test]
    fn mismatched_channel_count_is_rejected() {
        assert!(ModelSpec::new(ModelConfig::small(4), HeadConfig::energy(), FeaturizerConfig::default().with_fmo(true)).is_err());
    }
}
