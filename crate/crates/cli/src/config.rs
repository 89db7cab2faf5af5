//! Run configuration: one JSON file with `model`, `featurizer`, `training`
//! and `head` sections, each overlaid on built-in defaults.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use unite_core::featurizer::FeaturizerConfig;
use unite_core::net::{ModelConfig, ModelSpec};
use unite_core::pooling::HeadConfig;
use unite_core::training::TrainConfig;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub featurizer: FeaturizerConfig,
    pub training: TrainConfig,
    pub head: HeadConfig,
}

/// Command-line switches that override the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub delta_learning: bool,
    pub fmo_features: bool,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let root = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => Value::Object(Map::new()),
        };
        Self::from_value(&root, flags)
    }

    pub fn from_value(root: &Value, flags: &Overrides) -> Result<Self> {
        let Value::Object(sections) = root else {
            bail!("config must be a JSON object");
        };
        for key in sections.keys() {
            if !["model", "featurizer", "training", "head"].contains(&key.as_str()) {
                bail!("unknown config section `{key}` (expected model, featurizer, training, head)");
            }
        }
        let section = |name: &str| sections.get(name).cloned().unwrap_or(Value::Object(Map::new()));

        let mut featurizer: FeaturizerConfig = overlay(&FeaturizerConfig::default(), &section("featurizer"), "featurizer")?;
        featurizer.fmo_features |= flags.fmo_features;

        let mut model_section = section("model");
        let preset = match &mut model_section {
            Value::Object(m) => m.remove("preset"),
            _ => bail!("config section `model` must be an object"),
        };
        let base = match preset.as_ref().and_then(Value::as_str) {
            None | Some("full") => ModelConfig::full(featurizer.nchannels()),
            Some("small") => ModelConfig::small(featurizer.nchannels()),
            Some(other) => bail!("unknown model preset `{other}` (expected full or small)"),
        };
        let model: ModelConfig = overlay(&base, &model_section, "model")?;

        let mut training: TrainConfig = overlay(&TrainConfig::default(), &section("training"), "training")?;
        if let Some(seed) = flags.seed {
            training.seed = seed;
        }
        training.validate()?;

        let mut head: HeadConfig = overlay(&HeadConfig::energy(), &section("head"), "head")?;
        head.delta_learning |= flags.delta_learning;

        let cfg = RunConfig { model, featurizer, training, head };
        cfg.spec()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec::new(self.model.clone(), self.head.clone(), self.featurizer.clone())?;
        spec.model.validate()?;
        Ok(spec)
    }
}

/// Replace fields of `base` with those given in `over`. Nested objects merge
/// key by key, except tagged ones (with a `kind` key), which replace whole.
fn overlay<T: Serialize + DeserializeOwned>(base: &T, over: &Value, section: &str) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, over, section, true)?;
    serde_json::from_value(value).with_context(|| format!("invalid config section `{section}`"))
}

fn merge(base: &mut Value, over: &Value, path: &str, top: bool) -> Result<()> {
    let (Value::Object(b), Value::Object(o)) = (&mut *base, over) else {
        *base = over.clone();
        return Ok(());
    };
    if !top && o.contains_key("kind") {
        *base = over.clone();
        return Ok(());
    }
    for (k, v) in o {
        let Some(slot) = b.get_mut(k) else {
            bail!("unknown key `{k}` in config section `{path}`");
        };
        merge(slot, v, &format!("{path}.{k}"), false)?;
    }
    Ok(())
}
