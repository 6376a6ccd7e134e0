//! JSON checkpoints: one `{shape, data}` entry per parameter plus a `meta`
//! object. Keys are sorted and floats use shortest round-trip decimals, so
//! equal models serialize to equal bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::dialogue::Vocabulary;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::config::{ModelConfig, Variant};
use super::transformer::Summarizer;

pub const META_KEY: &str = "meta";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub variant: Variant,
    pub vocab_hash: String,
    /// Non-reserved vocabulary entries in id order.
    pub vocab: Vec<String>,
    /// Fusion weight name to value; empty for variants without one.
    pub lambda: BTreeMap<String, f64>,
    /// Replaced heads as `layer:head,...`; empty unless headrep.
    pub selected_heads: String,
    pub config: ModelConfig,
}

impl CheckpointMeta {
    pub fn of(model: &Summarizer) -> Self {
        let mut lambda = BTreeMap::new();
        if let (Some(w), Some(v)) = (model.lambda(), model.lambda_value()) {
            lambda.insert(w.name, v);
        }
        Self {
            variant: model.variant(),
            vocab_hash: model.vocab.hash(),
            vocab: model.vocab.entries().to_vec(),
            lambda,
            selected_heads: model.config.head_selection.to_string(),
            config: model.config.clone(),
        }
    }
}

pub fn save_checkpoint(model: &Summarizer) -> Result<String> {
    let mut root = Map::new();
    for p in model.params.iter() {
        if !p.value.all_finite() {
            return Err(Error::NonFinite(format!(
                "parameter {} before saving",
                p.name
            )));
        }
        root.insert(p.name.clone(), serde_json::to_value(&p.value)?);
    }
    root.insert(
        META_KEY.into(),
        serde_json::to_value(CheckpointMeta::of(model))?,
    );
    Ok(serde_json::to_string(&Value::Object(root))?)
}

pub fn load_checkpoint(text: &str) -> Result<Summarizer> {
    let mut root: Map<String, Value> = serde_json::from_str(text)?;
    let meta: CheckpointMeta = serde_json::from_value(
        root.remove(META_KEY)
            .ok_or_else(|| Error::Checkpoint("missing meta object".into()))?,
    )?;
    if meta.variant != meta.config.variant {
        return Err(Error::Checkpoint(format!(
            "meta variant {} disagrees with config variant {}",
            meta.variant, meta.config.variant
        )));
    }
    let vocab = Vocabulary::from_tokens(meta.vocab.iter().cloned())?;
    let found = vocab.hash();
    if found != meta.vocab_hash {
        return Err(Error::VocabMismatch {
            expected: meta.vocab_hash,
            found,
        });
    }
    let mut model = Summarizer::new(meta.config, vocab)?;
    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    for name in names {
        let value = root
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
        let t: Tensor = serde_json::from_value(value)
            .map_err(|e| Error::Checkpoint(format!("parameter {name}: {e}")))?;
        if t.len() != t.rows() * t.cols() {
            return Err(Error::Checkpoint(format!(
                "parameter {name}: data/shape mismatch"
            )));
        }
        model.params.set_value(&name, t)?;
    }
    if let Some(extra) = root.keys().next() {
        return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
    }
    for (name, v) in &meta.lambda {
        match model.params.value(name) {
            Some(t) if t.item() == *v => {}
            _ => {
                return Err(Error::Checkpoint(format!(
                    "meta lambda {name}={v} disagrees with parameters"
                )))
            }
        }
    }
    Ok(model)
}
