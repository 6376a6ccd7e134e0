//! Model and training configuration, including the flat `key=value` file
//! format read by `corefsum train --config`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{HeadSelection, LAMBDA_INIT};
use crate::numerics::layers::DEFAULT_DROPOUT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Gnn,
    Attn,
    Headrep,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Base, Variant::Gnn, Variant::Attn, Variant::Headrep];

    pub fn uses_coref(self) -> bool {
        self != Variant::Base
    }

    pub fn has_lambda(self) -> bool {
        matches!(self, Variant::Gnn | Variant::Attn)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Gnn => "gnn",
            Variant::Attn => "attn",
            Variant::Headrep => "headrep",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "gnn" => Ok(Variant::Gnn),
            "attn" => Ok(Variant::Attn),
            "headrep" => Ok(Variant::Headrep),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (base|gnn|attn|headrep)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    pub ffn: usize,
    pub max_len: usize,
    pub variant: Variant,
    pub lambda_init: f64,
    pub lambda_trainable: bool,
    pub cge_depth: usize,
    pub dropout: f64,
    pub seed: u64,
    /// Heads replaced by the coreference matrix (headrep only).
    pub head_selection: HeadSelection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 4,
            ffn: 128,
            max_len: 128,
            variant: Variant::Base,
            lambda_init: LAMBDA_INIT,
            lambda_trainable: true,
            cge_depth: 2,
            dropout: DEFAULT_DROPOUT,
            seed: 0,
            head_selection: HeadSelection::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            ));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 || self.ffn == 0 {
            return fail("layer counts and ffn must be >= 1".into());
        }
        if self.max_len < 2 {
            return fail("max_len must be >= 2".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.lambda_init) {
            return fail(format!("lambda_init {} outside [0, 1]", self.lambda_init));
        }
        if self.variant == Variant::Gnn && self.cge_depth == 0 {
            return fail("gnn variant needs cge_depth >= 1".into());
        }
        match self.variant {
            Variant::Headrep => {
                if self.head_selection.is_empty() {
                    return fail("headrep variant needs a head selection".into());
                }
                self.head_selection
                    .validate(self.encoder_layers, self.heads)?;
            }
            _ if !self.head_selection.is_empty() => {
                return fail(format!(
                    "head_selection only applies to headrep, not {}",
                    self.variant
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.heads
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub lr_fusion: f64,
    pub lr_backbone: f64,
    pub batch_size: usize,
    /// Validation metric used to keep the best epoch; only `rouge2`.
    pub selection_metric: String,
    pub min_count: usize,
    pub max_decode_len: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr_fusion: 1e-3,
            lr_backbone: 2e-5,
            batch_size: 8,
            selection_metric: "rouge2".into(),
            min_count: 1,
            max_decode_len: 32,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if !(self.lr_fusion > 0.0 && self.lr_backbone > 0.0) {
            return Err(Error::Config("learning rates must be > 0".into()));
        }
        if self.batch_size == 0 || self.min_count == 0 || self.max_decode_len == 0 {
            return Err(Error::Config(
                "batch_size, min_count and max_decode_len must be >= 1".into(),
            ));
        }
        if self.selection_metric != "rouge2" {
            return Err(Error::Config(format!(
                "unsupported selection_metric {:?}",
                self.selection_metric
            )));
        }
        Ok(())
    }
}

/// Keys accepted in a config file, one per `ModelConfig`/`TrainingConfig`
/// field.
pub const CONFIG_KEYS: &[&str] = &[
    "d_model",
    "encoder_layers",
    "decoder_layers",
    "heads",
    "ffn",
    "max_len",
    "variant",
    "lambda_init",
    "lambda_trainable",
    "cge_depth",
    "dropout",
    "seed",
    "head_selection",
    "epochs",
    "lr_fusion",
    "lr_backbone",
    "batch_size",
    "selection_metric",
    "min_count",
    "max_decode_len",
];

fn parse<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid value {value:?} for {key}"),
    })
}

/// Applies `key=value` lines on top of the given configs. Blank lines and
/// `#` comments are ignored; unknown keys are errors.
pub fn apply_config_text(
    text: &str,
    model: &mut ModelConfig,
    train: &mut TrainingConfig,
) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected key=value, got {content:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "d_model" => model.d_model = parse(key, value, line)?,
            "encoder_layers" => model.encoder_layers = parse(key, value, line)?,
            "decoder_layers" => model.decoder_layers = parse(key, value, line)?,
            "heads" => model.heads = parse(key, value, line)?,
            "ffn" => model.ffn = parse(key, value, line)?,
            "max_len" => model.max_len = parse(key, value, line)?,
            "variant" => model.variant = parse(key, value, line)?,
            "lambda_init" => model.lambda_init = parse(key, value, line)?,
            "lambda_trainable" => model.lambda_trainable = parse(key, value, line)?,
            "cge_depth" => model.cge_depth = parse(key, value, line)?,
            "dropout" => model.dropout = parse(key, value, line)?,
            "seed" => model.seed = parse(key, value, line)?,
            "head_selection" => model.head_selection = parse(key, value, line)?,
            "epochs" => train.epochs = parse(key, value, line)?,
            "lr_fusion" => train.lr_fusion = parse(key, value, line)?,
            "lr_backbone" => train.lr_backbone = parse(key, value, line)?,
            "batch_size" => train.batch_size = parse(key, value, line)?,
            "selection_metric" => train.selection_metric = value.to_string(),
            "min_count" => train.min_count = parse(key, value, line)?,
            "max_decode_len" => train.max_decode_len = parse(key, value, line)?,
            other => {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    Ok(())
}

/// Renders both configs in the `key=value` format.
pub fn render_config(model: &ModelConfig, train: &TrainingConfig) -> String {
    let rows: Vec<(&str, String)> = vec![
        ("d_model", model.d_model.to_string()),
        ("encoder_layers", model.encoder_layers.to_string()),
        ("decoder_layers", model.decoder_layers.to_string()),
        ("heads", model.heads.to_string()),
        ("ffn", model.ffn.to_string()),
        ("max_len", model.max_len.to_string()),
        ("variant", model.variant.to_string()),
        ("lambda_init", model.lambda_init.to_string()),
        ("lambda_trainable", model.lambda_trainable.to_string()),
        ("cge_depth", model.cge_depth.to_string()),
        ("dropout", model.dropout.to_string()),
        ("seed", model.seed.to_string()),
        ("head_selection", model.head_selection.to_string()),
        ("epochs", train.epochs.to_string()),
        ("lr_fusion", train.lr_fusion.to_string()),
        ("lr_backbone", train.lr_backbone.to_string()),
        ("batch_size", train.batch_size.to_string()),
        ("selection_metric", train.selection_metric.clone()),
        ("min_count", train.min_count.to_string()),
        ("max_decode_len", train.max_decode_len.to_string()),
    ];
    rows.into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::default().validate().unwrap();
        TrainingConfig::default().validate().unwrap();
        assert_eq!(TrainingConfig::default().epochs, 20);
    }

    #[test]
    fn round_trip_through_text() {
        let mut m = ModelConfig {
            variant: Variant::Headrep,
            head_selection: "0:1,1:3".parse().unwrap(),
            seed: 9,
            ..ModelConfig::default()
        };
        m.lambda_trainable = false;
        let t = TrainingConfig {
            lr_backbone: 3e-3,
            ..TrainingConfig::default()
        };
        let text = render_config(&m, &t);
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
        let (mut m2, mut t2) = (ModelConfig::default(), TrainingConfig::default());
        apply_config_text(&text, &mut m2, &mut t2).unwrap();
        assert_eq!((m2, t2), (m, t));
    }

    #[test]
    fn bad_lines_report_numbers() {
        let (mut m, mut t) = (ModelConfig::default(), TrainingConfig::default());
        let err = apply_config_text("# c\nepochs=3\nbogus=1\n", &mut m, &mut t).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }));
        let err = apply_config_text("heads=four", &mut m, &mut t).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn invalid_configs() {
        let bad = ModelConfig {
            d_model: 10,
            heads: 4,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            variant: Variant::Headrep,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            variant: Variant::Attn,
            head_selection: "0:0".parse().unwrap(),
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let zero = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(zero.validate().is_err());
    }
}
