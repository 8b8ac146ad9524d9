use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowMode;

/// Which end-to-end model to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Word attention, bidirectional GRU encoders interleaved with flow
    /// layers, self-attention and an affine span head.
    Recurrent,
    /// Small transformer with a flow branch inside its last block and
    /// another before the span head.
    Transformer,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Recurrent => "recurrent",
            ModelKind::Transformer => "transformer",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "recurrent" => Ok(ModelKind::Recurrent),
            "transformer" => Ok(ModelKind::Transformer),
            _ => Err(Error::Usage(format!("unknown model {s:?} (recurrent, transformer)"))),
        }
    }
}

/// Every knob of model construction and training. Read from and written to
/// TOML; all fields are required so a config file is a complete record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub variant: FlowMode,
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub flow_hidden: usize,
    /// Transformer depth, attention heads and feed-forward width.
    pub blocks: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Block that carries the in-block flow branch (0-based). Defaults to the last.
    pub inflow_block: Option<usize>,
    /// Questions are padded or truncated to this many tokens by the transformer.
    pub max_question_len: usize,
    /// Longest context the transformer's position table covers.
    pub max_context_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub max_answer_len: usize,
    /// Adds a per-token feature marking the previous turn's answer span.
    pub answer_marks: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            model: ModelKind::Recurrent,
            variant: FlowMode::Variant(crate::flow::FlowVariantKind::Delta),
            embed_dim: 16,
            encoder_hidden: 24,
            flow_hidden: 24,
            blocks: 2,
            heads: 2,
            ffn_dim: 32,
            inflow_block: None,
            max_question_len: 12,
            max_context_len: 64,
            learning_rate: 0.1,
            epochs: 4,
            seed: 42,
            clip_norm: 5.0,
            max_answer_len: 15,
            answer_marks: false,
        }
    }
}

/// Hidden sizes tuned per SCONE domain.
pub const SCONE_HIDDEN: [(&str, usize); 3] = [("scene", 50), ("alchemy", 60), ("tangrams", 70)];

impl ModelConfig {
    /// Defaults with encoder and flow widths set to the tuned size for a
    /// SCONE domain.
    pub fn scone_preset(domain: &str) -> Option<ModelConfig> {
        SCONE_HIDDEN.iter().find(|(d, _)| *d == domain).map(|&(_, h)| ModelConfig {
            encoder_hidden: h,
            flow_hidden: h,
            ..ModelConfig::default()
        })
    }

    pub fn from_toml_str(text: &str) -> Result<ModelConfig> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ModelConfig> {
        let text = std::fs::read_to_string(path)?;
        ModelConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Usage(msg) => Error::Usage(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config fields are all TOML-representable")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("embed_dim", self.embed_dim),
            ("encoder_hidden", self.encoder_hidden),
            ("flow_hidden", self.flow_hidden),
            ("blocks", self.blocks),
            ("heads", self.heads),
            ("ffn_dim", self.ffn_dim),
            ("max_question_len", self.max_question_len),
            ("max_context_len", self.max_context_len),
            ("max_answer_len", self.max_answer_len),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Usage(format!("config {name} must be positive")));
            }
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!("config learning_rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Usage(format!("config clip_norm {} must be positive", self.clip_norm)));
        }
        if self.model == ModelKind::Transformer {
            if self.embed_dim % self.heads != 0 {
                return Err(Error::Usage(format!("embed_dim {} not divisible by {} heads", self.embed_dim, self.heads)));
            }
            if let Some(b) = self.inflow_block {
                if b >= self.blocks {
                    return Err(Error::Usage(format!("inflow_block {b} with only {} blocks", self.blocks)));
                }
            }
        }
        Ok(())
    }

    /// Index of the block carrying the in-block flow branch.
    pub fn inflow_block_index(&self) -> usize {
        self.inflow_block.unwrap_or(self.blocks - 1)
    }
}
