//! Plain-text checkpoint container.
//!
//! ```text
//! flowdelta-checkpoint 1
//! config <line count>
//! <TOML config, that many lines>
//! vocab <token count>
//! <one token per line>
//! params <tensor count>
//! <name> <dim>x<dim>...
//! <f64 bit patterns as 16-digit hex, space separated>
//! end
//! ```
//!
//! Values are stored as raw bit patterns so a reload is bitwise exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamSet, Tensor};

use super::{ModelConfig, QaModel, Vocab};

const MAGIC: &str = "flowdelta-checkpoint";
const VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION}\n");
        let cfg = self.config.to_toml_string();
        let lines: Vec<&str> = cfg.lines().collect();
        let _ = writeln!(out, "config {}", lines.len());
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        let _ = writeln!(out, "vocab {}", self.vocab.len());
        for t in self.vocab.tokens() {
            let _ = writeln!(out, "{t}");
        }
        let _ = writeln!(out, "params {}", self.params.len());
        for (_, name, t) in self.params.iter() {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{name} {}", dims.join("x"));
            let hex: Vec<String> = t.data().iter().map(|v| format!("{:016x}", v.to_bits())).collect();
            let _ = writeln!(out, "{}", hex.join(" "));
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Checkpoint> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::Data(format!("checkpoint truncated: expected {what}")))
        };
        let bad = |line: usize, msg: String| Error::Data(format!("checkpoint line {line}: {msg}"));
        let counted = |line: usize, l: &str, key: &str| -> Result<usize> {
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad(line, format!("expected `{key} <count>`, found {l:?}")))
        };

        let (n, header) = next("header")?;
        if header != format!("{MAGIC} {VERSION}") {
            return Err(bad(n, format!("unsupported header {header:?}")));
        }
        let (n, l) = next("config")?;
        let cfg_lines = counted(n, l, "config")?;
        let mut cfg = String::new();
        for _ in 0..cfg_lines {
            cfg.push_str(next("config line")?.1);
            cfg.push('\n');
        }
        let config = ModelConfig::from_toml_str(&cfg).map_err(|e| Error::Data(format!("checkpoint {e}")))?;

        let (n, l) = next("vocab")?;
        let vocab_len = counted(n, l, "vocab")?;
        let mut tokens = Vec::with_capacity(vocab_len);
        for _ in 0..vocab_len {
            tokens.push(next("vocab token")?.1.to_string());
        }
        let vocab = Vocab::from_tokens(tokens)?;

        let (n, l) = next("params")?;
        let count = counted(n, l, "params")?;
        let mut params = ParamSet::new();
        for _ in 0..count {
            let (n, l) = next("tensor header")?;
            let (name, dims) = l.split_once(' ').ok_or_else(|| bad(n, format!("bad tensor header {l:?}")))?;
            let shape = dims
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(n, format!("bad shape {dims:?}")))?;
            let (n, l) = next("tensor data")?;
            let data = l
                .split(' ')
                .map(|h| u64::from_str_radix(h, 16).map(f64::from_bits))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(n, format!("bad hex data for {name}")))?;
            let t = Tensor::new(shape, data).map_err(|e| bad(n, format!("{name}: {e}")))?;
            params.add(name, t).map_err(|e| bad(n, e.to_string()))?;
        }
        let (n, l) = next("end")?;
        if l != "end" {
            return Err(bad(n, format!("expected end, found {l:?}")));
        }
        Ok(Checkpoint { config, vocab, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Checkpoint::parse(&std::fs::read_to_string(path)?)
    }

    /// Rebuilds the model structure from the config and binds it to the
    /// stored tensors, checking that names and shapes line up exactly.
    pub fn model(&self) -> Result<QaModel> {
        let mut fresh = ParamSet::new();
        let model = QaModel::init(&mut fresh, &self.config, self.vocab.len(), &mut Rng::new(0))?;
        if fresh.len() != self.params.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, the configured model has {}",
                self.params.len(),
                fresh.len()
            )));
        }
        for ((_, a, ta), (_, b, tb)) in fresh.iter().zip(self.params.iter()) {
            if a != b || ta.shape() != tb.shape() {
                return Err(Error::Data(format!("checkpoint tensor {b} {:?} where the model expects {a} {:?}", tb.shape(), ta.shape())));
            }
        }
        Ok(model)
    }
}
