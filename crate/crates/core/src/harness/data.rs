//! Dialogue files: one JSON object per line,
//! `{"context": str, "qas": [{"question": str, "answer_start": int,
//! "answer_end": int, "human_f1"?: float, "history_dependent"?: bool}]}`.
//! Text is whitespace-tokenized and lowercased; answer bounds are inclusive
//! token indices into the context.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DialogueBatch, Vocab};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QaRecord {
    pub question: String,
    pub answer_start: usize,
    pub answer_end: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_dependent: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DialogueRecord {
    pub context: String,
    pub qas: Vec<QaRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub question: Vec<String>,
    pub span: (usize, usize),
    pub human_f1: Option<f64>,
    pub history_dependent: Option<bool>,
}

/// A tokenized dialogue.
#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    pub context: Vec<String>,
    pub turns: Vec<Turn>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

impl Dialogue {
    /// Validates and tokenizes one record; errors name the offending field.
    pub fn from_record(rec: &DialogueRecord) -> Result<Dialogue> {
        let context = tokenize(&rec.context);
        if context.is_empty() {
            return Err(Error::Data("context: empty".into()));
        }
        if rec.qas.is_empty() {
            return Err(Error::Data("qas: no turns".into()));
        }
        let m = context.len();
        let mut turns = Vec::with_capacity(rec.qas.len());
        for (k, qa) in rec.qas.iter().enumerate() {
            let question = tokenize(&qa.question);
            if question.is_empty() {
                return Err(Error::Data(format!("qas[{k}].question: empty")));
            }
            let (s, e) = (qa.answer_start, qa.answer_end);
            if e < s {
                return Err(Error::Data(format!("qas[{k}].answer_end: {e} before answer_start {s}")));
            }
            if e >= m {
                return Err(Error::Data(format!("qas[{k}].answer_end: {e} outside a context of {m} tokens")));
            }
            if let Some(h) = qa.human_f1 {
                if !(0.0..=1.0).contains(&h) {
                    return Err(Error::Data(format!("qas[{k}].human_f1: {h} outside [0, 1]")));
                }
            }
            turns.push(Turn { question, span: (s, e), human_f1: qa.human_f1, history_dependent: qa.history_dependent });
        }
        Ok(Dialogue { context, turns })
    }

    pub fn to_record(&self) -> DialogueRecord {
        DialogueRecord {
            context: self.context.join(" "),
            qas: self
                .turns
                .iter()
                .map(|t| QaRecord {
                    question: t.question.join(" "),
                    answer_start: t.span.0,
                    answer_end: t.span.1,
                    human_f1: t.human_f1,
                    history_dependent: t.history_dependent,
                })
                .collect(),
        }
    }

    pub fn answer(&self, span: (usize, usize)) -> &[String] {
        &self.context[span.0..=span.1]
    }

    pub fn all_tokens(&self) -> impl Iterator<Item = &str> {
        self.context.iter().chain(self.turns.iter().flat_map(|t| &t.question)).map(String::as_str)
    }

    pub fn to_batch(&self, vocab: &Vocab) -> Result<DialogueBatch> {
        let mut b = DialogueBatch::new(
            vocab.ids(&self.context),
            self.turns.iter().map(|t| vocab.ids(&t.question)).collect(),
            self.turns.iter().map(|t| t.span).collect(),
        )?;
        b.human_f1 = self.turns.iter().map(|t| t.human_f1).collect();
        b.history_dependent = self.turns.iter().map(|t| t.history_dependent).collect();
        Ok(b)
    }
}

/// Parses dialogue JSONL. Blank lines are skipped; errors carry the 0-based
/// record index.
pub fn parse_dialogues(text: &str) -> Result<Vec<Dialogue>> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let i = out.len();
        let rec: DialogueRecord =
            serde_json::from_str(line).map_err(|e| Error::Data(format!("record {i}: {e}")))?;
        out.push(Dialogue::from_record(&rec).map_err(|e| match e {
            Error::Data(msg) => Error::Data(format!("record {i}: {msg}")),
            other => other,
        })?);
    }
    Ok(out)
}

pub fn load_dialogues(path: &Path) -> Result<Vec<Dialogue>> {
    let text = std::fs::read_to_string(path)?;
    let dialogues = parse_dialogues(&text).map_err(|e| match e {
        Error::Data(msg) => Error::Data(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    if dialogues.is_empty() {
        log::warn!("{}: no dialogues", path.display());
    }
    let turns: usize = dialogues.iter().map(|d| d.turns.len()).sum();
    log::info!("{}: {} dialogues, {turns} turns", path.display(), dialogues.len());
    Ok(dialogues)
}

pub fn write_dialogues(out: &mut impl Write, dialogues: &[Dialogue]) -> Result<()> {
    for d in dialogues {
        let line = serde_json::to_string(&d.to_record()).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn build_vocab(dialogues: &[Dialogue]) -> Vocab {
    Vocab::build(dialogues.iter().flat_map(Dialogue::all_tokens))
}
