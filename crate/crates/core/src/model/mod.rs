//! End-to-end span-extraction models, loss, decoding, training and
//! checkpoints.

mod batch;
mod checkpoint;
mod config;
mod decode;
mod loss;
mod recurrent_qa;
mod train;
mod transformer_qa;
mod vocab;

pub use batch::DialogueBatch;
pub use checkpoint::Checkpoint;
pub use config::{ModelConfig, ModelKind, SCONE_HIDDEN};
pub use decode::decode_span;
pub use loss::{span_loss, span_loss_on_tape, PROB_FLOOR};
pub use recurrent_qa::RecurrentQa;
pub use train::{evaluate_spans, train, EpochMetrics, TrainOutcome};
pub use transformer_qa::{SpanHeadParams, TransformerQa};
pub use vocab::{Vocab, PAD, SEP, UNK};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

/// Per-turn start and end distributions over context positions.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanPrediction {
    pub p_start: Vec<Vec<f64>>,
    pub p_end: Vec<Vec<f64>>,
}

impl SpanPrediction {
    pub fn turns(&self) -> usize {
        self.p_start.len()
    }

    fn from_tensors(ps: &Tensor, pe: &Tensor) -> SpanPrediction {
        let m = ps.shape()[1];
        let rows = |t: &Tensor| t.data().chunks(m).map(<[f64]>::to_vec).collect();
        SpanPrediction { p_start: rows(ps), p_end: rows(pe) }
    }
}

/// Either end-to-end model, with its configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum QaModel {
    Recurrent(RecurrentQa),
    Transformer(TransformerQa),
}

impl QaModel {
    /// Registers fresh parameters for `cfg` drawn from `rng`.
    pub fn init(params: &mut ParamSet, cfg: &ModelConfig, vocab_len: usize, rng: &mut Rng) -> Result<QaModel> {
        cfg.validate()?;
        Ok(match cfg.model {
            ModelKind::Recurrent => QaModel::Recurrent(RecurrentQa::init(params, cfg, vocab_len, rng)?),
            ModelKind::Transformer => QaModel::Transformer(TransformerQa::init(params, cfg, vocab_len, rng)?),
        })
    }

    fn embed(&self) -> ParamId {
        match self {
            QaModel::Recurrent(m) => m.embed,
            QaModel::Transformer(m) => m.embed,
        }
    }

    fn answer_marks(&self) -> bool {
        match self {
            QaModel::Recurrent(m) => m.answer_marks,
            QaModel::Transformer(m) => m.answer_marks,
        }
    }

    /// Records the forward pass and returns `(P^S, P^E)` as `[t × m]` vars.
    /// With answer marking on, turn `k` marks `marks[k]`; pass
    /// [`gold_marks`] while training.
    pub fn forward(&self, tape: &mut Tape<'_>, batch: &DialogueBatch, marks: &[Option<(usize, usize)>]) -> Result<(Var, Var)> {
        batch.validate()?;
        let table = tape.param(self.embed())?;
        let vocab_len = tape.shape(table)[0];
        if batch.max_id() >= vocab_len {
            return Err(Error::Data(format!("token id {} outside a vocabulary of {vocab_len}", batch.max_id())));
        }
        if self.answer_marks() && marks.len() != batch.turns() {
            return Err(Error::Usage(format!("{} answer marks for {} turns", marks.len(), batch.turns())));
        }
        match self {
            QaModel::Recurrent(m) => m.forward(tape, batch, marks),
            QaModel::Transformer(m) => m.forward(tape, batch, marks),
        }
    }

    /// Span distributions for every turn. With answer marking on, each
    /// turn marks the span decoded for the turn before it, so no gold
    /// answer reaches the model.
    pub fn predict(&self, params: &ParamSet, batch: &DialogueBatch, max_answer_len: usize) -> Result<SpanPrediction> {
        if !self.answer_marks() {
            let mut tape = Tape::with_params(params);
            let (ps, pe) = self.forward(&mut tape, batch, &[])?;
            return Ok(SpanPrediction::from_tensors(tape.value(ps), tape.value(pe)));
        }
        let mut marks = vec![None];
        let mut out = SpanPrediction { p_start: Vec::new(), p_end: Vec::new() };
        for k in 0..batch.turns() {
            // Turn causality makes the last turn of each prefix final.
            let prefix = batch.prefix(k + 1);
            let mut tape = Tape::with_params(params);
            let (ps, pe) = self.forward(&mut tape, &prefix, &marks)?;
            let pred = SpanPrediction::from_tensors(tape.value(ps), tape.value(pe));
            let (s, e) = (pred.p_start[k].clone(), pred.p_end[k].clone());
            marks.push(Some(decode_span(&s, &e, max_answer_len)));
            out.p_start.push(s);
            out.p_end.push(e);
        }
        Ok(out)
    }
}

/// Previous-turn gold spans: `None` for the first turn.
pub fn gold_marks(batch: &DialogueBatch) -> Vec<Option<(usize, usize)>> {
    std::iter::once(None).chain(batch.spans.iter().map(|&s| Some(s))).take(batch.turns()).collect()
}

fn in_span(span: Option<(usize, usize)>, i: usize) -> bool {
    span.is_some_and(|(s, e)| s <= i && i <= e)
}

/// Uniform(±0.5) embedding table.
fn embedding_table(params: &mut ParamSet, name: &str, rows: usize, width: usize, rng: &mut Rng) -> Result<ParamId> {
    params.add(name, Tensor::from_fn(vec![rows, width], |_| rng.uniform(-0.5, 0.5)))
}

/// Row-major `[m × c]` hand-built features: exact question match, then the
/// answer mark when `mark` is given.
fn feature_columns(context: &[usize], question: &[usize], mark: Option<Option<(usize, usize)>>) -> Vec<f64> {
    let mut out = Vec::with_capacity(context.len() * 2);
    for (i, id) in context.iter().enumerate() {
        out.push(if question.contains(id) { 1.0 } else { 0.0 });
        if let Some(span) = mark {
            out.push(if in_span(span, i) { 1.0 } else { 0.0 });
        }
    }
    out
}
