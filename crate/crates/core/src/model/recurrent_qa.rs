//! Recurrent span extractor: per-turn word attention, bidirectional GRU
//! encoders over words interleaved with flow layers over turns, context
//! self-attention and an affine span head.

use crate::attention::{self_attention_context, span_head, word_attention_summary, SelfAttnParams};
use crate::error::Result;
use crate::flow::{flow_mode_forward, FlowMode};
use crate::recurrent::{bigru_encode, GruParams};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

use super::config::ModelConfig;
use super::{embedding_table, feature_columns, DialogueBatch};

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentQa {
    pub embed: ParamId,
    pub enc1: (GruParams, GruParams),
    pub flow1: Option<GruParams>,
    pub enc2: (GruParams, GruParams),
    pub flow2: Option<GruParams>,
    pub self_attn: SelfAttnParams,
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub mode: FlowMode,
    pub answer_marks: bool,
}

impl RecurrentQa {
    pub fn init(params: &mut ParamSet, cfg: &ModelConfig, vocab_len: usize, rng: &mut Rng) -> Result<Self> {
        let (e, h, f) = (cfg.embed_dim, cfg.encoder_hidden, cfg.flow_hidden);
        let mode = cfg.variant;
        let embed = embedding_table(params, "embed", vocab_len, e, rng)?;
        // word vector, attended question summary, their product, exact match (+ answer mark)
        let features = 3 * e + 1 + usize::from(cfg.answer_marks);
        let enc1 = (
            GruParams::init(params, "enc1.fwd", features, h, rng)?,
            GruParams::init(params, "enc1.bwd", features, h, rng)?,
        );
        let flow_layer = |params: &mut ParamSet, name: &str, rng: &mut Rng| -> Result<Option<GruParams>> {
            if mode.is_none() {
                return Ok(None);
            }
            GruParams::init(params, name, mode.gru_input_width(2 * h, f), f, rng).map(Some)
        };
        let flow1 = flow_layer(params, "flow1", rng)?;
        let stage = 2 * h + if mode.is_none() { 0 } else { f };
        let enc2 = (
            GruParams::init(params, "enc2.fwd", stage, h, rng)?,
            GruParams::init(params, "enc2.bwd", stage, h, rng)?,
        );
        let flow2 = flow_layer(params, "flow2", rng)?;
        let self_attn = SelfAttnParams::init(params, "self_attn", stage, rng)?;
        let head_w = params.glorot("head.w", 2 * stage, 2, rng)?;
        let head_b = params.zeros("head.b", vec![2])?;
        Ok(RecurrentQa { embed, enc1, flow1, enc2, flow2, self_attn, head_w, head_b, mode, answer_marks: cfg.answer_marks })
    }

    /// `(P^S, P^E)`, each `[t × m]`. `marks[k]` is the answer span marked in
    /// turn `k`'s features when answer marking is enabled.
    pub fn forward(&self, tape: &mut Tape<'_>, batch: &DialogueBatch, marks: &[Option<(usize, usize)>]) -> Result<(Var, Var)> {
        let m = batch.context_len();
        let table = tape.param(self.embed)?;
        let context = tape.gather_rows(table, &batch.context)?;

        let mut turns = Vec::with_capacity(batch.turns());
        for (k, question) in batch.questions.iter().enumerate() {
            let q = tape.gather_rows(table, question)?;
            let summary = word_attention_summary(tape, q, context)?;
            let product = tape.mul(context, summary)?;
            let extra = feature_columns(&batch.context, question, self.answer_marks.then(|| marks[k]));
            let extra = tape.constant(Tensor::new(vec![m, extra.len() / m], extra)?)?;
            turns.push(tape.concat(&[context, summary, product, extra], 1)?);
        }
        let x = tape.stack(&turns)?;

        let g1 = self.stage(tape, x, &self.enc1, self.flow1.as_ref())?;
        let g2 = self.stage(tape, g1, &self.enc2, self.flow2.as_ref())?;

        let mut fused = Vec::with_capacity(batch.turns());
        for k in 0..batch.turns() {
            let g = tape.index0(g2, k)?;
            let sa = self_attention_context(tape, g, &self.self_attn)?;
            fused.push(tape.concat(&[g, sa], 1)?);
        }
        let reps = tape.stack(&fused)?;
        let (w, b) = (tape.param(self.head_w)?, tape.param(self.head_b)?);
        span_head(tape, reps, w, b)
    }

    /// Bidirectional GRU along the words of each turn, then (unless
    /// ablated) a flow layer across turns, concatenated: `[t × m × ·]`.
    fn stage(&self, tape: &mut Tape<'_>, x: Var, enc: &(GruParams, GruParams), flow: Option<&GruParams>) -> Result<Var> {
        let words_first = tape.swap_leading(x)?;
        let encoded = bigru_encode(tape, words_first, &enc.0, &enc.1)?;
        let encoded = tape.swap_leading(encoded)?;
        match flow {
            None => Ok(encoded),
            Some(p) => {
                let f = flow_mode_forward(tape, encoded, p, self.mode)?;
                tape.concat(&[encoded, f], 2)
            }
        }
    }
}
