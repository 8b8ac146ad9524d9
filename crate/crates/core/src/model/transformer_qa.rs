//! Transformer span extractor. Each turn reads `context ++ <sep> ++
//! question`; the flow-carrying block runs across turns and the span head
//! sees the context positions, optionally concatenated with a second flow.

use crate::attention::{
    exflow_predict, span_head, transformer_block, transformer_block_inflow, ExFlowParams, InFlowParams,
    TransformerBlockParams, MASKED_SCORE,
};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

use super::config::ModelConfig;
use super::vocab::{PAD, SEP};
use super::{embedding_table, in_span, DialogueBatch};

#[derive(Clone, Debug, PartialEq)]
pub enum SpanHeadParams {
    Plain { w: ParamId, b: ParamId },
    ExFlow(ExFlowParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransformerQa {
    pub embed: ParamId,
    pub position: ParamId,
    /// Rows: context, question, marked answer.
    pub segment: ParamId,
    pub blocks: Vec<TransformerBlockParams>,
    pub inflow: Option<InFlowParams>,
    pub inflow_block: usize,
    pub head: SpanHeadParams,
    pub max_question_len: usize,
    pub max_context_len: usize,
    pub answer_marks: bool,
}

impl TransformerQa {
    pub fn init(params: &mut ParamSet, cfg: &ModelConfig, vocab_len: usize, rng: &mut Rng) -> Result<Self> {
        let d = cfg.embed_dim;
        let embed = embedding_table(params, "embed", vocab_len, d, rng)?;
        let positions = cfg.max_context_len + 1 + cfg.max_question_len;
        let position = embedding_table(params, "position", positions, d, rng)?;
        let segment = embedding_table(params, "segment", 3, d, rng)?;
        let blocks = (0..cfg.blocks)
            .map(|i| TransformerBlockParams::init(params, &format!("block{i}"), d, cfg.ffn_dim, cfg.heads, rng))
            .collect::<Result<Vec<_>>>()?;
        let (inflow, head) = if cfg.variant.is_none() {
            let w = params.glorot("head.w", d, 2, rng)?;
            let b = params.zeros("head.b", vec![2])?;
            (None, SpanHeadParams::Plain { w, b })
        } else {
            // Independent flow parameters for the two insertion points.
            let inflow = InFlowParams::init(params, "inflow", d, cfg.flow_hidden, cfg.variant, rng)?;
            let ex = ExFlowParams::init(params, "exflow", d, cfg.flow_hidden, cfg.variant, rng)?;
            (Some(inflow), SpanHeadParams::ExFlow(ex))
        };
        Ok(TransformerQa {
            embed,
            position,
            segment,
            blocks,
            inflow,
            inflow_block: cfg.inflow_block_index(),
            head,
            max_question_len: cfg.max_question_len,
            max_context_len: cfg.max_context_len,
            answer_marks: cfg.answer_marks,
        })
    }

    /// Sets both flow output paths to zero: the in-block projection and the
    /// head rows reading flow features. The model then computes exactly what
    /// a flow-free transformer with the same remaining weights computes.
    pub fn zero_flow_projections(&self, params: &mut ParamSet) -> Result<()> {
        if let Some(inflow) = &self.inflow {
            let shape = params.get(inflow.proj).shape().to_vec();
            params.set(inflow.proj, Tensor::zeros(shape))?;
        }
        if let SpanHeadParams::ExFlow(ex) = &self.head {
            let mut w = params.get(ex.head_w).clone();
            let d = params.get(self.embed).shape()[1];
            for v in &mut w.data_mut()[d * 2..] {
                *v = 0.0;
            }
            params.set(ex.head_w, w)?;
        }
        Ok(())
    }

    /// `(P^S, P^E)` over context positions, each `[t × m]`.
    pub fn forward(&self, tape: &mut Tape<'_>, batch: &DialogueBatch, marks: &[Option<(usize, usize)>]) -> Result<(Var, Var)> {
        let m = batch.context_len();
        if m > self.max_context_len {
            return Err(Error::Data(format!("context of {m} tokens exceeds max_context_len {}", self.max_context_len)));
        }
        let q_len = self.max_question_len;
        let len = m + 1 + q_len;
        let table = tape.param(self.embed)?;
        let positions = tape.param(self.position)?;
        let positions = tape.narrow(positions, 0, 0, len)?;
        let segments = tape.param(self.segment)?;

        let mut inputs = Vec::with_capacity(batch.turns());
        let mut masks = Vec::with_capacity(batch.turns());
        for (k, question) in batch.questions.iter().enumerate() {
            let mut ids = batch.context.clone();
            ids.push(SEP);
            ids.extend((0..q_len).map(|i| question.get(i).copied().unwrap_or(PAD)));
            let mark = if self.answer_marks { marks[k] } else { None };
            let seg: Vec<usize> = (0..len)
                .map(|i| match i {
                    i if i < m && in_span(mark, i) => 2,
                    i if i <= m => 0,
                    _ => 1,
                })
                .collect();
            let tok = tape.gather_rows(table, &ids)?;
            let seg = tape.gather_rows(segments, &seg)?;
            let x = tape.add(tok, positions)?;
            inputs.push(tape.add(x, seg)?);
            let bias: Vec<f64> = ids.iter().map(|&id| if id == PAD { MASKED_SCORE } else { 0.0 }).collect();
            masks.push(Some(tape.constant(Tensor::new(vec![len], bias)?)?));
        }
        let mut grid = tape.stack(&inputs)?;
        for (i, block) in self.blocks.iter().enumerate() {
            grid = match &self.inflow {
                Some(flow) if i == self.inflow_block => transformer_block_inflow(tape, grid, block, flow, &masks)?,
                _ => {
                    let mut outs = Vec::with_capacity(masks.len());
                    for (k, mask) in masks.iter().enumerate() {
                        let h = tape.index0(grid, k)?;
                        outs.push(transformer_block(tape, h, block, *mask)?);
                    }
                    tape.stack(&outs)?
                }
            };
        }
        let context = tape.narrow(grid, 1, 0, m)?;
        match &self.head {
            SpanHeadParams::Plain { w, b } => {
                let (w, b) = (tape.param(*w)?, tape.param(*b)?);
                span_head(tape, context, w, b)
            }
            SpanHeadParams::ExFlow(ex) => exflow_predict(tape, context, ex),
        }
    }
}
