//! Attention layers and the transformer block with its two FlowDelta
//! insertion points.

use crate::error::{Error, Result};
use crate::flow::{flow_mode_forward, FlowMode};
use crate::recurrent::GruParams;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamSet, Tape, Var};

pub const LN_EPS: f64 = 1e-5;

/// Score added to masked attention keys. Finite, and large enough that the
/// key's softmax weight underflows to exactly zero.
pub const MASKED_SCORE: f64 = -1e9;

fn expect_rank2<S: Scalar>(tape: &Tape<'_, S>, op: &'static str, v: Var) -> Result<(usize, usize)> {
    match tape.shape(v) {
        &[a, b] => Ok((a, b)),
        other => Err(Error::dim(op, format!("expected a matrix, got {other:?}"))),
    }
}

/// Attends from every context word over the question words with scaled
/// dot products and appends the attended question summary:
/// `[m × d], [n × d] -> [m × 2d]`.
pub fn word_attention<S: Scalar>(tape: &mut Tape<'_, S>, question: Var, context: Var) -> Result<Var> {
    let (_, dq) = expect_rank2(tape, "word_attention", question)?;
    let (_, dc) = expect_rank2(tape, "word_attention", context)?;
    if dq != dc {
        return Err(Error::dim("word_attention", format!("question width {dq} vs context width {dc}")));
    }
    let summary = attend(tape, context, question, question, None)?;
    tape.concat(&[context, summary], 1)
}

/// The attended question summary alone, `[m × d]`.
pub fn word_attention_summary<S: Scalar>(tape: &mut Tape<'_, S>, question: Var, context: Var) -> Result<Var> {
    attend(tape, context, question, question, None)
}

/// `softmax(q·kᵀ / sqrt(width) + bias)·v`.
fn attend<S: Scalar>(tape: &mut Tape<'_, S>, q: Var, k: Var, v: Var, key_bias: Option<Var>) -> Result<Var> {
    let width = tape.shape(q)[1];
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let mut scores = tape.scale(scores, S::lit(1.0 / (width as f64).sqrt()))?;
    if let Some(bias) = key_bias {
        scores = tape.add(scores, bias)?;
    }
    let weights = tape.softmax(scores, 1)?;
    tape.matmul(weights, v)
}

/// Single-head self-attention projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SelfAttnParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub width: usize,
}

impl SelfAttnParams {
    pub fn init<S: Scalar>(params: &mut ParamSet<S>, prefix: &str, width: usize, rng: &mut Rng) -> Result<Self> {
        Ok(SelfAttnParams {
            w_q: params.glorot(format!("{prefix}.w_q"), width, width, rng)?,
            w_k: params.glorot(format!("{prefix}.w_k"), width, width, rng)?,
            w_v: params.glorot(format!("{prefix}.w_v"), width, width, rng)?,
            width,
        })
    }
}

/// Scaled dot-product self-attention over the context words, `[m × d] -> [m × d]`.
pub fn self_attention_context<S: Scalar>(tape: &mut Tape<'_, S>, context: Var, p: &SelfAttnParams) -> Result<Var> {
    let (_, d) = expect_rank2(tape, "self_attention_context", context)?;
    if d != p.width {
        return Err(Error::dim("self_attention_context", format!("context width {d} vs attention width {}", p.width)));
    }
    let (wq, wk, wv) = (tape.param(p.w_q)?, tape.param(p.w_k)?, tape.param(p.w_v)?);
    let q = tape.matmul(context, wq)?;
    let k = tape.matmul(context, wk)?;
    let v = tape.matmul(context, wv)?;
    attend(tape, q, k, v, None)
}

/// One transformer layer: multi-head attention, two layer norms and a
/// GELU feed-forward network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformerBlockParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub w_o: ParamId,
    pub w_1: ParamId,
    pub b_1: ParamId,
    pub w_2: ParamId,
    pub b_2: ParamId,
    pub ln1_gamma: ParamId,
    pub ln1_beta: ParamId,
    pub ln2_gamma: ParamId,
    pub ln2_beta: ParamId,
    pub width: usize,
    pub ffn_width: usize,
    pub heads: usize,
}

impl TransformerBlockParams {
    pub fn init<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        width: usize,
        ffn_width: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if heads == 0 || width % heads != 0 {
            return Err(Error::dim("transformer_block", format!("width {width} not divisible by {heads} heads")));
        }
        let n = |s: &str| format!("{prefix}.{s}");
        Ok(TransformerBlockParams {
            w_q: params.glorot(n("w_q"), width, width, rng)?,
            w_k: params.glorot(n("w_k"), width, width, rng)?,
            w_v: params.glorot(n("w_v"), width, width, rng)?,
            w_o: params.glorot(n("w_o"), width, width, rng)?,
            w_1: params.glorot(n("w_1"), width, ffn_width, rng)?,
            b_1: params.zeros(n("b_1"), vec![ffn_width])?,
            w_2: params.glorot(n("w_2"), ffn_width, width, rng)?,
            b_2: params.zeros(n("b_2"), vec![width])?,
            ln1_gamma: params.ones(n("ln1_gamma"), vec![width])?,
            ln1_beta: params.zeros(n("ln1_beta"), vec![width])?,
            ln2_gamma: params.ones(n("ln2_gamma"), vec![width])?,
            ln2_beta: params.zeros(n("ln2_beta"), vec![width])?,
            width,
            ffn_width,
            heads,
        })
    }
}

/// Multi-head attention over the rows of `h [L × d]`. `key_bias [L]`
/// masks keys (0 keeps, [`MASKED_SCORE`] drops).
pub fn multi_head_attention<S: Scalar>(
    tape: &mut Tape<'_, S>,
    h: Var,
    p: &TransformerBlockParams,
    key_bias: Option<Var>,
) -> Result<Var> {
    let (_, d) = expect_rank2(tape, "multi_head_attention", h)?;
    if d != p.width {
        return Err(Error::dim("multi_head_attention", format!("input width {d} vs block width {}", p.width)));
    }
    let (wq, wk, wv, wo) = (tape.param(p.w_q)?, tape.param(p.w_k)?, tape.param(p.w_v)?, tape.param(p.w_o)?);
    let q = tape.matmul(h, wq)?;
    let k = tape.matmul(h, wk)?;
    let v = tape.matmul(h, wv)?;
    let head_width = d / p.heads;
    let mut heads = Vec::with_capacity(p.heads);
    for i in 0..p.heads {
        let qi = tape.narrow(q, 1, i * head_width, head_width)?;
        let ki = tape.narrow(k, 1, i * head_width, head_width)?;
        let vi = tape.narrow(v, 1, i * head_width, head_width)?;
        heads.push(attend(tape, qi, ki, vi, key_bias)?);
    }
    let joined = if heads.len() == 1 { heads[0] } else { tape.concat(&heads, 1)? };
    tape.matmul(joined, wo)
}

/// `FFN(LN(h + MH(h)))`, the sublayer whose output is added back to `h`.
fn attention_sublayer<S: Scalar>(
    tape: &mut Tape<'_, S>,
    h: Var,
    p: &TransformerBlockParams,
    key_bias: Option<Var>,
) -> Result<Var> {
    let mh = multi_head_attention(tape, h, p, key_bias)?;
    let res = tape.add(h, mh)?;
    let (g1, b1) = (tape.param(p.ln1_gamma)?, tape.param(p.ln1_beta)?);
    let u = tape.layer_norm(res, g1, b1, S::lit(LN_EPS))?;
    let (w1, bias1, w2, bias2) = (tape.param(p.w_1)?, tape.param(p.b_1)?, tape.param(p.w_2)?, tape.param(p.b_2)?);
    let hidden = tape.linear(u, w1, Some(bias1))?;
    let hidden = tape.gelu(hidden)?;
    tape.linear(hidden, w2, Some(bias2))
}

/// `LN(h + SA(h))` with `SA(h) = FFN(LN(h + MH(h)))`, on one `[L × d]` sequence.
pub fn transformer_block<S: Scalar>(
    tape: &mut Tape<'_, S>,
    h: Var,
    p: &TransformerBlockParams,
    key_bias: Option<Var>,
) -> Result<Var> {
    let sa = attention_sublayer(tape, h, p, key_bias)?;
    let res = tape.add(h, sa)?;
    let (g2, b2) = (tape.param(p.ln2_gamma)?, tape.param(p.ln2_beta)?);
    tape.layer_norm(res, g2, b2, S::lit(LN_EPS))
}

/// Flow branch placed inside the last transformer block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InFlowParams {
    pub gru: GruParams,
    /// `[flow hidden × d]` projection back to the residual width.
    pub proj: ParamId,
    pub mode: FlowMode,
}

impl InFlowParams {
    pub fn init<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        width: usize,
        flow_hidden: usize,
        mode: FlowMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        if mode.is_none() {
            return Err(Error::Usage("inFlow branch needs a flow mode".into()));
        }
        let gru = GruParams::init(params, &format!("{prefix}.gru"), mode.gru_input_width(width, flow_hidden), flow_hidden, rng)?;
        let proj = params.glorot(format!("{prefix}.proj"), flow_hidden, width, rng)?;
        Ok(InFlowParams { gru, proj, mode })
    }
}

/// Last-block variant: per turn `h_L = LN(h + SA(h) + P·FlowDelta(h))`,
/// with the flow term computed across turns on the whole `[t × L × d]` grid.
pub fn transformer_block_inflow<S: Scalar>(
    tape: &mut Tape<'_, S>,
    grid: Var,
    block: &TransformerBlockParams,
    flow: &InFlowParams,
    key_bias: &[Option<Var>],
) -> Result<Var> {
    let shape = tape.shape(grid).to_vec();
    if shape.len() != 3 || shape[2] != block.width {
        return Err(Error::dim(
            "transformer_block_inflow",
            format!("grid {shape:?} for block width {}", block.width),
        ));
    }
    let turns = shape[0];
    if key_bias.len() != turns {
        return Err(Error::Usage(format!("{} key masks for {turns} turns", key_bias.len())));
    }
    let f = flow_mode_forward(tape, grid, &flow.gru, flow.mode)?;
    let proj = tape.param(flow.proj)?;
    let f = tape.linear(f, proj, None)?;
    let (g2, b2) = (tape.param(block.ln2_gamma)?, tape.param(block.ln2_beta)?);
    let mut outs = Vec::with_capacity(turns);
    for (k, bias) in key_bias.iter().enumerate() {
        let h = tape.index0(grid, k)?;
        let sa = attention_sublayer(tape, h, block, *bias)?;
        let res = tape.add(h, sa)?;
        let fk = tape.index0(f, k)?;
        let res = tape.add(res, fk)?;
        outs.push(tape.layer_norm(res, g2, b2, S::lit(LN_EPS))?);
    }
    tape.stack(&outs)
}

/// Affine start/end head: `[t × m × D] -> (P^S, P^E)`, each `[t × m]`,
/// normalised over positions within each turn.
pub fn span_head<S: Scalar>(tape: &mut Tape<'_, S>, reps: Var, w: Var, b: Var) -> Result<(Var, Var)> {
    let shape = tape.shape(reps).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("span_head", format!("expected [t × m × D], got {shape:?}")));
    }
    let (t, m) = (shape[0], shape[1]);
    if tape.shape(w) != [shape[2], 2] {
        return Err(Error::dim("span_head", format!("weights {:?} for features {shape:?}", tape.shape(w))));
    }
    let logits = tape.linear(reps, w, Some(b))?;
    let mut probs = [None, None];
    for (col, slot) in probs.iter_mut().enumerate() {
        let l = tape.narrow(logits, 2, col, 1)?;
        let l = tape.reshape(l, vec![t, m])?;
        *slot = Some(tape.softmax(l, 1)?);
    }
    Ok((probs[0].unwrap(), probs[1].unwrap()))
}

/// Flow branch concatenated before the span head.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExFlowParams {
    pub gru: GruParams,
    /// `[(d + flow hidden) × 2]`; rows `d..` weight the flow features.
    pub head_w: ParamId,
    pub head_b: ParamId,
    pub mode: FlowMode,
}

impl ExFlowParams {
    pub fn init<S: Scalar>(
        params: &mut ParamSet<S>,
        prefix: &str,
        width: usize,
        flow_hidden: usize,
        mode: FlowMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        if mode.is_none() {
            return Err(Error::Usage("exFlow branch needs a flow mode".into()));
        }
        let gru = GruParams::init(params, &format!("{prefix}.gru"), mode.gru_input_width(width, flow_hidden), flow_hidden, rng)?;
        let head_w = params.glorot(format!("{prefix}.head_w"), width + flow_hidden, 2, rng)?;
        let head_b = params.zeros(format!("{prefix}.head_b"), vec![2])?;
        Ok(ExFlowParams { gru, head_w, head_b, mode })
    }
}

/// `P^S, P^E = NN([h_L ; FlowDelta(h_L)])` over a `[t × m × d]` grid.
pub fn exflow_predict<S: Scalar>(tape: &mut Tape<'_, S>, h_last: Var, p: &ExFlowParams) -> Result<(Var, Var)> {
    let f = flow_mode_forward(tape, h_last, &p.gru, p.mode)?;
    let joined = tape.concat(&[h_last, f], 2)?;
    let (w, b) = (tape.param(p.head_w)?, tape.param(p.head_b)?);
    span_head(tape, joined, w, b)
}
