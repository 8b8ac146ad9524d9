//! Finite-difference gradient checks over every layer and both full models
//! at small shapes.

use crate::attention::{
    exflow_predict, self_attention_context, transformer_block, transformer_block_inflow, word_attention, ExFlowParams,
    InFlowParams, SelfAttnParams, TransformerBlockParams,
};
use crate::error::Result;
use crate::flow::{flow_mode_forward, FlowMode, FlowVariantKind};
use crate::model::{gold_marks, span_loss_on_tape, DialogueBatch, ModelConfig, ModelKind, QaModel};
use crate::recurrent::{gru_cell, gru_sequence, GruParams};
use crate::rng::Rng;
use crate::tensor::{grad_check, GradCheckReport, ParamId, ParamSet, Tape, Tensor, Var};

/// Central-difference step used by the suite.
pub const SUITE_EPS: f64 = 1e-5;
/// Maximum relative error accepted for every entry.
pub const SUITE_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct SuiteEntry {
    pub name: String,
    pub report: GradCheckReport,
}

impl SuiteEntry {
    pub fn passed(&self) -> bool {
        self.report.passes(SUITE_TOL)
    }
}

fn random(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
}

/// Loss `sum(out ⊙ w)` with fixed random `w`, so every output element has
/// its own sensitivity.
fn weighted_sum(tape: &mut Tape<'_>, out: Var, w: &Tensor) -> Result<Var> {
    let w = tape.constant(w.clone())?;
    let p = tape.mul(out, w)?;
    tape.sum(p)
}

/// Shifts every parameter off its initial value (zero biases, unit gains).
fn jitter(params: &mut ParamSet, rng: &mut Rng) -> Result<()> {
    for id in params.ids().collect::<Vec<ParamId>>() {
        let t = params.get(id).clone();
        params.set(id, Tensor::from_fn(t.shape().to_vec(), |i| t.data()[i] + rng.uniform(-0.1, 0.1)))?;
    }
    Ok(())
}

pub fn run_suite() -> Result<Vec<SuiteEntry>> {
    let mut out = Vec::new();
    let mut push = |name: &str, report: GradCheckReport| out.push(SuiteEntry { name: name.to_string(), report });

    // GRU cell and sequence.
    {
        let mut rng = Rng::new(1);
        let mut ps = ParamSet::new();
        let g = GruParams::init(&mut ps, "gru", 4, 3, &mut rng)?;
        jitter(&mut ps, &mut rng)?;
        let x = ps.add("x", random(vec![2, 4], &mut rng))?;
        let h = ps.add("h", random(vec![2, 3], &mut rng))?;
        let xs = ps.add("xs", random(vec![5, 2, 4], &mut rng))?;
        let (w1, w5) = (random(vec![2, 3], &mut rng), random(vec![5, 2, 3], &mut rng));
        push("gru_cell", grad_check(&ps, SUITE_EPS, |t| {
            let (xv, hv) = (t.param(x)?, t.param(h)?);
            let o = gru_cell(t, &g, xv, hv)?;
            weighted_sum(t, o, &w1)
        })?);
        push("gru_sequence", grad_check(&ps, SUITE_EPS, |t| {
            let (xv, hv) = (t.param(xs)?, t.param(h)?);
            let o = gru_sequence(t, &g, xv, hv)?;
            weighted_sum(t, o, &w5)
        })?);
    }

    // Flow layers at t=3, m=2, d=4, h=3.
    let modes = [
        ("flow", FlowMode::Flow),
        ("flowdelta", FlowMode::Variant(FlowVariantKind::Delta)),
        ("skipdelta", FlowMode::Variant(FlowVariantKind::SkipDelta)),
        ("doubledelta", FlowMode::Variant(FlowVariantKind::DoubleDelta)),
        ("hadamard", FlowMode::Variant(FlowVariantKind::Hadamard)),
    ];
    for (name, mode) in modes {
        let mut rng = Rng::new(2);
        let mut ps = ParamSet::new();
        let g = GruParams::init(&mut ps, "flow", mode.gru_input_width(4, 3), 3, &mut rng)?;
        jitter(&mut ps, &mut rng)?;
        let x = ps.add("input", random(vec![3, 2, 4], &mut rng))?;
        let w = random(vec![3, 2, 3], &mut rng);
        push(name, grad_check(&ps, SUITE_EPS, |t| {
            let xv = t.param(x)?;
            let o = flow_mode_forward(t, xv, &g, mode)?;
            weighted_sum(t, o, &w)
        })?);
    }

    // Attention layers.
    {
        let mut rng = Rng::new(3);
        let mut ps = ParamSet::new();
        let q = ps.add("question", random(vec![3, 4], &mut rng))?;
        let c = ps.add("context", random(vec![4, 4], &mut rng))?;
        let w = random(vec![4, 8], &mut rng);
        push("word_attention", grad_check(&ps, SUITE_EPS, |t| {
            let (qv, cv) = (t.param(q)?, t.param(c)?);
            let o = word_attention(t, qv, cv)?;
            weighted_sum(t, o, &w)
        })?);
    }
    {
        let mut rng = Rng::new(4);
        let mut ps = ParamSet::new();
        let sa = SelfAttnParams::init(&mut ps, "sa", 4, &mut rng)?;
        let c = ps.add("context", random(vec![5, 4], &mut rng))?;
        let w = random(vec![5, 4], &mut rng);
        push("self_attention", grad_check(&ps, SUITE_EPS, |t| {
            let cv = t.param(c)?;
            let o = self_attention_context(t, cv, &sa)?;
            weighted_sum(t, o, &w)
        })?);
    }
    {
        let mut rng = Rng::new(5);
        let mut ps = ParamSet::new();
        let b = TransformerBlockParams::init(&mut ps, "block", 8, 16, 2, &mut rng)?;
        jitter(&mut ps, &mut rng)?;
        let h = ps.add("h", random(vec![4, 8], &mut rng))?;
        let w = random(vec![4, 8], &mut rng);
        push("transformer_block", grad_check(&ps, SUITE_EPS, |t| {
            let hv = t.param(h)?;
            let o = transformer_block(t, hv, &b, None)?;
            weighted_sum(t, o, &w)
        })?);
    }
    {
        let mut rng = Rng::new(6);
        let mut ps = ParamSet::new();
        let delta = FlowMode::Variant(FlowVariantKind::Delta);
        let b = TransformerBlockParams::init(&mut ps, "block", 6, 12, 2, &mut rng)?;
        let f = InFlowParams::init(&mut ps, "inflow", 6, 6, delta, &mut rng)?;
        jitter(&mut ps, &mut rng)?;
        let grid = ps.add("grid", random(vec![3, 2, 6], &mut rng))?;
        let w = random(vec![3, 2, 6], &mut rng);
        push("inflow_block", grad_check(&ps, SUITE_EPS, |t| {
            let g = t.param(grid)?;
            let o = transformer_block_inflow(t, g, &b, &f, &[None, None, None])?;
            weighted_sum(t, o, &w)
        })?);
    }
    {
        let mut rng = Rng::new(7);
        let mut ps = ParamSet::new();
        let ex = ExFlowParams::init(&mut ps, "exflow", 4, 3, FlowMode::Variant(FlowVariantKind::Delta), &mut rng)?;
        jitter(&mut ps, &mut rng)?;
        let grid = ps.add("grid", random(vec![2, 4, 4], &mut rng))?;
        let (ws, we) = (random(vec![2, 4], &mut rng), random(vec![2, 4], &mut rng));
        push("exflow_head", grad_check(&ps, SUITE_EPS, |t| {
            let g = t.param(grid)?;
            let (s, e) = exflow_predict(t, g, &ex)?;
            let a = weighted_sum(t, s, &ws)?;
            let b = weighted_sum(t, e, &we)?;
            t.add(a, b)
        })?);
    }

    // Full models on one dialogue, t=2, m=3, width 8.
    for (name, kind) in [("recurrent_model", ModelKind::Recurrent), ("transformer_model", ModelKind::Transformer)] {
        let cfg = ModelConfig {
            model: kind,
            embed_dim: 8,
            encoder_hidden: 4,
            flow_hidden: 4,
            blocks: 2,
            heads: 2,
            ffn_dim: 8,
            max_question_len: 3,
            max_context_len: 4,
            ..ModelConfig::default()
        };
        let mut rng = Rng::new(8);
        let mut ps = ParamSet::new();
        let model = QaModel::init(&mut ps, &cfg, 9, &mut rng)?;
        jitter(&mut ps, &mut rng)?;
        let batch = DialogueBatch::new(vec![3, 4, 5], vec![vec![4, 6], vec![7, 8, 3]], vec![(0, 1), (2, 2)])?;
        push(name, grad_check(&ps, SUITE_EPS, |t| {
            let (s, e) = model.forward(t, &batch, &gold_marks(&batch))?;
            span_loss_on_tape(t, s, e, &batch.spans)
        })?);
    }
    Ok(out)
}
