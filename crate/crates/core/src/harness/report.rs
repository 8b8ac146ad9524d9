use std::fmt::Write as _;

use crate::error::Result;
use crate::model::{decode_span, ModelConfig, QaModel, Vocab};
use crate::tensor::ParamSet;

use super::data::Dialogue;
use super::metrics::{heq, token_f1};

/// Per-turn-index slice of an evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnBreakdown {
    pub questions: usize,
    pub f1: f64,
    pub exact: f64,
}

/// Evaluation summary. Rendered by [`EvalReport::to_text`] as `key=value`
/// lines; wall-clock time is deliberately not part of it so that repeated
/// evaluations produce identical bytes.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dialogues: usize,
    pub questions: usize,
    pub f1: f64,
    pub exact: f64,
    /// `(HEQ-Q, HEQ-D)`; absent when a human reference is missing.
    pub heq: Option<(f64, f64)>,
    /// Index `k` covers the `(k+1)`-th turn of every dialogue that has one.
    pub per_turn: Vec<TurnBreakdown>,
    /// Exact-span accuracy on history-dependent / independent turns.
    pub history_dependent: Option<TurnBreakdown>,
    pub history_independent: Option<TurnBreakdown>,
    pub seed: u64,
    pub config: ModelConfig,
    pub runtime_seconds: f64,
}

#[derive(Default)]
struct Acc {
    n: usize,
    f1: f64,
    exact: usize,
}

impl Acc {
    fn add(&mut self, f1: f64, exact: bool) {
        self.n += 1;
        self.f1 += f1;
        self.exact += usize::from(exact);
    }

    fn finish(&self) -> Option<TurnBreakdown> {
        (self.n > 0).then(|| TurnBreakdown {
            questions: self.n,
            f1: self.f1 / self.n as f64,
            exact: self.exact as f64 / self.n as f64,
        })
    }
}

pub fn evaluate(
    model: &QaModel,
    params: &ParamSet,
    vocab: &Vocab,
    dialogues: &[Dialogue],
    config: &ModelConfig,
) -> Result<EvalReport> {
    let started = std::time::Instant::now();
    let mut model_f1 = Vec::new();
    let mut human_f1 = Vec::new();
    let mut lengths = Vec::with_capacity(dialogues.len());
    let mut all = Acc::default();
    let mut per_turn: Vec<Acc> = Vec::new();
    let (mut dep, mut indep) = (Acc::default(), Acc::default());
    for d in dialogues {
        let batch = d.to_batch(vocab)?;
        let pred = model.predict(params, &batch, config.max_answer_len)?;
        lengths.push(d.turns.len());
        for (k, turn) in d.turns.iter().enumerate() {
            let span = decode_span(&pred.p_start[k], &pred.p_end[k], config.max_answer_len);
            let f1 = token_f1(d.answer(span), d.answer(turn.span));
            let exact = span == turn.span;
            all.add(f1, exact);
            if per_turn.len() <= k {
                per_turn.push(Acc::default());
            }
            per_turn[k].add(f1, exact);
            match turn.history_dependent {
                Some(true) => dep.add(f1, exact),
                Some(false) => indep.add(f1, exact),
                None => {}
            }
            model_f1.push(f1);
            human_f1.push(turn.human_f1);
        }
    }
    let overall = all.finish();
    Ok(EvalReport {
        dialogues: dialogues.len(),
        questions: all.n,
        f1: overall.as_ref().map_or(0.0, |b| b.f1),
        exact: overall.as_ref().map_or(0.0, |b| b.exact),
        heq: heq(&model_f1, &human_f1, &lengths)?,
        per_turn: per_turn.iter().filter_map(Acc::finish).collect(),
        history_dependent: dep.finish(),
        history_independent: indep.finish(),
        seed: config.seed,
        config: config.clone(),
        runtime_seconds: started.elapsed().as_secs_f64(),
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("dialogues", &self.dialogues);
        kv("questions", &self.questions);
        kv("f1", &self.f1);
        kv("exact", &self.exact);
        match self.heq {
            Some((q, d)) => {
                kv("heq_q", &q);
                kv("heq_d", &d);
            }
            None => {
                kv("heq_q", &"absent");
                kv("heq_d", &"absent");
            }
        }
        for (k, b) in self.per_turn.iter().enumerate() {
            kv(&format!("turn{}.questions", k + 1), &b.questions);
            kv(&format!("turn{}.f1", k + 1), &b.f1);
            kv(&format!("turn{}.exact", k + 1), &b.exact);
        }
        for (name, b) in [("history_dependent", &self.history_dependent), ("history_independent", &self.history_independent)] {
            if let Some(b) = b {
                kv(&format!("{name}.questions"), &b.questions);
                kv(&format!("{name}.f1"), &b.f1);
                kv(&format!("{name}.exact"), &b.exact);
            }
        }
        kv("seed", &self.seed);
        for line in self.config.to_toml_string().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                kv(&format!("config.{k}"), &v);
            }
        }
        out
    }
}
