use std::fmt;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ParamSet, Tape};

use super::{decode_span, gold_marks, span_loss_on_tape, DialogueBatch, ModelConfig, QaModel};

/// One line of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    /// Exact-span accuracy on the dev set, when one is given.
    pub dev_exact: Option<f64>,
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch={} steps={} loss={}", self.epoch, self.steps, self.mean_loss)?;
        match self.dev_exact {
            Some(acc) => write!(f, " dev_exact={acc}"),
            None => Ok(()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy (the last epoch
    /// without a dev set; the initial ones when `epochs` is 0).
    pub params: ParamSet,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
}

/// Per-dialogue SGD with global-norm clipping. Dialogues are visited in an
/// order shuffled each epoch by a generator derived from `cfg.seed`, so a
/// run is reproducible bit for bit.
pub fn train(
    model: &QaModel,
    mut params: ParamSet,
    data: &[DialogueBatch],
    dev: &[DialogueBatch],
    cfg: &ModelConfig,
) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    cfg.validate()?;
    let mut order_rng = Rng::new(cfg.seed).fork(1);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut total = 0.0;
        for (step, &i) in order.iter().enumerate() {
            let at = |e: Error| match e {
                Error::Numeric(msg) => Error::Numeric(format!("diverged at epoch {epoch} step {}: {msg}", step + 1)),
                other => other,
            };
            let batch = &data[i];
            let grads = {
                let mut tape = Tape::with_params(&params);
                let (ps, pe) = model.forward(&mut tape, batch, &gold_marks(batch)).map_err(at)?;
                let loss = span_loss_on_tape(&mut tape, ps, pe, &batch.spans).map_err(at)?;
                total += tape.value(loss).data()[0];
                tape.backward(loss).map_err(at)?
            };
            grads.apply_sgd(&mut params, cfg.learning_rate, Some(cfg.clip_norm));
        }
        let mean_loss = total / data.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!("diverged at epoch {epoch}: mean loss {mean_loss}")));
        }
        let dev_exact = if dev.is_empty() { None } else { Some(evaluate_spans(model, &params, dev, cfg.max_answer_len)?.0) };
        let metrics = EpochMetrics { epoch, steps: data.len(), mean_loss, dev_exact };
        log::info!("{metrics}");
        let score = dev_exact.unwrap_or(f64::INFINITY);
        if score > best.2 || dev.is_empty() {
            best = (params.clone(), epoch, score);
        }
        log.push(metrics);
    }
    Ok(TrainOutcome { params: best.0, best_epoch: best.1, log })
}

/// Exact-span accuracy over all turns, plus the decoded spans per dialogue.
pub fn evaluate_spans(
    model: &QaModel,
    params: &ParamSet,
    data: &[DialogueBatch],
    max_answer_len: usize,
) -> Result<(f64, Vec<Vec<(usize, usize)>>)> {
    let mut hits = 0usize;
    let mut turns = 0usize;
    let mut all = Vec::with_capacity(data.len());
    for batch in data {
        let pred = model.predict(params, batch, max_answer_len)?;
        let spans: Vec<(usize, usize)> =
            pred.p_start.iter().zip(&pred.p_end).map(|(s, e)| decode_span(s, e, max_answer_len)).collect();
        hits += spans.iter().zip(&batch.spans).filter(|(p, g)| p == g).count();
        turns += spans.len();
        all.push(spans);
    }
    Ok((if turns == 0 { 0.0 } else { hits as f64 / turns as f64 }, all))
}
