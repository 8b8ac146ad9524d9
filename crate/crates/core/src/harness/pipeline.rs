//! The standard synthetic experiment: seeded data splits and training from
//! dialogues to a checkpoint. Shared by the command line and the tests.

use std::fmt::Write as _;
use std::ops::RangeInclusive;

use crate::error::Result;
use crate::model::{train, Checkpoint, EpochMetrics, ModelConfig, QaModel};
use crate::rng::Rng;
use crate::tensor::ParamSet;

use super::data::{build_vocab, Dialogue};
use super::synth::generate_synthetic_qa;

pub const TRAIN_DIALOGUES: usize = 500;
pub const HELD_OUT_DIALOGUES: usize = 100;
/// Context length of generated passages, in tokens.
pub const CONTEXT_TOKENS: RangeInclusive<usize> = 21..=40;
pub const TURNS: RangeInclusive<usize> = 1..=4;

/// Which generated split to draw; each has its own random stream, so the
/// held-out set never overlaps the training draw for the same seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    HeldOut,
}

impl Split {
    fn stream(self) -> u64 {
        match self {
            Split::Train => 11,
            Split::Dev => 12,
            Split::HeldOut => 13,
        }
    }

    pub fn default_count(self) -> usize {
        match self {
            Split::Train => TRAIN_DIALOGUES,
            Split::Dev | Split::HeldOut => HELD_OUT_DIALOGUES,
        }
    }
}

pub fn synthetic_split(seed: u64, split: Split, count: usize) -> Result<Vec<Dialogue>> {
    generate_synthetic_qa(&mut Rng::new(seed).fork(split.stream()), count, CONTEXT_TOKENS, TURNS)
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub checkpoint: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochMetrics>,
}

impl TrainedModel {
    /// The metrics log: one line per epoch, then the selected epoch.
    pub fn log_text(&self) -> String {
        let mut out = String::new();
        for m in &self.log {
            let _ = writeln!(out, "{m}");
        }
        let _ = writeln!(out, "best_epoch={}", self.best_epoch);
        out
    }
}

/// Builds the vocabulary from `train`, initializes the configured model
/// from `cfg.seed` and trains it; `dev` (possibly empty) selects the epoch.
pub fn train_on_dialogues(cfg: &ModelConfig, train_set: &[Dialogue], dev: &[Dialogue]) -> Result<TrainedModel> {
    cfg.validate()?;
    let vocab = build_vocab(train_set);
    let mut params = ParamSet::new();
    let model = QaModel::init(&mut params, cfg, vocab.len(), &mut Rng::new(cfg.seed))?;
    let batches = train_set.iter().map(|d| d.to_batch(&vocab)).collect::<Result<Vec<_>>>()?;
    let dev_batches = dev.iter().map(|d| d.to_batch(&vocab)).collect::<Result<Vec<_>>>()?;
    log::info!("{} model, {} parameters, {} training dialogues", cfg.model, params.total_elements(), batches.len());
    let outcome = train(&model, params, &batches, &dev_batches, cfg)?;
    Ok(TrainedModel {
        checkpoint: Checkpoint { config: cfg.clone(), vocab, params: outcome.params },
        best_epoch: outcome.best_epoch,
        log: outcome.log,
    })
}

/// Trains on the default synthetic split for `cfg.seed` and evaluates on the
/// matching held-out split.
pub fn synthetic_experiment(cfg: &ModelConfig) -> Result<(TrainedModel, super::EvalReport)> {
    let train_set = synthetic_split(cfg.seed, Split::Train, TRAIN_DIALOGUES)?;
    let held_out = synthetic_split(cfg.seed, Split::HeldOut, HELD_OUT_DIALOGUES)?;
    let trained = train_on_dialogues(cfg, &train_set, &[])?;
    let ck = &trained.checkpoint;
    let report = super::evaluate(&ck.model()?, &ck.params, &ck.vocab, &held_out, cfg)?;
    Ok((trained, report))
}
