//! Data ingestion, metrics, synthetic data and evaluation reports.

pub mod data;
pub mod gradsuite;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod synth;

pub use data::{build_vocab, load_dialogues, parse_dialogues, write_dialogues, Dialogue, DialogueRecord, QaRecord, Turn};
pub use metrics::{heq, normalize_answer, token_f1};
pub use pipeline::{synthetic_experiment, synthetic_split, train_on_dialogues, Split, TrainedModel};
pub use report::{evaluate, EvalReport, TurnBreakdown};
pub use synth::generate_synthetic_qa;
