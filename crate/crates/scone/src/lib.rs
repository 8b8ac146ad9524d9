//! A SCONE-style sequential instruction simulator (Scene, Tangrams,
//! Alchemy) and its reduction to conversational machine comprehension.
//!
//! Worlds are fixed-length lists of integer pairs, actions are 3- or
//! 4-integer tuples, and [`execute`] is the deterministic transition
//! function. Code tables are frozen in [`tables`] and shipped as
//! `data/tables.json`.

pub mod episode;
pub mod error;
pub mod reduce;
pub mod score;
pub mod tables;
pub mod world;

pub use episode::{generate_episode, generate_episodes, load_episodes, parse_episodes, write_episodes, Episode, DEFAULT_TURNS};
pub use error::{Error, Result};
pub use reduce::{decode_target, reduce_to_mc, render_context, ActionTarget, ContextMode, SconeBatch};
pub use score::{dialogue_accuracy, parse_predictions, score, SconeScore};
pub use world::{
    decode_action, decode_state, encode_action, encode_state, execute, ActionCode, Domain, Reason, Rejection, WorldState,
};
