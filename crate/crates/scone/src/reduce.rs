//! Reduction of an episode to machine comprehension: the rendered world
//! state is the context, each instruction a question, and each gold action
//! a target of context pointers (for position slots) plus class labels (for
//! the op and code slots).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::episode::Episode;
use crate::tables::{op_spec, Slot};
use crate::world::{ActionCode, Domain, WorldState};

/// Separates consecutive states in [`ContextMode::History`] contexts.
pub const STATE_SEPARATOR: &str = "|";
/// Tokens per rendered position: marker, first code, second code.
pub const TOKENS_PER_POSITION: usize = 3;

/// Which previous world states make up the context of turn `k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextMode {
    /// `W_{k-1}` only.
    #[default]
    Latest,
    /// `W_0 | W_1 | ... | W_{k-1}`.
    History,
}

/// Position `p` with pair `(a, b)` renders as `#p a b`.
pub fn render_state(state: &WorldState) -> Vec<String> {
    state
        .positions()
        .iter()
        .enumerate()
        .flat_map(|(i, &(a, b))| [format!("#{}", i + 1), a.to_string(), b.to_string()])
        .collect()
}

/// Context for the turn following `states` (`W_0..W_{k-1}`, non-empty).
pub fn render_context(states: &[WorldState], mode: ContextMode) -> Vec<String> {
    match mode {
        ContextMode::Latest => render_state(states.last().expect("at least one state")),
        ContextMode::History => {
            let mut out = Vec::new();
            for (i, s) in states.iter().enumerate() {
                if i > 0 {
                    out.push(STATE_SEPARATOR.to_string());
                }
                out.extend(render_state(s));
            }
            out
        }
    }
}

/// An action as a comprehension target. Pointers index the context token
/// `#p` of the most recent state; `values` holds the code slots in order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionTarget {
    pub op: u32,
    pub pointers: Vec<usize>,
    pub values: Vec<u32>,
}

fn latest_offset(domain: Domain, context_len: usize) -> Result<usize> {
    context_len
        .checked_sub(TOKENS_PER_POSITION * domain.positions())
        .ok_or_else(|| Error::Data(format!("context of {context_len} tokens is shorter than one {domain} state")))
}

pub fn action_target(domain: Domain, action: &ActionCode, context_len: usize) -> Result<ActionTarget> {
    let spec = op_spec(domain, action.op).ok_or_else(|| Error::Data(format!("unknown {domain} op {}", action.op)))?;
    let base = latest_offset(domain, context_len)?;
    let slots = [Some(action.pos1), Some(action.pos2), action.prop];
    let mut target = ActionTarget { op: action.op, pointers: Vec::new(), values: Vec::new() };
    for (slot, v) in spec.slots.iter().zip(slots) {
        let v = v.ok_or_else(|| Error::Data(format!("action {action} is missing a slot")))?;
        match slot {
            Slot::Position => target.pointers.push(base + TOKENS_PER_POSITION * (v as usize - 1)),
            Slot::Unused => {}
            Slot::Code { .. } => target.values.push(v),
        }
    }
    Ok(target)
}

/// Inverse of [`action_target`]: reads positions back from the `#p` tokens
/// the pointers land on.
pub fn decode_target(domain: Domain, target: &ActionTarget, context: &[String]) -> Result<ActionCode> {
    let spec = op_spec(domain, target.op).ok_or_else(|| Error::Data(format!("unknown {domain} op {}", target.op)))?;
    let (mut pointers, mut values) = (target.pointers.iter(), target.values.iter());
    let mut slots = Vec::with_capacity(3);
    for slot in spec.slots {
        let v = match slot {
            Slot::Position => {
                let &i = pointers.next().ok_or_else(|| Error::Data("too few pointers".into()))?;
                context
                    .get(i)
                    .and_then(|t| t.strip_prefix('#'))
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| Error::Data(format!("pointer {i} does not land on a position marker")))?
            }
            Slot::Unused => 0,
            Slot::Code { .. } => *values.next().ok_or_else(|| Error::Data("too few values".into()))?,
        };
        slots.push(v);
    }
    if pointers.next().is_some() || values.next().is_some() {
        return Err(Error::Data(format!("target has extra slots for {domain} op {}", target.op)));
    }
    let mut codes = vec![target.op];
    codes.extend(slots);
    ActionCode::from_slice(&codes)
}

/// One episode as a comprehension dialogue. Unlike a QA dialogue the
/// context changes every turn, so it is stored per turn.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SconeBatch {
    pub domain: Domain,
    pub mode: ContextMode,
    pub contexts: Vec<Vec<String>>,
    pub questions: Vec<Vec<String>>,
    pub targets: Vec<ActionTarget>,
}

impl SconeBatch {
    pub fn turns(&self) -> usize {
        self.questions.len()
    }
}

/// Contexts are rendered from the gold previous states (teacher forcing).
pub fn reduce_to_mc(ep: &Episode, mode: ContextMode) -> Result<SconeBatch> {
    let mut history = vec![ep.initial.clone()];
    let mut batch = SconeBatch { domain: ep.domain, mode, contexts: Vec::new(), questions: Vec::new(), targets: Vec::new() };
    for (k, (text, action)) in ep.instructions.iter().zip(&ep.actions).enumerate() {
        let context = render_context(&history, mode);
        batch.targets.push(action_target(ep.domain, action, context.len())?);
        batch.contexts.push(context);
        batch.questions.push(flowdelta::harness::data::tokenize(text));
        history.push(ep.states[k].clone());
    }
    Ok(batch)
}
