//! Synthetic conversational QA whose follow-up questions can only be
//! answered from dialogue history.
//!
//! A passage is a list of sentences `the <color> <container> holds the
//! <object> .`, with colors and objects unique within the passage. The
//! first turn asks about one sentence directly; later turns either ask
//! another direct question (which moves the focus) or a pronoun follow-up
//! ("what color is it ?") about the sentence currently in focus.

use std::ops::RangeInclusive;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::data::{Dialogue, Turn};

pub const COLORS: [&str; 12] =
    ["red", "blue", "green", "yellow", "white", "black", "purple", "orange", "pink", "gray", "brown", "silver"];
pub const CONTAINERS: [&str; 6] = ["box", "bag", "jar", "chest", "basket", "crate"];
pub const OBJECTS: [&str; 14] =
    ["key", "coin", "ring", "map", "book", "apple", "watch", "shell", "stone", "pen", "card", "bell", "lamp", "cup"];

pub const SENTENCE_LEN: usize = 7;
// Token offsets within a sentence.
const COLOR: usize = 1;
const CONTAINER: usize = 2;
const OBJECT: usize = 5;

/// Probability that a turn after the first is a follow-up.
pub const FOLLOW_UP_RATE: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fact {
    pub color: &'static str,
    pub container: &'static str,
    pub object: &'static str,
}

fn sentence(f: &Fact) -> [&'static str; SENTENCE_LEN] {
    ["the", f.color, f.container, "holds", "the", f.object, "."]
}

/// Generates `count` dialogues whose context length in tokens lies in
/// `m_range` (a whole number of sentences) and turn count in `t_range`.
pub fn generate_synthetic_qa(
    rng: &mut Rng,
    count: usize,
    m_range: RangeInclusive<usize>,
    t_range: RangeInclusive<usize>,
) -> Result<Vec<Dialogue>> {
    let lo = m_range.start().div_ceil(SENTENCE_LEN).max(1);
    let hi = (m_range.end() / SENTENCE_LEN).min(COLORS.len()).min(OBJECTS.len());
    if lo > hi {
        return Err(Error::Usage(format!("context range {m_range:?} fits no whole number of {SENTENCE_LEN}-token sentences")));
    }
    if count == 0 || *t_range.start() == 0 || t_range.is_empty() {
        return Err(Error::Usage("need count >= 1 and a non-empty turn range starting at 1 or more".into()));
    }
    Ok((0..count).map(|_| dialogue(rng, lo..=hi, t_range.clone())).collect())
}

fn dialogue(rng: &mut Rng, sentences: RangeInclusive<usize>, turns: RangeInclusive<usize>) -> Dialogue {
    let n = rng.range_inclusive(*sentences.start(), *sentences.end());
    let colors = rng.sample_distinct(COLORS.len(), n);
    let objects = rng.sample_distinct(OBJECTS.len(), n);
    let facts: Vec<Fact> = (0..n)
        .map(|i| Fact {
            color: COLORS[colors[i]],
            container: CONTAINERS[rng.below(CONTAINERS.len())],
            object: OBJECTS[objects[i]],
        })
        .collect();
    let context: Vec<String> = facts.iter().flat_map(sentence).map(str::to_string).collect();

    let t = rng.range_inclusive(*turns.start(), *turns.end());
    let mut focus = 0;
    let mut out = Vec::with_capacity(t);
    for k in 0..t {
        let follow_up = k > 0 && rng.chance(FOLLOW_UP_RATE);
        let (question, at, len): (String, usize, usize) = if follow_up {
            match rng.below(3) {
                0 => ("what color is it ?".into(), COLOR, 1),
                1 => ("what is inside it ?".into(), OBJECT, 1),
                _ => ("what kind of container is it ?".into(), CONTAINER, 1),
            }
        } else {
            focus = rng.below(n);
            let f = &facts[focus];
            match rng.below(3) {
                0 => (format!("what does the {} {} hold ?", f.color, f.container), OBJECT, 1),
                1 => (format!("which container holds the {} ?", f.object), COLOR, 2),
                _ => (format!("what color is the {} that holds the {} ?", f.container, f.object), COLOR, 1),
            }
        };
        let start = focus * SENTENCE_LEN + at;
        out.push(Turn {
            question: question.split(' ').map(str::to_string).collect(),
            span: (start, start + len - 1),
            human_f1: Some(1.0),
            history_dependent: Some(follow_up),
        });
    }
    Dialogue { context, turns: out }
}
