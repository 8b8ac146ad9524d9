//! Episodes: an initial world, K instructions and their gold actions, plus
//! templated instruction generation and the line-delimited episode format.

use std::io::{BufRead, Write};
use std::path::Path;

use flowdelta::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{color_name, image_name, ALCHEMY_CAPACITY, COLOR_COUNT, IMAGE_COUNT};
use crate::world::{decode_action, decode_state, execute, feasible_actions, ActionCode, Domain, WorldState};

pub const DEFAULT_TURNS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub domain: Domain,
    pub initial: WorldState,
    pub instructions: Vec<String>,
    pub actions: Vec<ActionCode>,
    /// `W_1..W_K`, derived by replaying `actions` from `initial`.
    pub states: Vec<WorldState>,
}

impl Episode {
    /// Replays `actions` to derive the gold states. Fails if an action is
    /// rejected or the instruction and action counts differ.
    pub fn new(initial: WorldState, instructions: Vec<String>, actions: Vec<ActionCode>) -> Result<Self> {
        if instructions.len() != actions.len() {
            return Err(Error::Data(format!("{} instructions for {} actions", instructions.len(), actions.len())));
        }
        if actions.is_empty() {
            return Err(Error::Data("episode has no instructions".into()));
        }
        let states = replay(&initial, &actions).map_err(|(k, r)| Error::Data(format!("action {k} {}: {r}", actions[k])))?;
        Ok(Episode { domain: initial.domain(), initial, instructions, actions, states })
    }

    pub fn turns(&self) -> usize {
        self.actions.len()
    }

    /// `W_k` for `k` in `0..=K`.
    pub fn state(&self, k: usize) -> &WorldState {
        if k == 0 {
            &self.initial
        } else {
            &self.states[k - 1]
        }
    }

    pub fn final_state(&self) -> &WorldState {
        self.state(self.turns())
    }

    /// Whether replaying the gold actions from `W_0` reproduces every stored
    /// state.
    pub fn replay_consistent(&self) -> bool {
        replay(&self.initial, &self.actions).is_ok_and(|s| s == self.states)
    }

    pub fn to_record(&self) -> EpisodeRecord {
        EpisodeRecord {
            domain: self.domain,
            initial: self.initial.encode(),
            instructions: self.instructions.clone(),
            actions: self.actions.iter().map(ActionCode::encode).collect(),
        }
    }

    pub fn from_record(rec: &EpisodeRecord) -> Result<Self> {
        let initial = decode_state(rec.domain, &rec.initial).map_err(|e| e.in_data("initial"))?;
        let actions = rec
            .actions
            .iter()
            .enumerate()
            .map(|(k, a)| decode_action(rec.domain, a).map_err(|e| e.in_data(format!("actions[{k}]"))))
            .collect::<Result<Vec<_>>>()?;
        Episode::new(initial, rec.instructions.clone(), actions)
    }
}

/// States after each action, or the index and reason of the first rejection.
pub fn replay(initial: &WorldState, actions: &[ActionCode]) -> std::result::Result<Vec<WorldState>, (usize, crate::world::Rejection)> {
    let mut cur = initial.clone();
    let mut out = Vec::with_capacity(actions.len());
    for (k, a) in actions.iter().enumerate() {
        cur = execute(&cur, a).map_err(|r| (k, r))?;
        out.push(cur.clone());
    }
    Ok(out)
}

/// One line of an episode file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeRecord {
    pub domain: Domain,
    /// Encoded `W_0`.
    pub initial: Vec<u32>,
    pub instructions: Vec<String>,
    /// Encoded gold actions, one 3- or 4-tuple per instruction.
    pub actions: Vec<Vec<u32>>,
}

/// Parses one JSON record per non-blank line; errors name the record.
pub fn parse_episodes(reader: impl BufRead) -> Result<Vec<Episode>> {
    let mut out = Vec::new();
    let mut index = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EpisodeRecord =
            serde_json::from_str(&line).map_err(|e| Error::Data(format!("record {index}: {e}")))?;
        out.push(Episode::from_record(&rec).map_err(|e| e.in_data(format!("record {index}")))?);
        index += 1;
    }
    Ok(out)
}

pub fn load_episodes(path: &Path) -> Result<Vec<Episode>> {
    let file = std::fs::File::open(path)?;
    parse_episodes(std::io::BufReader::new(file))
}

pub fn write_episodes(mut out: impl Write, episodes: &[Episode]) -> Result<()> {
    for ep in episodes {
        let line = serde_json::to_string(&ep.to_record()).expect("record serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// A random valid initial world. Alchemy always has at least one
/// non-empty beaker and Tangrams at least two figures.
pub fn random_state(domain: Domain, rng: &mut Rng) -> WorldState {
    let color = |rng: &mut Rng| rng.range_inclusive(1, COLOR_COUNT as usize) as u32;
    let positions = match domain {
        Domain::Scene => (0..domain.positions())
            .map(|_| {
                if rng.chance(0.5) {
                    (0, 0)
                } else {
                    let shirt = color(rng);
                    (shirt, if rng.chance(0.5) { 0 } else { color(rng) })
                }
            })
            .collect(),
        Domain::Tangrams => {
            let len = rng.range_inclusive(2, domain.positions());
            let mut p: Vec<(u32, u32)> =
                rng.sample_distinct(IMAGE_COUNT as usize, len).into_iter().map(|i| (i as u32 + 1, 1)).collect();
            p.resize(domain.positions(), (0, 0));
            p
        }
        Domain::Alchemy => loop {
            let p: Vec<(u32, u32)> = (0..domain.positions())
                .map(|_| match rng.below(ALCHEMY_CAPACITY as usize + 1) as u32 {
                    0 => (0, 0),
                    u => (color(rng), u),
                })
                .collect();
            if p.iter().any(|&(_, u)| u > 0) {
                break p;
            }
        },
    };
    WorldState::new(domain, positions).expect("generator produces valid states")
}

/// A random episode of `k` feasible actions with templated instructions.
/// Deterministic given the generator state.
pub fn generate_episode(domain: Domain, rng: &mut Rng, k: usize) -> Result<Episode> {
    if k == 0 {
        return Err(Error::Usage("episodes need at least one instruction".into()));
    }
    'attempt: loop {
        let initial = random_state(domain, rng);
        let mut state = initial.clone();
        let mut focus = None;
        let (mut instructions, mut actions) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for _ in 0..k {
            // Op first, then a tuple, so ops with many tuples do not dominate.
            let options = feasible_actions(&state);
            let mut ops: Vec<u32> = options.iter().map(|a| a.op).collect();
            ops.dedup();
            let Some(&op) = rng.choose(&ops) else { continue 'attempt };
            let of_op: Vec<&ActionCode> = options.iter().filter(|a| a.op == op).collect();
            let action = **rng.choose(&of_op).expect("op has a feasible tuple");
            let (text, next_focus) = render_instruction(&state, &action, focus);
            state = execute(&state, &action).expect("feasible action");
            instructions.push(text);
            actions.push(action);
            focus = next_focus;
        }
        return Episode::new(initial, instructions, actions);
    }
}

pub fn generate_episodes(domain: Domain, rng: &mut Rng, count: usize, k: usize) -> Result<Vec<Episode>> {
    (0..count).map(|_| generate_episode(domain, rng, k)).collect()
}

const ORDINALS: [&str; 10] = ["first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth"];

/// Instruction text for `action` in `state`, and the position the next
/// instruction may refer back to with a pronoun. `focus` is the position
/// the previous instruction left in focus.
pub fn render_instruction(state: &WorldState, action: &ActionCode, focus: Option<u32>) -> (String, Option<u32>) {
    let (p1, p2) = (action.pos1, action.pos2);
    let plural = |n: u32| if n == 1 { "unit" } else { "units" };
    match (state.domain(), action.op) {
        (Domain::Scene, 0) => {
            let hat = match action.prop {
                Some(h) if h != 0 => format!(" and {} hat", with_article(color_name(h))),
                _ => String::new(),
            };
            (format!("a person in {} shirt{hat} enters at position {p1}", with_article(color_name(p2))), Some(p1))
        }
        (Domain::Scene, op) => {
            let who = person(state, p1, focus, true);
            let verb = |singular: &str| if who == "they" { singular.trim_end_matches('s').to_string() } else { singular.to_string() };
            match op {
                1 => (format!("{who} {} hats with {}", verb("swaps"), person(state, p2, focus, false)), Some(p1)),
                2 => (format!("{who} {}", verb("leaves")), None),
                3 => (format!("{who} {} to position {p2}", verb("moves")), Some(p2)),
                4 => (format!("{who} {} on {} hat", verb("puts"), with_article(color_name(p2))), Some(p1)),
                _ => (format!("{who} {} off the hat", verb("takes")), Some(p1)),
            }
        }
        (Domain::Tangrams, 0) => (format!("remove {}", figure(state, p1, focus)), None),
        (Domain::Tangrams, 1) => (format!("add the {} figure at position {p1}", image_name(p2)), Some(p1)),
        (Domain::Tangrams, 2) => {
            (format!("swap {} and {}", figure(state, p1, focus), figure(state, p2, focus)), Some(p2))
        }
        (Domain::Alchemy, 0) => {
            let u = action.prop.unwrap_or(0);
            (
                format!("pour {u} {} from {} into {}", plural(u), beaker(state, p1, focus), beaker(state, p2, focus)),
                Some(p2),
            )
        }
        (Domain::Alchemy, 1) => (format!("mix {}", beaker(state, p1, focus)), Some(p1)),
        (Domain::Alchemy, 2) => {
            let left = state.at(p1).1.saturating_sub(p2);
            (format!("drain {p2} {} from {}", plural(p2), beaker(state, p1, focus)), (left > 0).then_some(p1))
        }
        _ => (format!("do {action}"), None),
    }
}

fn with_article(word: &str) -> String {
    let article = if word.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    format!("{article} {word}")
}

fn unique_color(state: &WorldState, p: u32) -> bool {
    let c = state.at(p).0;
    state.positions().iter().filter(|&&(a, _)| a == c).count() == 1
}

fn person(state: &WorldState, p: u32, focus: Option<u32>, subject: bool) -> String {
    if focus == Some(p) {
        return if subject { "they" } else { "them" }.into();
    }
    if unique_color(state, p) {
        format!("the person in the {} shirt", color_name(state.at(p).0))
    } else {
        format!("the person at position {p}")
    }
}

fn figure(state: &WorldState, p: u32, focus: Option<u32>) -> String {
    if focus == Some(p) {
        "it".into()
    } else {
        format!("the {} figure", image_name(state.at(p).0))
    }
}

fn beaker(state: &WorldState, p: u32, focus: Option<u32>) -> String {
    if focus == Some(p) {
        "it".into()
    } else if unique_color(state, p) {
        format!("the {} beaker", color_name(state.at(p).0))
    } else {
        format!("the {} beaker", ORDINALS[p as usize - 1])
    }
}
