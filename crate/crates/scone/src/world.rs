//! World states, action codes and the transition function.
//!
//! Positions are 1-based everywhere, as in the action tuple `(1, 3, 4)`
//! ("swap the hats at positions 3 and 4"). The code tables live in
//! [`crate::tables`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{op_spec, Slot, ALCHEMY_BROWN, ALCHEMY_CAPACITY, COLOR_COUNT, IMAGE_COUNT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Scene,
    Tangrams,
    Alchemy,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Scene, Domain::Tangrams, Domain::Alchemy];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Scene => "scene",
            Domain::Tangrams => "tangrams",
            Domain::Alchemy => "alchemy",
        }
    }

    /// Number of encoded positions (Tangrams: the maximum row length).
    pub fn positions(self) -> usize {
        match self {
            Domain::Scene => 10,
            Domain::Tangrams => 5,
            Domain::Alchemy => 7,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown domain {s:?} (scene, tangrams, alchemy)")))
    }
}

/// One world as a fixed-length list of integer pairs:
///
/// * Scene: `(shirt, hat)`, `(0, 0)` for an empty position, hat 0 for none.
/// * Tangrams: `(image, 1)` for the figures in order, then `(0, 0)` padding.
/// * Alchemy: `(color, units)`, `(0, 0)` for an empty beaker.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WorldState {
    domain: Domain,
    positions: Vec<(u32, u32)>,
}

impl WorldState {
    pub fn new(domain: Domain, positions: Vec<(u32, u32)>) -> Result<Self> {
        check_positions(domain, &positions)?;
        Ok(WorldState { domain, positions })
    }

    pub fn empty(domain: Domain) -> Self {
        WorldState { domain, positions: vec![(0, 0); domain.positions()] }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn positions(&self) -> &[(u32, u32)] {
        &self.positions
    }

    /// Pair at 1-based position `p`.
    pub fn at(&self, p: u32) -> (u32, u32) {
        self.positions[p as usize - 1]
    }

    /// Number of figures on a Tangrams row; occupied positions elsewhere.
    pub fn occupied(&self) -> usize {
        self.positions.iter().filter(|&&(a, _)| a != 0).count()
    }

    pub fn encode(&self) -> Vec<u32> {
        encode_state(self)
    }
}

/// Flat `[a1, b1, a2, b2, ...]` sequence; always `2 × positions` long.
pub fn encode_state(state: &WorldState) -> Vec<u32> {
    state.positions.iter().flat_map(|&(a, b)| [a, b]).collect()
}

pub fn decode_state(domain: Domain, codes: &[u32]) -> Result<WorldState> {
    let want = 2 * domain.positions();
    if codes.len() != want {
        return Err(Error::decode(codes.len().min(want), format!("{domain} state needs {want} codes, got {}", codes.len())));
    }
    let positions: Vec<(u32, u32)> = codes.chunks(2).map(|c| (c[0], c[1])).collect();
    check_positions(domain, &positions)?;
    Ok(WorldState { domain, positions })
}

fn check_positions(domain: Domain, positions: &[(u32, u32)]) -> Result<()> {
    if positions.len() != domain.positions() {
        return Err(Error::decode(
            2 * positions.len().min(domain.positions()),
            format!("{domain} state has {} positions, expected {}", positions.len(), domain.positions()),
        ));
    }
    let mut seen_empty = false;
    let mut images = [false; IMAGE_COUNT as usize + 1];
    for (i, &(a, b)) in positions.iter().enumerate() {
        let bad = |second: bool, why: String| Err(Error::decode(2 * i + second as usize, format!("position {}: {why}", i + 1)));
        match domain {
            Domain::Scene => {
                if a > COLOR_COUNT {
                    return bad(false, format!("shirt color {a} outside 0..={COLOR_COUNT}"));
                }
                if b > COLOR_COUNT {
                    return bad(true, format!("hat color {b} outside 0..={COLOR_COUNT}"));
                }
                if a == 0 && b != 0 {
                    return bad(true, "hat on an empty position".into());
                }
            }
            Domain::Tangrams => {
                if (a == 0) != (b == 0) || b > 1 {
                    return bad(true, format!("inconsistent present flag ({a}, {b})"));
                }
                if a > IMAGE_COUNT {
                    return bad(false, format!("image {a} outside 1..={IMAGE_COUNT}"));
                }
                if a == 0 {
                    seen_empty = true;
                } else if seen_empty {
                    return bad(false, "figure after an empty slot".into());
                } else if std::mem::replace(&mut images[a as usize], true) {
                    return bad(false, format!("image {a} appears twice"));
                }
            }
            Domain::Alchemy => {
                if a > ALCHEMY_BROWN {
                    return bad(false, format!("liquid color {a} outside 0..={ALCHEMY_BROWN}"));
                }
                if b > ALCHEMY_CAPACITY {
                    return bad(true, format!("{b} units exceed capacity {ALCHEMY_CAPACITY}"));
                }
                if (a == 0) != (b == 0) {
                    return bad(true, format!("color {a} with {b} units"));
                }
            }
        }
    }
    Ok(())
}

/// A logical form: `(op, pos1, pos2)` or `(op, pos1, pos2, prop)`. What each
/// slot means depends on the op; see [`crate::tables::op_spec`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ActionCode {
    pub op: u32,
    pub pos1: u32,
    pub pos2: u32,
    pub prop: Option<u32>,
}

impl ActionCode {
    pub fn new(op: u32, pos1: u32, pos2: u32) -> Self {
        ActionCode { op, pos1, pos2, prop: None }
    }

    pub fn with_prop(op: u32, pos1: u32, pos2: u32, prop: u32) -> Self {
        ActionCode { op, pos1, pos2, prop: Some(prop) }
    }

    /// Reads a 3- or 4-tuple without checking it against any domain.
    pub fn from_slice(codes: &[u32]) -> Result<Self> {
        match *codes {
            [op, a, b] => Ok(ActionCode::new(op, a, b)),
            [op, a, b, c] => Ok(ActionCode::with_prop(op, a, b, c)),
            _ => Err(Error::decode(codes.len().min(4), format!("action needs 3 or 4 integers, got {}", codes.len()))),
        }
    }

    pub fn encode(&self) -> Vec<u32> {
        encode_action(self)
    }

    fn slots(&self) -> [Option<u32>; 3] {
        [Some(self.pos1), Some(self.pos2), self.prop]
    }
}

impl fmt::Display for ActionCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.prop {
            Some(p) => write!(f, "({}, {}, {}, {p})", self.op, self.pos1, self.pos2),
            None => write!(f, "({}, {}, {})", self.op, self.pos1, self.pos2),
        }
    }
}

pub fn encode_action(a: &ActionCode) -> Vec<u32> {
    let mut v = vec![a.op, a.pos1, a.pos2];
    v.extend(a.prop);
    v
}

/// Inverse of [`encode_action`], checked against the domain's op table and
/// the static slot ranges.
pub fn decode_action(domain: Domain, codes: &[u32]) -> Result<ActionCode> {
    let op = *codes.first().ok_or_else(|| Error::decode(0, "empty action"))?;
    let spec = op_spec(domain, op).ok_or_else(|| Error::decode(0, format!("unknown {domain} op {op}")))?;
    if codes.len() != spec.arity() {
        return Err(Error::decode(
            codes.len().min(spec.arity()),
            format!("{domain} op {op} ({}) takes {} integers, got {}", spec.name, spec.arity(), codes.len()),
        ));
    }
    let action = ActionCode::from_slice(codes)?;
    if let Err(r) = check_static(domain, &action) {
        return Err(Error::decode(r.slot.map_or(0, |s| s + 1), r.to_string()));
    }
    Ok(action)
}

/// Why an action cannot be executed. Reason codes are stable and listed in
/// the shipped table file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Reason {
    UnknownOp = 1,
    Arity = 2,
    PositionOutOfRange = 3,
    CodeOutOfRange = 4,
    UnusedSlot = 5,
    SamePosition = 6,
    PositionEmpty = 7,
    PositionOccupied = 8,
    HatAlreadyOn = 9,
    NoHat = 10,
    OverCapacity = 11,
    InsufficientUnits = 12,
    DuplicateImage = 13,
    RowFull = 14,
    AlreadyBrown = 15,
}

impl Reason {
    pub const ALL: [Reason; 15] = [
        Reason::UnknownOp,
        Reason::Arity,
        Reason::PositionOutOfRange,
        Reason::CodeOutOfRange,
        Reason::UnusedSlot,
        Reason::SamePosition,
        Reason::PositionEmpty,
        Reason::PositionOccupied,
        Reason::HatAlreadyOn,
        Reason::NoHat,
        Reason::OverCapacity,
        Reason::InsufficientUnits,
        Reason::DuplicateImage,
        Reason::RowFull,
        Reason::AlreadyBrown,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            Reason::UnknownOp => "unknown_op",
            Reason::Arity => "arity",
            Reason::PositionOutOfRange => "position_out_of_range",
            Reason::CodeOutOfRange => "code_out_of_range",
            Reason::UnusedSlot => "unused_slot_nonzero",
            Reason::SamePosition => "same_position",
            Reason::PositionEmpty => "position_empty",
            Reason::PositionOccupied => "position_occupied",
            Reason::HatAlreadyOn => "hat_already_on",
            Reason::NoHat => "no_hat",
            Reason::OverCapacity => "over_capacity",
            Reason::InsufficientUnits => "insufficient_units",
            Reason::DuplicateImage => "duplicate_image",
            Reason::RowFull => "row_full",
            Reason::AlreadyBrown => "already_brown",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{} (reason {}){}", reason.name(), reason.code(), slot.map(|s| format!(" at slot {}", s + 1)).unwrap_or_default())]
pub struct Rejection {
    pub reason: Reason,
    /// 0-based index among `(pos1, pos2, prop)`, when one slot is to blame.
    pub slot: Option<usize>,
}

fn reject<T>(reason: Reason, slot: Option<usize>) -> std::result::Result<T, Rejection> {
    Err(Rejection { reason, slot })
}

/// Op table membership, arity and per-slot ranges; no state needed.
fn check_static(domain: Domain, a: &ActionCode) -> std::result::Result<(), Rejection> {
    let Some(spec) = op_spec(domain, a.op) else { return reject(Reason::UnknownOp, None) };
    if spec.slots.len() != 2 + a.prop.is_some() as usize {
        return reject(Reason::Arity, None);
    }
    for (i, (slot, value)) in spec.slots.iter().zip(a.slots()).enumerate() {
        let v = value.expect("arity checked");
        match *slot {
            Slot::Position if v == 0 || v as usize > domain.positions() => {
                return reject(Reason::PositionOutOfRange, Some(i))
            }
            Slot::Unused if v != 0 => return reject(Reason::UnusedSlot, Some(i)),
            Slot::Code { min, max, .. } if v < min || v > max => return reject(Reason::CodeOutOfRange, Some(i)),
            _ => {}
        }
    }
    Ok(())
}

/// Applies one action. Pure: the input state is never modified, and an
/// infeasible action yields a [`Rejection`] instead of a partial update.
pub fn execute(state: &WorldState, a: &ActionCode) -> std::result::Result<WorldState, Rejection> {
    let domain = state.domain;
    check_static(domain, a)?;
    let mut next = state.positions.clone();
    let (p1, p2) = (a.pos1 as usize - 1, a.pos2.wrapping_sub(1) as usize);
    match (domain, a.op) {
        // enter(pos, shirt, hat)
        (Domain::Scene, 0) => {
            if next[p1].0 != 0 {
                return reject(Reason::PositionOccupied, Some(0));
            }
            next[p1] = (a.pos2, a.prop.expect("arity checked"));
        }
        // swap hats
        (Domain::Scene, 1) => {
            occupied_pair(&next, p1, p2)?;
            let (h1, h2) = (next[p1].1, next[p2].1);
            next[p1].1 = h2;
            next[p2].1 = h1;
        }
        // leave
        (Domain::Scene, 2) => {
            if next[p1].0 == 0 {
                return reject(Reason::PositionEmpty, Some(0));
            }
            next[p1] = (0, 0);
        }
        // move(from, to)
        (Domain::Scene, 3) => {
            if p1 == p2 {
                return reject(Reason::SamePosition, Some(1));
            }
            if next[p1].0 == 0 {
                return reject(Reason::PositionEmpty, Some(0));
            }
            if next[p2].0 != 0 {
                return reject(Reason::PositionOccupied, Some(1));
            }
            next[p2] = next[p1];
            next[p1] = (0, 0);
        }
        // put on hat(pos, color)
        (Domain::Scene, 4) => {
            match next[p1] {
                (0, _) => return reject(Reason::PositionEmpty, Some(0)),
                (_, h) if h != 0 => return reject(Reason::HatAlreadyOn, Some(0)),
                _ => {}
            }
            next[p1].1 = a.pos2;
        }
        // take off hat
        (Domain::Scene, 5) => {
            match next[p1] {
                (0, _) => return reject(Reason::PositionEmpty, Some(0)),
                (_, 0) => return reject(Reason::NoHat, Some(0)),
                _ => {}
            }
            next[p1].1 = 0;
        }
        // remove(pos): later figures shift left
        (Domain::Tangrams, 0) => {
            if p1 >= state.occupied() {
                return reject(Reason::PositionEmpty, Some(0));
            }
            next.remove(p1);
            next.push((0, 0));
        }
        // insert(pos, image): figures from pos on shift right
        (Domain::Tangrams, 1) => {
            let len = state.occupied();
            if len == domain.positions() {
                return reject(Reason::RowFull, None);
            }
            if p1 > len {
                return reject(Reason::PositionOutOfRange, Some(0));
            }
            if next.iter().any(|&(img, _)| img == a.pos2) {
                return reject(Reason::DuplicateImage, Some(1));
            }
            next.pop();
            next.insert(p1, (a.pos2, 1));
        }
        // swap(pos1, pos2)
        (Domain::Tangrams, 2) => {
            let len = state.occupied();
            if p1 == p2 {
                return reject(Reason::SamePosition, Some(1));
            }
            for (slot, p) in [(0, p1), (1, p2)] {
                if p >= len {
                    return reject(Reason::PositionEmpty, Some(slot));
                }
            }
            next.swap(p1, p2);
        }
        // pour(src, dst, units)
        (Domain::Alchemy, 0) => {
            let units = a.prop.expect("arity checked");
            if p1 == p2 {
                return reject(Reason::SamePosition, Some(1));
            }
            let ((sc, su), (dc, du)) = (next[p1], next[p2]);
            if su < units {
                return reject(if su == 0 { Reason::PositionEmpty } else { Reason::InsufficientUnits }, Some(0));
            }
            if du + units > ALCHEMY_CAPACITY {
                return reject(Reason::OverCapacity, Some(1));
            }
            next[p1] = if su == units { (0, 0) } else { (sc, su - units) };
            next[p2] = (pour_color(sc, dc), du + units);
        }
        // mix(pos)
        (Domain::Alchemy, 1) => {
            match next[p1] {
                (0, _) => return reject(Reason::PositionEmpty, Some(0)),
                (c, _) if c == ALCHEMY_BROWN => return reject(Reason::AlreadyBrown, Some(0)),
                _ => {}
            }
            next[p1].0 = ALCHEMY_BROWN;
        }
        // drain(pos, units)
        (Domain::Alchemy, 2) => {
            let (c, u) = next[p1];
            if u == 0 {
                return reject(Reason::PositionEmpty, Some(0));
            }
            if u < a.pos2 {
                return reject(Reason::InsufficientUnits, Some(1));
            }
            next[p1] = if u == a.pos2 { (0, 0) } else { (c, u - a.pos2) };
        }
        _ => unreachable!("op table and transition function disagree"),
    }
    Ok(WorldState { domain, positions: next })
}

/// Color of the destination after pouring `src` into `dst`: an empty
/// destination takes the source color, equal colors stay, anything else
/// turns brown.
pub fn pour_color(src: u32, dst: u32) -> u32 {
    if dst == 0 || dst == src {
        src
    } else {
        ALCHEMY_BROWN
    }
}

fn occupied_pair(pos: &[(u32, u32)], p1: usize, p2: usize) -> std::result::Result<(), Rejection> {
    if p1 == p2 {
        return reject(Reason::SamePosition, Some(1));
    }
    for (slot, p) in [(0, p1), (1, p2)] {
        if pos[p].0 == 0 {
            return reject(Reason::PositionEmpty, Some(slot));
        }
    }
    Ok(())
}

/// Every action that passes the static checks for `domain`, in
/// lexicographic tuple order.
pub fn all_actions(domain: Domain) -> Vec<ActionCode> {
    let mut out = Vec::new();
    for spec in crate::tables::op_table(domain) {
        let ranges: Vec<std::ops::RangeInclusive<u32>> = spec
            .slots
            .iter()
            .map(|s| match *s {
                Slot::Position => 1..=domain.positions() as u32,
                Slot::Unused => 0..=0,
                Slot::Code { min, max, .. } => min..=max,
            })
            .collect();
        for a in ranges[0].clone() {
            for b in ranges[1].clone() {
                match ranges.get(2) {
                    Some(r) => out.extend(r.clone().map(|c| ActionCode::with_prop(spec.op, a, b, c))),
                    None => out.push(ActionCode::new(spec.op, a, b)),
                }
            }
        }
    }
    out
}

/// Actions executable in `state`.
pub fn feasible_actions(state: &WorldState) -> Vec<ActionCode> {
    all_actions(state.domain).into_iter().filter(|a| execute(state, a).is_ok()).collect()
}
