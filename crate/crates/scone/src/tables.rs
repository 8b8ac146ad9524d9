//! Frozen code and action tables. `data/tables.json` is this module
//! serialized by [`table_file`]; a test keeps the two identical.

use serde::Serialize;

use crate::world::{Domain, Reason};

/// Bumped whenever any code, op or rule below changes meaning.
pub const FORMAT_VERSION: u32 = 1;

/// Scene shirt/hat and Alchemy liquid colors are `1..=COLOR_COUNT`.
pub const COLOR_COUNT: u32 = 6;
pub const COLOR_NAMES: [&str; 6] = ["red", "orange", "yellow", "green", "blue", "purple"];
/// Alchemy's reserved mixture color.
pub const ALCHEMY_BROWN: u32 = 7;
pub const ALCHEMY_CAPACITY: u32 = 4;
/// Tangrams image ids are `1..=IMAGE_COUNT`.
pub const IMAGE_COUNT: u32 = 5;
pub const IMAGE_NAMES: [&str; 5] = ["cat", "house", "boat", "tree", "bird"];

/// Meaning of one action slot after the op code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    /// A 1-based position in the world state.
    Position,
    /// Must be 0.
    Unused,
    /// A value from a closed range.
    Code { name: &'static str, min: u32, max: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OpSpec {
    pub op: u32,
    pub name: &'static str,
    /// Meanings of `pos1`, `pos2` and, for 4-integer actions, `prop`.
    pub slots: &'static [Slot],
}

impl OpSpec {
    /// Number of integers in the encoded tuple, op included.
    pub fn arity(&self) -> usize {
        1 + self.slots.len()
    }
}

const SHIRT: Slot = Slot::Code { name: "shirt", min: 1, max: COLOR_COUNT };
const HAT_OR_NONE: Slot = Slot::Code { name: "hat", min: 0, max: COLOR_COUNT };
const HAT: Slot = Slot::Code { name: "hat", min: 1, max: COLOR_COUNT };
const IMAGE: Slot = Slot::Code { name: "image", min: 1, max: IMAGE_COUNT };
const UNITS: Slot = Slot::Code { name: "units", min: 1, max: ALCHEMY_CAPACITY };

use Slot::{Position as P, Unused as U};

const SCENE_OPS: [OpSpec; 6] = [
    OpSpec { op: 0, name: "enter", slots: &[P, SHIRT, HAT_OR_NONE] },
    OpSpec { op: 1, name: "swap_hats", slots: &[P, P] },
    OpSpec { op: 2, name: "leave", slots: &[P, U] },
    OpSpec { op: 3, name: "move", slots: &[P, P] },
    OpSpec { op: 4, name: "put_on_hat", slots: &[P, HAT] },
    OpSpec { op: 5, name: "take_off_hat", slots: &[P, U] },
];

const TANGRAMS_OPS: [OpSpec; 3] = [
    OpSpec { op: 0, name: "remove", slots: &[P, U] },
    OpSpec { op: 1, name: "insert", slots: &[P, IMAGE] },
    OpSpec { op: 2, name: "swap", slots: &[P, P] },
];

const ALCHEMY_OPS: [OpSpec; 3] = [
    OpSpec { op: 0, name: "pour", slots: &[P, P, UNITS] },
    OpSpec { op: 1, name: "mix", slots: &[P, U] },
    OpSpec { op: 2, name: "drain", slots: &[P, UNITS] },
];

pub fn op_table(domain: Domain) -> &'static [OpSpec] {
    match domain {
        Domain::Scene => &SCENE_OPS,
        Domain::Tangrams => &TANGRAMS_OPS,
        Domain::Alchemy => &ALCHEMY_OPS,
    }
}

pub fn op_spec(domain: Domain, op: u32) -> Option<&'static OpSpec> {
    op_table(domain).iter().find(|s| s.op == op)
}

/// Display name for a color code (Alchemy adds brown).
pub fn color_name(code: u32) -> &'static str {
    match code {
        1..=COLOR_COUNT => COLOR_NAMES[code as usize - 1],
        ALCHEMY_BROWN => "brown",
        _ => "none",
    }
}

pub fn image_name(code: u32) -> &'static str {
    IMAGE_NAMES.get((code as usize).wrapping_sub(1)).copied().unwrap_or("none")
}

#[derive(Serialize)]
struct CodeEntry {
    code: u32,
    name: &'static str,
}

#[derive(Serialize)]
struct DomainTable {
    domain: Domain,
    positions: usize,
    pair: [&'static str; 2],
    codes: Vec<CodeEntry>,
    ops: &'static [OpSpec],
    rules: &'static [&'static str],
}

#[derive(Serialize)]
struct ReasonEntry {
    code: u8,
    name: &'static str,
}

#[derive(Serialize)]
struct TableFile {
    format_version: u32,
    position_base: u32,
    domains: Vec<DomainTable>,
    rejection_reasons: Vec<ReasonEntry>,
}

fn codes(names: &[&'static str]) -> Vec<CodeEntry> {
    let mut v = vec![CodeEntry { code: 0, name: "none" }];
    v.extend(names.iter().enumerate().map(|(i, &name)| CodeEntry { code: i as u32 + 1, name }));
    v
}

/// The frozen tables as pretty JSON with a trailing newline.
pub fn table_file() -> String {
    let mut alchemy_codes = codes(&COLOR_NAMES);
    alchemy_codes.push(CodeEntry { code: ALCHEMY_BROWN, name: "brown" });
    let file = TableFile {
        format_version: FORMAT_VERSION,
        position_base: 1,
        domains: vec![
            DomainTable {
                domain: Domain::Scene,
                positions: Domain::Scene.positions(),
                pair: ["shirt", "hat"],
                codes: codes(&COLOR_NAMES),
                ops: &SCENE_OPS,
                rules: &[
                    "empty position is (0, 0); hat 0 means no hat",
                    "enter needs an empty position; move needs an occupied source and empty destination",
                    "swap_hats needs two distinct occupied positions and exchanges only hats",
                    "put_on_hat needs a hatless person; take_off_hat needs a hat",
                ],
            },
            DomainTable {
                domain: Domain::Tangrams,
                positions: Domain::Tangrams.positions(),
                pair: ["image", "present"],
                codes: codes(&IMAGE_NAMES),
                ops: &TANGRAMS_OPS,
                rules: &[
                    "figures occupy a prefix as (image, 1); the remaining slots are (0, 0)",
                    "each image appears at most once",
                    "remove shifts later figures left; insert at 1..=len+1 shifts later figures right",
                ],
            },
            DomainTable {
                domain: Domain::Alchemy,
                positions: Domain::Alchemy.positions(),
                pair: ["color", "units"],
                codes: alchemy_codes,
                ops: &ALCHEMY_OPS,
                rules: &[
                    "empty beaker is (0, 0); capacity is 4 units",
                    "pour into an empty beaker keeps the source color; into the same color keeps it; otherwise brown (7)",
                    "a beaker emptied by pour or drain becomes (0, 0)",
                    "mix turns a non-empty, non-brown beaker brown",
                ],
            },
        ],
        rejection_reasons: Reason::ALL.iter().map(|r| ReasonEntry { code: r.code(), name: r.name() }).collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("table serializes");
    s.push('\n');
    s
}
