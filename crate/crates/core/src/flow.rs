//! Flow layers: recurrences over the dialogue-turn axis, one independent
//! sequence per context word.
//!
//! Inputs are `[t × m × d]` grids (turn, word, feature). Read as a
//! time-major sequence this is already `m` sequences of length `t` batched
//! over words, so the batched path runs a single GRU over the turn axis.
//! [`turn_major`] / [`word_major`] expose the per-word view explicitly.
//!
//! The information-gain variants feed the GRU at turn `k` with the input
//! `[c_k ; g(h_{k-1}, h_{k-2}, h_{k-3})]`, where every state before the
//! first turn is the zero vector, so a single-turn dialogue carries no gain.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrent::{gru_cell, gru_sequence, GruParams};
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor, Var};

/// Which history term augments the GRU input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlowVariantKind {
    /// `h_{k-1} - h_{k-2}`
    Delta,
    /// `h_{k-1} - h_{k-3}`
    SkipDelta,
    /// `[h_{k-1} - h_{k-2} ; h_{k-2} - h_{k-3}]`
    DoubleDelta,
    /// `h_{k-1} ⊙ h_{k-2}`
    Hadamard,
}

impl FlowVariantKind {
    pub const ALL: [FlowVariantKind; 4] =
        [FlowVariantKind::Delta, FlowVariantKind::SkipDelta, FlowVariantKind::DoubleDelta, FlowVariantKind::Hadamard];

    /// Width of the history term for a flow state of width `hidden`.
    pub fn extra_width(self, hidden: usize) -> usize {
        match self {
            FlowVariantKind::DoubleDelta => 2 * hidden,
            _ => hidden,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowVariantKind::Delta => "delta",
            FlowVariantKind::SkipDelta => "skipdelta",
            FlowVariantKind::DoubleDelta => "doubledelta",
            FlowVariantKind::Hadamard => "hadamard",
        }
    }
}

impl fmt::Display for FlowVariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlowVariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FlowVariantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown flow variant {s:?}")))
    }
}

/// How a model propagates information across turns. Serialised as its
/// lowercase name (`none`, `flow`, `delta`, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum FlowMode {
    /// No cross-turn path at all (ablation).
    None,
    /// Plain GRU over turns.
    Flow,
    Variant(FlowVariantKind),
}

impl FlowMode {
    pub fn is_none(self) -> bool {
        matches!(self, FlowMode::None)
    }

    /// GRU input width for a flow layer reading `d`-wide features into a
    /// `hidden`-wide state.
    pub fn gru_input_width(self, d: usize, hidden: usize) -> usize {
        match self {
            FlowMode::None | FlowMode::Flow => d,
            FlowMode::Variant(k) => d + k.extra_width(hidden),
        }
    }
}

impl fmt::Display for FlowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowMode::None => f.write_str("none"),
            FlowMode::Flow => f.write_str("flow"),
            FlowMode::Variant(k) => k.fmt(f),
        }
    }
}

impl From<FlowMode> for String {
    fn from(m: FlowMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for FlowMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for FlowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FlowMode::None),
            "flow" => Ok(FlowMode::Flow),
            other => other
                .parse()
                .map(FlowMode::Variant)
                .map_err(|_| Error::Usage(format!("unknown flow mode {s:?} (none, flow, delta, skipdelta, doubledelta, hadamard)"))),
        }
    }
}

/// `[t × m × d] -> [m × t × d]`: one length-`t` turn sequence per word.
pub fn turn_major<S: Scalar>(reps: &Tensor<S>) -> Result<Tensor<S>> {
    check_grid("turn_major", reps.shape())?;
    reps.swap_leading_axes()
}

/// Inverse of [`turn_major`].
pub fn word_major<S: Scalar>(per_word: &Tensor<S>) -> Result<Tensor<S>> {
    check_grid("word_major", per_word.shape())?;
    per_word.swap_leading_axes()
}

fn check_grid(op: &'static str, shape: &[usize]) -> Result<()> {
    if shape.len() != 3 {
        return Err(Error::dim(op, format!("expected a [t × m × d] grid, got {shape:?}")));
    }
    Ok(())
}

/// Plain flow: for each word `j`, `h_{1..t, j} = GRU(c_{1..t, j})` from a
/// zero state. Output `[t × m × hidden]`.
pub fn flow_forward<S: Scalar>(tape: &mut Tape<'_, S>, input: Var, p: &GruParams) -> Result<Var> {
    let shape = tape.shape(input).to_vec();
    check_grid("flow_forward", &shape)?;
    if shape[2] != p.d_in {
        return Err(Error::dim(
            "flow_forward",
            format!("input width {} but flow GRU expects {}", shape[2], p.d_in),
        ));
    }
    let h0 = tape.zeros(vec![shape[1], p.hidden])?;
    gru_sequence(tape, p, input, h0)
}

/// FlowDelta: `h_{k,j} = GRU([c_{k,j} ; h_{k-1,j} - h_{k-2,j}], h_{k-1,j})`.
pub fn flowdelta_forward<S: Scalar>(tape: &mut Tape<'_, S>, input: Var, p: &GruParams) -> Result<Var> {
    flow_variant_forward(tape, input, p, FlowVariantKind::Delta)
}

/// Flow with an information-gain term chosen by `kind`.
pub fn flow_variant_forward<S: Scalar>(tape: &mut Tape<'_, S>, input: Var, p: &GruParams, kind: FlowVariantKind) -> Result<Var> {
    let shape = tape.shape(input).to_vec();
    check_grid("flow_variant_forward", &shape)?;
    let (turns, words, d) = (shape[0], shape[1], shape[2]);
    let expected = d + kind.extra_width(p.hidden);
    if p.d_in != expected {
        return Err(Error::dim(
            "flow_variant_forward",
            format!("{kind} over width-{d} input needs GRU d_in {expected}, got {}", p.d_in),
        ));
    }
    let zero = tape.zeros(vec![words, p.hidden])?;
    // History registers h_{k-1}, h_{k-2}, h_{k-3}.
    let (mut h1, mut h2, mut h3) = (zero, zero, zero);
    let mut states = Vec::with_capacity(turns);
    for k in 0..turns {
        let c = tape.index0(input, k)?;
        let gain = match kind {
            FlowVariantKind::Delta => tape.sub(h1, h2)?,
            FlowVariantKind::SkipDelta => tape.sub(h1, h3)?,
            FlowVariantKind::DoubleDelta => {
                let a = tape.sub(h1, h2)?;
                let b = tape.sub(h2, h3)?;
                tape.concat(&[a, b], 1)?
            }
            FlowVariantKind::Hadamard => tape.mul(h1, h2)?,
        };
        let x = tape.concat(&[c, gain], 1)?;
        let h = gru_cell(tape, p, x, h1)?;
        states.push(h);
        h3 = h2;
        h2 = h1;
        h1 = h;
    }
    tape.stack(&states)
}

/// Dispatches on [`FlowMode`]. `FlowMode::None` is an error: callers skip
/// the layer instead.
pub fn flow_mode_forward<S: Scalar>(tape: &mut Tape<'_, S>, input: Var, p: &GruParams, mode: FlowMode) -> Result<Var> {
    match mode {
        FlowMode::None => Err(Error::Usage("flow layer invoked with mode none".into())),
        FlowMode::Flow => flow_forward(tape, input, p),
        FlowMode::Variant(kind) => flow_variant_forward(tape, input, p, kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::ParamSet;

    #[test]
    fn degenerate_axes_keep_data() {
        let x = Tensor::<f64>::from_fn(vec![1, 4, 2], |i| i as f64);
        assert_eq!(turn_major(&x).unwrap().data(), x.data());
        let y = Tensor::<f64>::from_fn(vec![3, 1, 2], |i| i as f64);
        assert_eq!(turn_major(&y).unwrap().data(), y.data());
    }

    #[test]
    fn parse_modes() {
        assert_eq!("none".parse::<FlowMode>().unwrap(), FlowMode::None);
        assert_eq!("doubledelta".parse::<FlowMode>().unwrap(), FlowMode::Variant(FlowVariantKind::DoubleDelta));
        assert!("lstm".parse::<FlowMode>().is_err());
        let json = serde_json::to_string(&FlowMode::Variant(FlowVariantKind::SkipDelta)).unwrap();
        assert_eq!(json, "\"skipdelta\"");
        assert_eq!(serde_json::from_str::<FlowMode>("\"none\"").unwrap(), FlowMode::None);
        for k in FlowVariantKind::ALL {
            assert_eq!(k.to_string().parse::<FlowVariantKind>().unwrap(), k);
        }
    }

    #[test]
    fn width_mismatch_is_dimension_error() {
        let mut ps = ParamSet::<f64>::new();
        let g = GruParams::init(&mut ps, "f", 4, 3, &mut Rng::new(1)).unwrap();
        let mut tape = Tape::with_params(&ps);
        let x = tape.zeros(vec![2, 2, 4]).unwrap();
        // Delta needs d_in = 4 + 3.
        assert!(matches!(flowdelta_forward(&mut tape, x, &g), Err(Error::Dim { .. })));
        let x5 = tape.zeros(vec![2, 2, 5]).unwrap();
        assert!(matches!(flow_forward(&mut tape, x5, &g), Err(Error::Dim { .. })));
    }

    #[test]
    fn gru_widths() {
        assert_eq!(FlowMode::Flow.gru_input_width(8, 3), 8);
        assert_eq!(FlowMode::Variant(FlowVariantKind::Hadamard).gru_input_width(8, 3), 11);
        assert_eq!(FlowMode::Variant(FlowVariantKind::DoubleDelta).gru_input_width(8, 3), 14);
    }
}
