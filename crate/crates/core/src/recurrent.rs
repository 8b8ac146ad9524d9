//! GRU cells and sequence runners.
//!
//! Sequences use a time-major layout `[T × batch × d_in]`. The same runner
//! drives both the word-axis encoders (time = context position, batch =
//! turns) and the turn-axis flow layers (time = turn, batch = words).

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{ParamId, ParamSet, Tape, Tensor, Var};

/// Parameters of one GRU with input width `d_in` and state width `hidden`.
///
/// `z = σ(x·W_z + h·U_z + b_z)`, `r = σ(x·W_r + h·U_r + b_r)`,
/// `n = tanh(x·W_n + r ⊙ (h·U_n) + b_n)`, `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GruParams {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_n: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_n: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_n: ParamId,
    pub d_in: usize,
    pub hidden: usize,
}

impl GruParams {
    /// Glorot-uniform matrices and zero biases, registered as `{prefix}.w_z` etc.
    pub fn init<S: Scalar>(params: &mut ParamSet<S>, prefix: &str, d_in: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        let w = |name: &str, rows: usize, rng: &mut Rng, params: &mut ParamSet<S>| {
            params.glorot(format!("{prefix}.{name}"), rows, hidden, rng)
        };
        let w_z = w("w_z", d_in, rng, params)?;
        let w_r = w("w_r", d_in, rng, params)?;
        let w_n = w("w_n", d_in, rng, params)?;
        let u_z = w("u_z", hidden, rng, params)?;
        let u_r = w("u_r", hidden, rng, params)?;
        let u_n = w("u_n", hidden, rng, params)?;
        let b_z = params.zeros(format!("{prefix}.b_z"), vec![hidden])?;
        let b_r = params.zeros(format!("{prefix}.b_r"), vec![hidden])?;
        let b_n = params.zeros(format!("{prefix}.b_n"), vec![hidden])?;
        Ok(GruParams { w_z, w_r, w_n, u_z, u_r, u_n, b_z, b_r, b_n, d_in, hidden })
    }

    /// All-zero parameters.
    pub fn zeros<S: Scalar>(params: &mut ParamSet<S>, prefix: &str, d_in: usize, hidden: usize) -> Result<Self> {
        let mut z = |name: &str, shape: Vec<usize>| params.zeros(format!("{prefix}.{name}"), shape);
        Ok(GruParams {
            w_z: z("w_z", vec![d_in, hidden])?,
            w_r: z("w_r", vec![d_in, hidden])?,
            w_n: z("w_n", vec![d_in, hidden])?,
            u_z: z("u_z", vec![hidden, hidden])?,
            u_r: z("u_r", vec![hidden, hidden])?,
            u_n: z("u_n", vec![hidden, hidden])?,
            b_z: z("b_z", vec![hidden])?,
            b_r: z("b_r", vec![hidden])?,
            b_n: z("b_n", vec![hidden])?,
            d_in,
            hidden,
        })
    }

    /// Re-binds to the parameters named `{prefix}.*` in an existing set.
    pub fn lookup<S: Scalar>(params: &ParamSet<S>, prefix: &str) -> Result<Self> {
        let get = |name: &str| {
            params
                .find(&format!("{prefix}.{name}"))
                .ok_or_else(|| Error::Data(format!("missing parameter {prefix}.{name}")))
        };
        let w_z = get("w_z")?;
        let shape = params.get(w_z).shape();
        let (d_in, hidden) = (shape[0], shape[1]);
        Ok(GruParams {
            w_z,
            w_r: get("w_r")?,
            w_n: get("w_n")?,
            u_z: get("u_z")?,
            u_r: get("u_r")?,
            u_n: get("u_n")?,
            b_z: get("b_z")?,
            b_r: get("b_r")?,
            b_n: get("b_n")?,
            d_in,
            hidden,
        })
    }

    pub fn ids(&self) -> [ParamId; 9] {
        [self.w_z, self.w_r, self.w_n, self.u_z, self.u_r, self.u_n, self.b_z, self.b_r, self.b_n]
    }
}

/// One GRU step for a batch: `x [B × d_in]`, `h_prev [B × hidden]`.
pub fn gru_cell<S: Scalar>(tape: &mut Tape<'_, S>, p: &GruParams, x: Var, h_prev: Var) -> Result<Var> {
    let (xs, hs) = (tape.shape(x).to_vec(), tape.shape(h_prev).to_vec());
    if xs.len() != 2 || hs.len() != 2 || xs[1] != p.d_in || hs[1] != p.hidden || xs[0] != hs[0] {
        return Err(Error::dim(
            "gru_cell",
            format!("input {xs:?} and state {hs:?} for a GRU with d_in={} hidden={}", p.d_in, p.hidden),
        ));
    }
    let gate = |tape: &mut Tape<'_, S>, w: ParamId, u: ParamId, b: ParamId| -> Result<Var> {
        let (w, u, b) = (tape.param(w)?, tape.param(u)?, tape.param(b)?);
        let xw = tape.matmul(x, w)?;
        let hu = tape.matmul(h_prev, u)?;
        let s = tape.add(xw, hu)?;
        let s = tape.add(s, b)?;
        tape.sigmoid(s)
    };
    let z = gate(tape, p.w_z, p.u_z, p.b_z)?;
    let r = gate(tape, p.w_r, p.u_r, p.b_r)?;

    let (w_n, u_n, b_n) = (tape.param(p.w_n)?, tape.param(p.u_n)?, tape.param(p.b_n)?);
    let xw = tape.matmul(x, w_n)?;
    let hu = tape.matmul(h_prev, u_n)?;
    let rhu = tape.mul(r, hu)?;
    let s = tape.add(xw, rhu)?;
    let s = tape.add(s, b_n)?;
    let n = tape.tanh(s)?;

    let keep = tape.one_minus(z)?;
    let new_part = tape.mul(keep, n)?;
    let old_part = tape.mul(z, h_prev)?;
    tape.add(new_part, old_part)
}

/// Runs the GRU left to right over `xs [T × B × d_in]` from `h0 [B × hidden]`,
/// returning the `T` states in order.
pub fn gru_steps<S: Scalar>(tape: &mut Tape<'_, S>, p: &GruParams, xs: Var, h0: Var) -> Result<Vec<Var>> {
    let shape = tape.shape(xs).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("gru_sequence", format!("expected [T × batch × d_in], got {shape:?}")));
    }
    let mut h = h0;
    let mut out = Vec::with_capacity(shape[0]);
    for k in 0..shape[0] {
        let x = tape.index0(xs, k)?;
        h = gru_cell(tape, p, x, h)?;
        out.push(h);
    }
    Ok(out)
}

/// `hs[k] = gru_cell(xs[k], hs[k-1])` with `hs[-1] = h0`; output `[T × B × hidden]`.
pub fn gru_sequence<S: Scalar>(tape: &mut Tape<'_, S>, p: &GruParams, xs: Var, h0: Var) -> Result<Var> {
    let steps = gru_steps(tape, p, xs, h0)?;
    tape.stack(&steps)
}

/// Bidirectional encoder from zero initial states: `[T × B × d_in] ->
/// [T × B × 2·hidden]`, forward states first in each step.
pub fn bigru_encode<S: Scalar>(tape: &mut Tape<'_, S>, xs: Var, fwd: &GruParams, bwd: &GruParams) -> Result<Var> {
    let shape = tape.shape(xs).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim("bigru_encode", format!("expected [T × batch × d_in], got {shape:?}")));
    }
    let (steps, batch) = (shape[0], shape[1]);
    let h0 = tape.zeros(vec![batch, fwd.hidden])?;
    let forward = gru_steps(tape, fwd, xs, h0)?;

    let mut backward = vec![None; steps];
    let mut h = tape.zeros(vec![batch, bwd.hidden])?;
    for k in (0..steps).rev() {
        let x = tape.index0(xs, k)?;
        h = gru_cell(tape, bwd, x, h)?;
        backward[k] = Some(h);
    }
    let mut joined = Vec::with_capacity(steps);
    for (f, b) in forward.into_iter().zip(backward) {
        joined.push(tape.concat(&[f, b.expect("every step visited")], 1)?);
    }
    tape.stack(&joined)
}

/// Forward-only convenience: one GRU step on plain tensors.
pub fn gru_cell_value<S: Scalar>(params: &ParamSet<S>, p: &GruParams, x: &Tensor<S>, h: &Tensor<S>) -> Result<Tensor<S>> {
    let mut tape = Tape::with_params(params);
    let (xv, hv) = (tape.constant(x.clone())?, tape.constant(h.clone())?);
    let out = gru_cell(&mut tape, p, xv, hv)?;
    Ok(tape.value(out).clone())
}
