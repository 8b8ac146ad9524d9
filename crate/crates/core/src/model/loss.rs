use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

use super::SpanPrediction;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean over turns of `-ln P^S[start] - ln P^E[end]`, recorded on the tape.
/// `ps`, `pe` are `[t × m]`.
pub fn span_loss_on_tape(tape: &mut Tape<'_>, ps: Var, pe: Var, spans: &[(usize, usize)]) -> Result<Var> {
    let shape = tape.shape(ps).to_vec();
    if shape.len() != 2 || shape[0] != spans.len() || tape.shape(pe) != shape.as_slice() {
        return Err(Error::dim("span_loss", format!("predictions {shape:?} for {} gold spans", spans.len())));
    }
    let m = shape[1];
    let starts: Vec<usize> = spans.iter().enumerate().map(|(k, &(s, _))| k * m + s).collect();
    let ends: Vec<usize> = spans.iter().enumerate().map(|(k, &(_, e))| k * m + e).collect();
    let s = tape.select(ps, &starts)?;
    let e = tape.select(pe, &ends)?;
    let ls = tape.log_floor(s, PROB_FLOOR)?;
    let le = tape.log_floor(e, PROB_FLOOR)?;
    let both = tape.add(ls, le)?;
    let total = tape.sum(both)?;
    tape.scale(total, -1.0 / spans.len() as f64)
}

/// Value-only [`span_loss_on_tape`].
pub fn span_loss(pred: &SpanPrediction, spans: &[(usize, usize)]) -> Result<f64> {
    if pred.turns() != spans.len() {
        return Err(Error::dim("span_loss", format!("{} predicted turns for {} gold spans", pred.turns(), spans.len())));
    }
    let mut total = 0.0;
    for (k, &(s, e)) in spans.iter().enumerate() {
        let (p, q) = (&pred.p_start[k], &pred.p_end[k]);
        if s >= p.len() || e >= q.len() {
            return Err(Error::dim("span_loss", format!("span ({s}, {e}) outside {} positions", p.len())));
        }
        total += p[s].max(PROB_FLOOR).ln() + q[e].max(PROB_FLOOR).ln();
    }
    Ok(-total / spans.len() as f64)
}
