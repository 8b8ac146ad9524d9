//! Plain-loop reference implementations used as test oracles.
//!
//! Nothing here shares code with the `flowdelta` crate. Everything operates
//! on row-major `f64` slices. Where a test demands bitwise agreement the
//! arithmetic follows the documented evaluation order of the layer it
//! checks: matrix products accumulate from zero in increasing inner index,
//! `z = σ((x·W + h·U) + b)`, `n = tanh((x·W_n + r·(h·U_n)) + b_n)`,
//! `h' = (1 − z)·n + z·h`.

use std::collections::HashMap;

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Mat {
        assert_eq!(rows * cols, data.len());
        Mat { rows, cols, data }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.cols, b.rows);
    let mut out = vec![0.0; a.rows * b.cols];
    for i in 0..a.rows {
        for j in 0..b.cols {
            let mut s = 0.0;
            for k in 0..a.cols {
                s += a.get(i, k) * b.get(k, j);
            }
            out[i * b.cols + j] = s;
        }
    }
    Mat::new(a.rows, b.cols, out)
}

/// `v · M` for a row vector.
pub fn vecmat(v: &[f64], m: &Mat) -> Vec<f64> {
    assert_eq!(v.len(), m.rows);
    (0..m.cols)
        .map(|j| {
            let mut s = 0.0;
            for (k, &x) in v.iter().enumerate() {
                s += x * m.get(k, j);
            }
            s
        })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    x.iter().enumerate().map(|(j, v)| (v - mean) * inv * gamma[j] + beta[j]).collect()
}

/// GRU weights as plain matrices.
#[derive(Clone, Debug)]
pub struct Gru {
    pub w_z: Mat,
    pub w_r: Mat,
    pub w_n: Mat,
    pub u_z: Mat,
    pub u_r: Mat,
    pub u_n: Mat,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_n: Vec<f64>,
}

impl Gru {
    pub fn hidden(&self) -> usize {
        self.b_z.len()
    }

    /// One step for a single example, element by element.
    pub fn cell(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hid = self.hidden();
        let dot = |v: &[f64], m: &Mat, j: usize| {
            let mut s = 0.0;
            for (k, &a) in v.iter().enumerate() {
                s += a * m.get(k, j);
            }
            s
        };
        let mut out = vec![0.0; hid];
        for j in 0..hid {
            let z = sigmoid((dot(x, &self.w_z, j) + dot(h, &self.u_z, j)) + self.b_z[j]);
            let r = sigmoid((dot(x, &self.w_r, j) + dot(h, &self.u_r, j)) + self.b_r[j]);
            let n = ((dot(x, &self.w_n, j) + r * dot(h, &self.u_n, j)) + self.b_n[j]).tanh();
            out[j] = (1.0 - z) * n + z * h[j];
        }
        out
    }

    pub fn sequence(&self, xs: &[Vec<f64>], h0: &[f64]) -> Vec<Vec<f64>> {
        let mut h = h0.to_vec();
        xs.iter()
            .map(|x| {
                h = self.cell(x, &h);
                h.clone()
            })
            .collect()
    }
}

/// History term of a flow variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gain {
    None,
    Delta,
    SkipDelta,
    DoubleDelta,
    Hadamard,
}

/// One word's turn sequence through a flow layer, keeping the three previous
/// states in explicit registers (all zero before the first turn).
pub fn flow_word(gru: &Gru, turns: &[Vec<f64>], gain: Gain) -> Vec<Vec<f64>> {
    let hid = gru.hidden();
    let (mut h1, mut h2, mut h3) = (vec![0.0; hid], vec![0.0; hid], vec![0.0; hid]);
    let mut out = Vec::with_capacity(turns.len());
    for c in turns {
        let mut x = c.clone();
        match gain {
            Gain::None => {}
            Gain::Delta => x.extend((0..hid).map(|i| h1[i] - h2[i])),
            Gain::SkipDelta => x.extend((0..hid).map(|i| h1[i] - h3[i])),
            Gain::DoubleDelta => {
                x.extend((0..hid).map(|i| h1[i] - h2[i]));
                x.extend((0..hid).map(|i| h2[i] - h3[i]));
            }
            Gain::Hadamard => x.extend((0..hid).map(|i| h1[i] * h2[i])),
        }
        let h = gru.cell(&x, &h1);
        h3 = std::mem::replace(&mut h2, std::mem::replace(&mut h1, h.clone()));
        out.push(h);
    }
    out
}

/// Flow over a `[t][m][d]` grid, one word at a time. Returns `[t][m][h]`.
pub fn flow_grid(gru: &Gru, grid: &[Vec<Vec<f64>>], gain: Gain) -> Vec<Vec<Vec<f64>>> {
    let t = grid.len();
    let m = grid[0].len();
    let mut out = vec![vec![Vec::new(); m]; t];
    for j in 0..m {
        let seq: Vec<Vec<f64>> = (0..t).map(|k| grid[k][j].clone()).collect();
        for (k, h) in flow_word(gru, &seq, gain).into_iter().enumerate() {
            out[k][j] = h;
        }
    }
    out
}

/// Scaled dot-product attention by explicit score matrix.
pub fn attention(q: &Mat, k: &Mat, v: &Mat) -> Mat {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut out = Vec::with_capacity(q.rows * v.cols);
    for i in 0..q.rows {
        let scores: Vec<f64> = (0..k.rows)
            .map(|j| q.row(i).iter().zip(k.row(j)).map(|(a, b)| a * b).sum::<f64>() * scale)
            .collect();
        let w = softmax(&scores);
        for c in 0..v.cols {
            out.push((0..k.rows).map(|j| w[j] * v.get(j, c)).sum());
        }
    }
    Mat::new(q.rows, v.cols, out)
}

/// Context words attending over question words; `[m × 2d]`.
pub fn word_attention(question: &Mat, context: &Mat) -> Mat {
    let summary = attention(context, question, question);
    let mut out = Vec::new();
    for i in 0..context.rows {
        out.extend_from_slice(context.row(i));
        out.extend_from_slice(summary.row(i));
    }
    Mat::new(context.rows, 2 * context.cols, out)
}

pub fn self_attention(x: &Mat, w_q: &Mat, w_k: &Mat, w_v: &Mat) -> Mat {
    attention(&matmul(x, w_q), &matmul(x, w_k), &matmul(x, w_v))
}

/// Best `(s, e)` with `s <= e < s + max_len`, maximising `ps[s]·pe[e]`,
/// ties to the smallest `s` then `e`, by enumeration of all pairs.
pub fn decode_span(ps: &[f64], pe: &[f64], max_len: usize) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_score = f64::NEG_INFINITY;
    for s in 0..ps.len() {
        for e in 0..pe.len() {
            if e < s || e - s >= max_len {
                continue;
            }
            let score = ps[s] * pe[e];
            if score > best_score {
                best_score = score;
                best = (s, e);
            }
        }
    }
    best
}

/// Mean over turns of `-ln max(p, 1e-12)` at the gold start plus end.
pub fn span_loss(ps: &[Vec<f64>], pe: &[Vec<f64>], gold: &[(usize, usize)]) -> f64 {
    let mut total = 0.0;
    for (k, &(s, e)) in gold.iter().enumerate() {
        total += -(ps[k][s].max(1e-12)).ln() - (pe[k][e].max(1e-12)).ln();
    }
    total / gold.len() as f64
}

/// Token F1 by explicit counting over already-normalised tokens.
pub fn token_f1_counts(pred: &[&str], gold: &[&str]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for t in pred {
        counts.entry(t).or_default().0 += 1;
    }
    for t in gold {
        counts.entry(t).or_default().1 += 1;
    }
    let common: usize = counts.values().map(|&(a, b)| a.min(b)).sum();
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / pred.len() as f64;
    let r = common as f64 / gold.len() as f64;
    2.0 * p * r / (p + r)
}

/// HEQ-Q and HEQ-D by looping over every dialogue.
pub fn heq(model: &[f64], human: &[f64], dialogue_lengths: &[usize]) -> (f64, f64) {
    let mut q_ok = 0;
    let mut d_ok = 0;
    let mut at = 0;
    for &len in dialogue_lengths {
        let mut all = true;
        for i in at..at + len {
            if model[i] >= human[i] {
                q_ok += 1;
            } else {
                all = false;
            }
        }
        if all {
            d_ok += 1;
        }
        at += len;
    }
    (q_ok as f64 / model.len() as f64, d_ok as f64 / dialogue_lengths.len() as f64)
}
