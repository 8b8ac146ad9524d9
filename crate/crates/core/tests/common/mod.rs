#![allow(dead_code)]

use flowdelta::recurrent::GruParams;
use flowdelta::tensor::{ParamId, ParamSet, Tensor};
use flowdelta::Rng;
use flowdelta_oracle::{Gru, Mat};

pub fn mat(params: &ParamSet, id: ParamId) -> Mat {
    let t = params.get(id);
    Mat::new(t.shape()[0], t.shape()[1], t.to_vec())
}

pub fn oracle_gru(params: &ParamSet, p: &GruParams) -> Gru {
    Gru {
        w_z: mat(params, p.w_z),
        w_r: mat(params, p.w_r),
        w_n: mat(params, p.w_n),
        u_z: mat(params, p.u_z),
        u_r: mat(params, p.u_r),
        u_n: mat(params, p.u_n),
        b_z: params.get(p.b_z).to_vec(),
        b_r: params.get(p.b_r).to_vec(),
        b_n: params.get(p.b_n).to_vec(),
    }
}

/// GRU with random weights and random (nonzero) biases.
pub fn random_gru(params: &mut ParamSet, prefix: &str, d_in: usize, hidden: usize, rng: &mut Rng) -> GruParams {
    let g = GruParams::init(params, prefix, d_in, hidden, rng).unwrap();
    for b in [g.b_z, g.b_r, g.b_n] {
        params.set(b, random(vec![hidden], rng)).unwrap();
    }
    g
}

pub fn random(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.uniform(-1.0, 1.0))
}

/// `[t][m][d]` nested view of a grid tensor.
pub fn nested(t: &Tensor) -> Vec<Vec<Vec<f64>>> {
    let s = t.shape();
    (0..s[0])
        .map(|k| (0..s[1]).map(|j| (0..s[2]).map(|c| t.at(&[k, j, c])).collect()).collect())
        .collect()
}

pub fn flat(grid: &[Vec<Vec<f64>>]) -> Vec<f64> {
    grid.iter().flatten().flatten().copied().collect()
}

/// Same-bits comparison that also treats -0.0 and +0.0 as equal.
pub fn same(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y)
}
