//! Reverse-mode automatic differentiation over an append-only tape.
//!
//! Every op appends one node holding its forward value; node ids are
//! assigned in creation order, so inputs always precede their consumers and
//! a single descending sweep is a valid reverse topological order.

use std::collections::HashMap;

use super::params::{Gradients, ParamId, ParamSet};
use super::{numel_of, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum BinKind {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    /// `b` is repeated over `a` in blocks of `b.numel()` elements.
    Binary { kind: BinKind, a: Var, b: Var },
    Affine { x: Var, mul: S },
    Sigmoid(Var),
    Tanh(Var),
    Gelu(Var),
    LogFloor { x: Var, floor: S },
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<S>, inv_std: Vec<S> },
    Concat { inputs: Vec<Var>, outer: usize, chunks: Vec<usize> },
    Narrow { x: Var, outer: usize, in_chunk: usize, offset: usize, out_chunk: usize },
    SwapLeading { x: Var, a: usize, b: usize, rest: usize },
    Reshape(Var),
    GatherRows { table: Var, ids: Vec<usize>, width: usize },
    Select { x: Var, idx: Vec<usize> },
    Sum(Var),
    Mean(Var),
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Records a forward computation for one backward pass.
///
/// A tape borrows the parameter set it reads from; parameters are entered
/// once per tape no matter how often they are used.
pub struct Tape<'p, S: Scalar = f64> {
    params: Option<&'p ParamSet<S>>,
    param_vars: HashMap<ParamId, Var>,
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<'_, S> {
    fn default() -> Self {
        Tape::new()
    }
}

impl<'p, S: Scalar> Tape<'p, S> {
    /// A tape with no parameter set; only leaves and constants.
    pub fn new() -> Self {
        Tape { params: None, param_vars: HashMap::new(), nodes: Vec::new() }
    }

    pub fn with_params(params: &'p ParamSet<S>) -> Self {
        Tape { params: Some(params), param_vars: HashMap::new(), nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, name: &'static str, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("{name} produced a non-finite value")));
        }
        self.nodes.push(Node { value, op, requires_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn data(&self, v: Var) -> &[S] {
        self.nodes[v.0].value.data()
    }

    // ---- leaves -------------------------------------------------------

    pub fn constant(&mut self, value: Tensor<S>) -> Result<Var> {
        self.push("constant", value, Op::Leaf, false)
    }

    /// A leaf whose gradient is reported by [`Tape::backward`].
    pub fn leaf(&mut self, value: Tensor<S>) -> Result<Var> {
        self.push("leaf", value, Op::Leaf, true)
    }

    pub fn zeros(&mut self, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.constant(Tensor::zeros(shape))
    }

    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(&id) {
            return Ok(v);
        }
        let params = self
            .params
            .ok_or_else(|| Error::Usage("tape has no parameter set".into()))?;
        if id.0 >= params.len() {
            return Err(Error::Usage(format!("parameter id {} out of range", id.0)));
        }
        let v = self.push("param", params.get(id).clone(), Op::Param(id), true)?;
        self.param_vars.insert(id, v);
        Ok(v)
    }

    // ---- linear algebra ------------------------------------------------

    /// `[p × q] · [q × r] -> [p × r]`. Each output accumulates its products
    /// in increasing `q` order starting from zero.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("cannot multiply {sa:?} by {sb:?}")));
        }
        let (p, q, r) = (sa[0], sa[1], sb[1]);
        let (ad, bd) = (self.data(a), self.data(b));
        let mut out = vec![S::zero(); p * r];
        for i in 0..p {
            let row = &mut out[i * r..(i + 1) * r];
            for k in 0..q {
                let aik = ad[i * q + k];
                let brow = &bd[k * r..(k + 1) * r];
                for (o, &bkj) in row.iter_mut().zip(brow) {
                    *o += aik * bkj;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("matmul", Tensor::from_parts(vec![p, r], out), Op::MatMul(a, b), rg)
    }

    /// `x[.., d] · w[d × h] (+ bias[h])`, flattening the leading axes.
    pub fn linear(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        let rows = numel_of(&shape) / d;
        let flat = self.reshape(x, vec![rows, d])?;
        let y = self.matmul(flat, w)?;
        let h = self.shape(y)[1];
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = h;
        let y = self.reshape(y, out_shape)?;
        match bias {
            Some(b) => self.add(y, b),
            None => Ok(y),
        }
    }

    /// 2-D transpose.
    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 2 {
            return Err(Error::dim("transpose", format!("expected rank 2, got {:?}", self.shape(x))));
        }
        self.swap_leading(x)
    }

    // ---- elementwise ---------------------------------------------------

    fn binary(&mut self, kind: BinKind, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let trimmed: &[usize] = {
            let lead = sb.iter().take_while(|&&d| d == 1).count().min(sb.len() - 1);
            &sb[lead..]
        };
        let ok = sa == sb
            || (trimmed.len() <= sa.len() && sa[sa.len() - trimmed.len()..] == *trimmed)
            || (sb.len() == 1 && sb[0] == 1);
        if !ok {
            return Err(Error::dim(
                match kind {
                    BinKind::Add => "add",
                    BinKind::Sub => "sub",
                    BinKind::Mul => "mul",
                },
                format!("cannot broadcast {sb:?} onto {sa:?}"),
            ));
        }
        let shape = sa.to_vec();
        let (ad, bd) = (self.data(a), self.data(b));
        let n = bd.len();
        let out: Vec<S> = match kind {
            BinKind::Add => ad.iter().enumerate().map(|(i, &x)| x + bd[i % n]).collect(),
            BinKind::Sub => ad.iter().enumerate().map(|(i, &x)| x - bd[i % n]).collect(),
            BinKind::Mul => ad.iter().enumerate().map(|(i, &x)| x * bd[i % n]).collect(),
        };
        let rg = self.rg(&[a, b]);
        self.push("binary", Tensor::from_parts(shape, out), Op::Binary { kind, a, b }, rg)
    }

    /// `a + b`; `b` may broadcast over the leading axes of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinKind::Mul, a, b)
    }

    /// `x * mul + add` elementwise.
    pub fn affine(&mut self, x: Var, mul: S, add: S) -> Result<Var> {
        let value = self.map(x, |v| v * mul + add);
        let rg = self.rg(&[x]);
        self.push("affine", value, Op::Affine { x, mul }, rg)
    }

    pub fn scale(&mut self, x: Var, s: S) -> Result<Var> {
        self.affine(x, s, S::zero())
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        self.affine(x, -S::one(), S::one())
    }

    fn map(&self, x: Var, f: impl Fn(S) -> S) -> Tensor<S> {
        let t = self.value(x);
        Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let value = self.map(x, sigmoid);
        let rg = self.rg(&[x]);
        self.push("sigmoid", value, Op::Sigmoid(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let value = self.map(x, |v| v.tanh());
        let rg = self.rg(&[x]);
        self.push("tanh", value, Op::Tanh(x), rg)
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        let value = self.map(x, |v| gelu(v).0);
        let rg = self.rg(&[x]);
        self.push("gelu", value, Op::Gelu(x), rg)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_floor(&mut self, x: Var, floor: S) -> Result<Var> {
        let value = self.map(x, |v| v.max(floor).ln());
        let rg = self.rg(&[x]);
        self.push("log", value, Op::LogFloor { x, floor }, rg)
    }

    // ---- reductions and normalisation ----------------------------------

    /// Softmax along `axis`, shifted by the per-slice maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::dim("softmax", format!("axis {axis} out of range for {shape:?}")));
        }
        let outer = numel_of(&shape[..axis]);
        let len = shape[axis];
        let inner = numel_of(&shape[axis + 1..]);
        let xd = self.data(x);
        let mut out = vec![S::zero(); xd.len()];
        for o in 0..outer {
            for n in 0..inner {
                let at = |i: usize| o * len * inner + i * inner + n;
                let mut max = S::neg_infinity();
                for i in 0..len {
                    max = max.max(xd[at(i)]);
                }
                let mut sum = S::zero();
                for i in 0..len {
                    let e = (xd[at(i)] - max).exp();
                    out[at(i)] = e;
                    sum += e;
                }
                for i in 0..len {
                    out[at(i)] /= sum;
                }
            }
        }
        let rg = self.rg(&[x]);
        self.push("softmax", Tensor::from_parts(shape, out), Op::Softmax { x, outer, len, inner }, rg)
    }

    /// Layer normalisation over the last axis with affine `gamma`, `beta`.
    /// Variance is the biased (population) estimate.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: S) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::dim(
                "layer_norm",
                format!("gamma {:?} / beta {:?} must be [{d}] for input {shape:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let (xd, gd, bd) = (self.data(x), self.data(gamma), self.data(beta));
        let rows = xd.len() / d;
        let nd = S::from_usize(d).unwrap();
        let mut out = vec![S::zero(); xd.len()];
        let mut xhat = vec![S::zero(); xd.len()];
        let mut inv_std = vec![S::zero(); rows];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().fold(S::zero(), |acc, &v| acc + v) / nd;
            let var = row.iter().fold(S::zero(), |acc, &v| acc + (v - mean) * (v - mean)) / nd;
            let inv = S::one() / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gd[j] + bd[j];
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            "layer_norm",
            Tensor::from_parts(shape, out),
            Op::LayerNorm { x, gamma, beta, xhat, inv_std },
            rg,
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().fold(S::zero(), |acc, &v| acc + v);
        let rg = self.rg(&[x]);
        self.push("sum", Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.data(x);
        let s = d.iter().fold(S::zero(), |acc, &v| acc + v) / S::from_usize(d.len()).unwrap();
        let rg = self.rg(&[x]);
        self.push("mean", Tensor::scalar(s), Op::Mean(x), rg)
    }

    // ---- structural ----------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        self.push("reshape", value, Op::Reshape(x), rg)
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut out_axis = 0;
        for &v in inputs {
            let s = self.shape(v);
            if s.len() != base.len() || s[..axis] != base[..axis] || s[axis + 1..] != base[axis + 1..] {
                return Err(Error::dim("concat", format!("cannot concatenate {base:?} with {s:?} on axis {axis}")));
            }
            out_axis += s[axis];
        }
        let outer = numel_of(&base[..axis]);
        let inner = numel_of(&base[axis + 1..]);
        let chunks: Vec<usize> = inputs.iter().map(|&v| self.shape(v)[axis] * inner).collect();
        let total: usize = chunks.iter().sum();
        let mut out = Vec::with_capacity(outer * total);
        for o in 0..outer {
            for (&v, &c) in inputs.iter().zip(&chunks) {
                out.extend_from_slice(&self.data(v)[o * c..(o + 1) * c]);
            }
        }
        let mut shape = base;
        shape[axis] = out_axis;
        let rg = self.rg(inputs);
        self.push(
            "concat",
            Tensor::from_parts(shape, out),
            Op::Concat { inputs: inputs.to_vec(), outer, chunks },
            rg,
        )
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(&mut self, inputs: &[Var]) -> Result<Var> {
        let mut lifted = Vec::with_capacity(inputs.len());
        for &v in inputs {
            let mut s = vec![1];
            s.extend_from_slice(self.shape(v));
            lifted.push(self.reshape(v, s)?);
        }
        self.concat(&lifted, 0)
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(Error::dim(
                "narrow",
                format!("range {start}..{} on axis {axis} of {shape:?}", start + len),
            ));
        }
        let outer = numel_of(&shape[..axis]);
        let inner = numel_of(&shape[axis + 1..]);
        let in_chunk = shape[axis] * inner;
        let out_chunk = len * inner;
        let offset = start * inner;
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * out_chunk);
        for o in 0..outer {
            let base = o * in_chunk + offset;
            out.extend_from_slice(&xd[base..base + out_chunk]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let rg = self.rg(&[x]);
        self.push(
            "narrow",
            Tensor::from_parts(out_shape, out),
            Op::Narrow { x, outer, in_chunk, offset, out_chunk },
            rg,
        )
    }

    /// Index `i` along the leading axis, dropping that axis.
    pub fn index0(&mut self, x: Var, i: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let y = self.narrow(x, 0, i, 1)?;
        if shape.len() == 1 {
            return Ok(y);
        }
        self.reshape(y, shape[1..].to_vec())
    }

    /// `[a × b × rest..] -> [b × a × rest..]`.
    pub fn swap_leading(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).swap_leading_axes()?;
        let s = self.shape(x);
        let (a, b, rest) = (s[0], s[1], numel_of(&s[2..]));
        let rg = self.rg(&[x]);
        self.push("swap_leading", value, Op::SwapLeading { x, a, b, rest }, rg)
    }

    /// Row lookup `table[ids]`, `[V × d] -> [ids.len() × d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let s = self.shape(table).to_vec();
        if s.len() != 2 || ids.is_empty() {
            return Err(Error::dim("gather_rows", format!("table {s:?} with {} ids", ids.len())));
        }
        let (rows, width) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::dim("gather_rows", format!("row {bad} out of range for table {s:?}")));
        }
        let td = self.data(table);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &i in ids {
            out.extend_from_slice(&td[i * width..(i + 1) * width]);
        }
        let rg = self.rg(&[table]);
        self.push(
            "gather_rows",
            Tensor::from_parts(vec![ids.len(), width], out),
            Op::GatherRows { table, ids: ids.to_vec(), width },
            rg,
        )
    }

    /// Picks flat elements of `x` into a vector.
    pub fn select(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let n = self.value(x).numel();
        if idx.is_empty() || idx.iter().any(|&i| i >= n) {
            return Err(Error::dim("select", format!("indices {idx:?} for {n} elements")));
        }
        let xd = self.data(x);
        let out = idx.iter().map(|&i| xd[i]).collect();
        let rg = self.rg(&[x]);
        self.push("select", Tensor::from_parts(vec![idx.len()], out), Op::Select { x, idx: idx.to_vec() }, rg)
    }

    // ---- backward ------------------------------------------------------

    /// Reverse sweep from a scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<S>> {
        let n_params = self.params.map_or(0, |p| p.len());
        let loss_node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Usage("loss is not on this tape".into()))?;
        if loss_node.value.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        if !loss_node.requires_grad {
            return Err(Error::Usage("loss does not depend on any gradient-requiring tensor".into()));
        }

        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<S>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        let mut out = Gradients { params: vec![None; n_params], leaves: HashMap::new(), visited: 0 };

        for id in (0..nodes.len()).rev() {
            out.visited += 1;
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            let mut acc = |v: Var, delta: Vec<S>| {
                if !nodes[v.0].requires_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(existing) => {
                        for (e, d) in existing.iter_mut().zip(delta) {
                            *e += d;
                        }
                    }
                    slot @ None => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Leaf => {
                    out.leaves.insert(id, Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::Param(pid) => {
                    out.params[pid.0] = Some(Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (p, q, r) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let (ad, bd) = (av.data(), bv.data());
                    if nodes[a.0].requires_grad {
                        let mut da = vec![S::zero(); p * q];
                        for i in 0..p {
                            for k in 0..q {
                                let mut s = S::zero();
                                for j in 0..r {
                                    s += g[i * r + j] * bd[k * r + j];
                                }
                                da[i * q + k] = s;
                            }
                        }
                        acc(*a, da);
                    }
                    if nodes[b.0].requires_grad {
                        let mut db = vec![S::zero(); q * r];
                        for i in 0..p {
                            for k in 0..q {
                                let aik = ad[i * q + k];
                                for j in 0..r {
                                    db[k * r + j] += aik * g[i * r + j];
                                }
                            }
                        }
                        acc(*b, db);
                    }
                }
                Op::Binary { kind, a, b } => {
                    let (ad, bd) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    let nb = bd.len();
                    let (ga, gb): (Vec<S>, Vec<S>) = match kind {
                        BinKind::Add | BinKind::Sub => (g.clone(), g.clone()),
                        BinKind::Mul => (
                            g.iter().enumerate().map(|(i, &gi)| gi * bd[i % nb]).collect(),
                            g.iter().zip(ad).map(|(&gi, &ai)| gi * ai).collect(),
                        ),
                    };
                    if nodes[b.0].requires_grad {
                        let mut red = vec![S::zero(); nb];
                        for (i, v) in gb.into_iter().enumerate() {
                            red[i % nb] += v;
                        }
                        if matches!(kind, BinKind::Sub) {
                            red.iter_mut().for_each(|v| *v = -*v);
                        }
                        acc(*b, red);
                    }
                    acc(*a, ga);
                }
                Op::Affine { x, mul } => acc(*x, g.iter().map(|&gi| gi * *mul).collect()),
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    acc(*x, g.iter().zip(y).map(|(&gi, &yi)| gi * yi * (S::one() - yi)).collect());
                }
                Op::Tanh(x) => {
                    let y = node.value.data();
                    acc(*x, g.iter().zip(y).map(|(&gi, &yi)| gi * (S::one() - yi * yi)).collect());
                }
                Op::Gelu(x) => {
                    let xd = nodes[x.0].value.data();
                    acc(*x, g.iter().zip(xd).map(|(&gi, &xi)| gi * gelu(xi).1).collect());
                }
                Op::LogFloor { x, floor } => {
                    let xd = nodes[x.0].value.data();
                    acc(
                        *x,
                        g.iter()
                            .zip(xd)
                            .map(|(&gi, &xi)| if xi > *floor { gi / xi } else { S::zero() })
                            .collect(),
                    );
                }
                Op::Softmax { x, outer, len, inner } => {
                    let y = node.value.data();
                    let mut dx = vec![S::zero(); y.len()];
                    for o in 0..*outer {
                        for n in 0..*inner {
                            let at = |i: usize| o * len * inner + i * inner + n;
                            let mut dot = S::zero();
                            for i in 0..*len {
                                dot += g[at(i)] * y[at(i)];
                            }
                            for i in 0..*len {
                                dx[at(i)] = y[at(i)] * (g[at(i)] - dot);
                            }
                        }
                    }
                    acc(*x, dx);
                }
                Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                    let gd = nodes[gamma.0].value.data();
                    let d = gd.len();
                    let nd = S::from_usize(d).unwrap();
                    let rows = inv_std.len();
                    let mut dx = vec![S::zero(); g.len()];
                    let mut dgamma = vec![S::zero(); d];
                    let mut dbeta = vec![S::zero(); d];
                    for r in 0..rows {
                        let mut mean_g = S::zero();
                        let mut mean_gx = S::zero();
                        for j in 0..d {
                            let gi = g[r * d + j];
                            let h = xhat[r * d + j];
                            dgamma[j] += gi * h;
                            dbeta[j] += gi;
                            let gh = gi * gd[j];
                            mean_g += gh;
                            mean_gx += gh * h;
                        }
                        mean_g /= nd;
                        mean_gx /= nd;
                        for j in 0..d {
                            let gh = g[r * d + j] * gd[j];
                            dx[r * d + j] = inv_std[r] * (gh - mean_g - xhat[r * d + j] * mean_gx);
                        }
                    }
                    acc(*x, dx);
                    acc(*gamma, dgamma);
                    acc(*beta, dbeta);
                }
                Op::Concat { inputs, outer, chunks } => {
                    let total: usize = chunks.iter().sum();
                    let mut offset = 0;
                    for (&v, &c) in inputs.iter().zip(chunks) {
                        if nodes[v.0].requires_grad {
                            let mut part = Vec::with_capacity(outer * c);
                            for o in 0..*outer {
                                let base = o * total + offset;
                                part.extend_from_slice(&g[base..base + c]);
                            }
                            acc(v, part);
                        }
                        offset += c;
                    }
                }
                Op::Narrow { x, outer, in_chunk, offset, out_chunk } => {
                    let mut dx = vec![S::zero(); outer * in_chunk];
                    for o in 0..*outer {
                        let base = o * in_chunk + offset;
                        dx[base..base + out_chunk].copy_from_slice(&g[o * out_chunk..(o + 1) * out_chunk]);
                    }
                    acc(*x, dx);
                }
                Op::SwapLeading { x, a, b, rest } => {
                    // g has layout [b × a × rest]; map back to [a × b × rest].
                    let mut dx = vec![S::zero(); g.len()];
                    for j in 0..*b {
                        for i in 0..*a {
                            let src = (j * a + i) * rest;
                            let dst = (i * b + j) * rest;
                            dx[dst..dst + rest].copy_from_slice(&g[src..src + rest]);
                        }
                    }
                    acc(*x, dx);
                }
                Op::Reshape(x) => acc(*x, g),
                Op::GatherRows { table, ids, width } => {
                    let mut dt = vec![S::zero(); nodes[table.0].value.numel()];
                    for (r, &i) in ids.iter().enumerate() {
                        for k in 0..*width {
                            dt[i * width + k] += g[r * width + k];
                        }
                    }
                    acc(*table, dt);
                }
                Op::Select { x, idx } => {
                    let mut dx = vec![S::zero(); nodes[x.0].value.numel()];
                    for (k, &i) in idx.iter().enumerate() {
                        dx[i] += g[k];
                    }
                    acc(*x, dx);
                }
                Op::Sum(x) => acc(*x, vec![g[0]; nodes[x.0].value.numel()]),
                Op::Mean(x) => {
                    let n = nodes[x.0].value.numel();
                    acc(*x, vec![g[0] / S::from_usize(n).unwrap(); n]);
                }
            }
        }

        for (i, g) in out.params.iter().enumerate() {
            if let Some(g) = g {
                if !g.is_finite() {
                    return Err(Error::Numeric(format!("non-finite gradient for parameter #{i}")));
                }
            }
        }
        Ok(out)
    }
}

/// `1 / (1 + e^-x)`.
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

/// GELU (tanh form) and its derivative.
fn gelu<S: Scalar>(x: S) -> (S, S) {
    let c = S::lit((2.0 / std::f64::consts::PI).sqrt());
    let k = S::lit(0.044715);
    let half = S::lit(0.5);
    let three = S::lit(3.0);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    let y = half * x * (S::one() + t);
    let dy = half * (S::one() + t) + half * x * (S::one() - t * t) * c * (S::one() + three * k * x * x);
    (y, dy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
        Tensor::from_fn(shape.to_vec(), |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn matmul_identity_and_zero() {
        let mut rng = Rng::new(1);
        let m = random(&[3, 3], &mut rng);
        let mut tape = Tape::<f64>::new();
        let i3 = tape.constant(Tensor::from_fn(vec![3, 3], |k| if k % 4 == 0 { 1.0 } else { 0.0 })).unwrap();
        let mv = tape.constant(m.clone()).unwrap();
        let p = tape.matmul(i3, mv).unwrap();
        assert!(tape.value(p).bitwise_eq(&m));

        let a = tape.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let z = tape.constant(t(&[2, 1], &[0.0, 0.0])).unwrap();
        let p = tape.matmul(a, z).unwrap();
        assert_eq!(tape.value(p).data(), &[0.0, 0.0]);
    }

    #[test]
    fn matmul_matches_triple_loop() {
        let mut rng = Rng::new(7);
        let (a, b) = (random(&[4, 5], &mut rng), random(&[5, 3], &mut rng));
        let mut tape = Tape::<f64>::new();
        let (va, vb) = (tape.constant(a.clone()).unwrap(), tape.constant(b.clone()).unwrap());
        let c = tape.matmul(va, vb).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                let mut s = 0.0;
                for k in 0..5 {
                    s += a.at(&[i, k]) * b.at(&[k, j]);
                }
                assert!((tape.value(c).at(&[i, j]) - s).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matmul_shape_error_names_shapes() {
        let mut tape = Tape::<f64>::new();
        let a = tape.zeros(vec![2, 3]).unwrap();
        let b = tape.zeros(vec![2, 3]).unwrap();
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn softmax_cases() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[4], &[0.0; 4])).unwrap();
        let y = tape.softmax(x, 0).unwrap();
        assert_eq!(tape.value(y).data(), &[0.25; 4]);

        let x = tape.constant(t(&[2], &[1000.0, 0.0])).unwrap();
        let y = tape.softmax(x, 0).unwrap();
        assert!((tape.value(y).data()[0] - 1.0).abs() < 1e-12);
        assert!(tape.value(y).data()[1].abs() < 1e-12);

        assert!(tape.softmax(x, 1).is_err());
    }

    #[test]
    fn softmax_matches_naive_oracle() {
        let mut rng = Rng::new(21);
        let v = random(&[6], &mut rng).map_to_vec(|x| x * 3.0);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[6], &v)).unwrap();
        let y = tape.softmax(x, 0).unwrap();
        // Naive exp/sum, accumulated with a compensated sum.
        let exps: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for e in &exps {
            let yk = e - c;
            let tk = sum + yk;
            c = (tk - sum) - yk;
            sum = tk;
        }
        for (got, e) in tape.value(y).data().iter().zip(&exps) {
            assert!((got - e / sum).abs() < 1e-14);
        }
    }

    #[test]
    fn softmax_inner_axis() {
        let mut rng = Rng::new(3);
        let x0 = random(&[2, 3, 4], &mut rng);
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(x0).unwrap();
        let y = tape.softmax(x, 1).unwrap();
        let yv = tape.value(y);
        for o in 0..2 {
            for n in 0..4 {
                let s: f64 = (0..3).map(|i| yv.at(&[o, i, n])).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_cases() {
        let mut tape = Tape::<f64>::new();
        let g = tape.constant(Tensor::full(vec![3], 1.0)).unwrap();
        let b = tape.zeros(vec![3]).unwrap();
        let x = tape.constant(t(&[3], &[5.0, 5.0, 5.0])).unwrap();
        let y = tape.layer_norm(x, g, b, 1e-5).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0; 3]);

        let g2 = tape.constant(Tensor::full(vec![2], 1.0)).unwrap();
        let b2 = tape.zeros(vec![2]).unwrap();
        let x = tape.constant(t(&[2], &[1.0, -1.0])).unwrap();
        let y = tape.layer_norm(x, g2, b2, 1e-5).unwrap();
        let yv = tape.value(y).data();
        assert!((yv[0] - 1.0).abs() < 1e-5 && (yv[1] + 1.0).abs() < 1e-5);

        let mut rng = Rng::new(8);
        let g8 = tape.constant(Tensor::full(vec![8], 1.0)).unwrap();
        let b8 = tape.zeros(vec![8]).unwrap();
        let x = tape.constant(random(&[8], &mut rng)).unwrap();
        let y = tape.layer_norm(x, g8, b8, 1e-5).unwrap();
        let yv = tape.value(y).data();
        let mean = yv.iter().sum::<f64>() / 8.0;
        let var = yv.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 8.0;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-4);

        assert!(tape.layer_norm(x, g, b, 1e-5).is_err());
    }

    #[test]
    fn elementwise_cases() {
        let mut tape = Tape::<f64>::new();
        let z = tape.zeros(vec![1]).unwrap();
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);

        let a = tape.constant(t(&[1, 2], &[1.0, 2.0])).unwrap();
        let b = tape.constant(t(&[1, 1], &[3.0])).unwrap();
        let c = tape.concat(&[a, b], 1).unwrap();
        assert_eq!(tape.shape(c), &[1, 3]);
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);

        let bad = tape.constant(t(&[2, 1], &[1.0, 1.0])).unwrap();
        assert!(tape.concat(&[a, bad], 1).is_err());
        let row = tape.constant(t(&[3], &[1.0, 1.0, 1.0])).unwrap();
        assert!(tape.add(a, row).is_err());
    }

    #[test]
    fn tanh_backward_matches_finite_difference() {
        let x0 = 0.3;
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::scalar(x0)).unwrap();
        let y = tape.tanh(x).unwrap();
        let grads = tape.backward(y).unwrap();
        let analytic = grads.leaf(x).unwrap().data()[0];
        let eps = 1e-5;
        let fd = ((x0 + eps).tanh() - (x0 - eps).tanh()) / (2.0 * eps);
        assert!((analytic - fd).abs() < 1e-6);
    }

    #[test]
    fn backward_linear_and_quadratic() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[3], &[0.5, -1.0, 2.0])).unwrap();
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.leaf(x).unwrap().data(), &[1.0, 1.0, 1.0]);

        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0])).unwrap();
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.leaf(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_usage_errors() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::Usage(_))));

        let mut tape = Tape::<f64>::new();
        let c = tape.constant(t(&[2], &[1.0, 2.0])).unwrap();
        let s = tape.sum(c).unwrap();
        assert!(matches!(tape.backward(s), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_visits_every_node_once() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0])).unwrap();
        let y = tape.tanh(x).unwrap();
        let z = tape.mul(y, x).unwrap();
        let _unused = tape.sigmoid(x).unwrap();
        let s = tape.sum(z).unwrap();
        let n = tape.len();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.nodes_visited(), n);
    }

    #[test]
    fn non_finite_forward_is_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[1], &[f64::MAX])).unwrap();
        assert!(matches!(tape.add(x, x), Err(Error::Numeric(_))));
    }

    #[test]
    fn broadcast_bias_gradient_reduces() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros(vec![3, 2])).unwrap();
        let b = tape.leaf(t(&[2], &[0.1, 0.2])).unwrap();
        let y = tape.add(x, b).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.leaf(b).unwrap().data(), &[3.0, 3.0]);
    }

    trait MapToVec {
        fn map_to_vec(&self, f: impl Fn(f64) -> f64) -> Vec<f64>;
    }
    impl MapToVec for Tensor<f64> {
        fn map_to_vec(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
            self.data().iter().map(|&x| f(x)).collect()
        }
    }
}
