use std::collections::HashMap;

use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Handle to one trainable tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<S = f64> {
    names: Vec<String>,
    values: Vec<Tensor<S>>,
    by_name: HashMap<String, usize>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), values: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<S>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Usage(format!("duplicate parameter name {name:?}")));
        }
        if !value.is_finite() {
            return Err(Error::Numeric(format!("parameter {name:?} initialized with non-finite values")));
        }
        let id = self.values.len();
        self.by_name.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(id))
    }

    /// Uniform(-a, a) with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(&mut self, name: impl Into<String>, fan_in: usize, fan_out: usize, rng: &mut Rng) -> Result<ParamId> {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let t = Tensor::from_fn(vec![fan_in, fan_out], |_| S::lit(rng.uniform(-a, a)));
        self.add(name, t)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: impl Into<Vec<usize>>) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape))
    }

    pub fn ones(&mut self, name: impl Into<String>, shape: impl Into<Vec<usize>>) -> Result<ParamId> {
        self.add(name, Tensor::full(shape, S::one()))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    /// Replaces a parameter value; the shape must not change.
    pub fn set(&mut self, id: ParamId, value: Tensor<S>) -> Result<()> {
        let current = &self.values[id.0];
        if current.shape() != value.shape() {
            return Err(Error::dim(
                "ParamSet::set",
                format!("{} has shape {:?}, got {:?}", self.names[id.0], current.shape(), value.shape()),
            ));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<S>)> {
        self.values.iter().enumerate().map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn total_elements(&self) -> usize {
        self.values.iter().map(|t| t.numel()).sum()
    }

    pub fn bitwise_eq(&self, other: &ParamSet<S>) -> bool {
        self.names == other.names && self.values.iter().zip(&other.values).all(|(a, b)| a.bitwise_eq(b))
    }
}

/// Result of a backward pass: gradients for parameters and for
/// gradient-requiring leaves, plus the number of tape nodes visited.
#[derive(Clone, Debug)]
pub struct Gradients<S = f64> {
    pub(crate) params: Vec<Option<Tensor<S>>>,
    pub(crate) leaves: HashMap<usize, Tensor<S>>,
    pub(crate) visited: usize,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for a parameter; `None` if it did not take part in the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<S>> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn leaf(&self, var: super::Var) -> Option<&Tensor<S>> {
        self.leaves.get(&var.id())
    }

    pub fn nodes_visited(&self) -> usize {
        self.visited
    }

    pub fn global_norm(&self) -> f64 {
        self.params
            .iter()
            .flatten()
            .flat_map(|t| t.data().iter())
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Plain SGD with optional global-norm clipping. Returns the norm before
    /// clipping.
    pub fn apply_sgd(&self, params: &mut ParamSet<S>, lr: f64, clip_norm: Option<f64>) -> f64 {
        let norm = self.global_norm();
        let scale = match clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let step = S::lit(lr * scale);
        for (i, g) in self.params.iter().enumerate() {
            let Some(g) = g else { continue };
            let p = params.values[i].data_mut();
            for (p, &g) in p.iter_mut().zip(g.data()) {
                *p -= step * g;
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::<f64>::new();
        p.zeros("w", vec![2]).unwrap();
        assert!(p.zeros("w", vec![3]).is_err());
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let mut a = ParamSet::<f64>::new();
        let mut b = ParamSet::<f64>::new();
        let ia = a.glorot("w", 4, 6, &mut Rng::new(3)).unwrap();
        b.glorot("w", 4, 6, &mut Rng::new(3)).unwrap();
        let bound = (6.0f64 / 10.0).sqrt();
        assert!(a.get(ia).data().iter().all(|x| x.abs() <= bound));
        assert!(a.bitwise_eq(&b));
    }

    #[test]
    fn set_checks_shape() {
        let mut p = ParamSet::<f64>::new();
        let id = p.zeros("b", vec![3]).unwrap();
        assert!(p.set(id, Tensor::zeros(vec![4])).is_err());
        p.set(id, Tensor::full(vec![3], 2.0)).unwrap();
        assert_eq!(p.get(id).data(), &[2.0; 3]);
    }
}
