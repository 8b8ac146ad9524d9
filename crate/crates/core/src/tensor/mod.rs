//! Dense row-major tensors, the autodiff tape, parameters and gradient checks.

mod gradcheck;
mod params;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{Gradients, ParamId, ParamSet};
pub use tape::{Tape, Var};

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Immutable n-dimensional value. Storage is shared, so `reshape` and clones
/// never copy elements.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = f64> {
    shape: Vec<usize>,
    data: Arc<Vec<S>>,
}

pub(crate) fn numel_of(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_shape(op: &'static str, shape: &[usize]) -> Result<()> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::dim(op, format!("shape {shape:?} must have positive dimensions")));
    }
    Ok(())
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<S>) -> Result<Self> {
        let shape = shape.into();
        check_shape("tensor", &shape)?;
        if numel_of(&shape) != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} needs {} values, got {}", numel_of(&shape), data.len()),
            ));
        }
        Ok(Tensor { shape, data: Arc::new(data) })
    }

    /// Callers guarantee `data.len() == prod(shape)`.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert_eq!(numel_of(&shape), data.len());
        Tensor { shape, data: Arc::new(data) }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, S::zero())
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: S) -> Self {
        let shape = shape.into();
        let n = numel_of(&shape);
        Tensor::from_parts(shape, vec![value; n])
    }

    pub fn scalar(value: S) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn from_fn(shape: impl Into<Vec<usize>>, f: impl FnMut(usize) -> S) -> Self {
        let shape = shape.into();
        let data = (0..numel_of(&shape)).map(f).collect();
        Tensor::from_parts(shape, data)
    }

    /// Builds an `f64` literal tensor into any scalar type.
    pub fn from_f64(shape: impl Into<Vec<usize>>, data: &[f64]) -> Result<Self> {
        Tensor::new(shape, data.iter().map(|&x| S::lit(x)).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    /// Copy-on-write access to the elements.
    pub fn data_mut(&mut self) -> &mut [S] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn to_vec(&self) -> Vec<S> {
        self.data.as_ref().clone()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|x| x.as_f64()).collect()
    }

    /// Metadata-only reshape sharing the same storage.
    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Self> {
        let shape = shape.into();
        check_shape("reshape", &shape)?;
        if numel_of(&shape) != self.numel() {
            return Err(Error::dim(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape),
            ));
        }
        Ok(Tensor { shape, data: Arc::clone(&self.data) })
    }

    /// Element at a full multi-index.
    pub fn at(&self, index: &[usize]) -> S {
        assert_eq!(index.len(), self.shape.len(), "index rank");
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            assert!(i < d, "index {index:?} out of bounds for {:?}", self.shape);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Swaps the first two axes: `[a × b × rest..]` becomes `[b × a × rest..]`.
    pub fn swap_leading_axes(&self) -> Result<Self> {
        if self.rank() < 2 {
            return Err(Error::dim("swap_leading_axes", format!("rank-{} tensor {:?}", self.rank(), self.shape)));
        }
        let (a, b) = (self.shape[0], self.shape[1]);
        let rest = numel_of(&self.shape[2..]);
        let mut out = Vec::with_capacity(self.numel());
        for j in 0..b {
            for i in 0..a {
                let start = (i * b + j) * rest;
                out.extend_from_slice(&self.data[start..start + rest]);
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(0, 1);
        Ok(Tensor::from_parts(shape, out))
    }

    /// Bitwise equality of shape and element bit patterns.
    pub fn bitwise_eq(&self, other: &Tensor<S>) -> bool {
        self.shape == other.shape
            && self.data.iter().zip(other.data.iter()).all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }

    pub fn max_abs_diff(&self, other: &Tensor<S>) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::<f64>::new(vec![2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::<f64>::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::<f64>::new(Vec::<usize>::new(), vec![]).is_err());
    }

    #[test]
    fn reshape_shares_storage() {
        let t = Tensor::<f64>::from_fn(vec![2, 3], |i| i as f64);
        let r = t.reshape(vec![3, 2]).unwrap();
        assert!(Arc::ptr_eq(&t.data, &r.data));
        assert_eq!(r.at(&[2, 1]), 5.0);
        assert!(t.reshape(vec![4]).is_err());
    }

    #[test]
    fn swap_leading_axes_is_involution() {
        let t = Tensor::<f64>::from_fn(vec![3, 4, 2], |i| i as f64 * 0.5);
        let s = t.swap_leading_axes().unwrap();
        assert_eq!(s.shape(), &[4, 3, 2]);
        assert_eq!(s.at(&[1, 2, 1]), t.at(&[2, 1, 1]));
        assert!(s.swap_leading_axes().unwrap().bitwise_eq(&t));
    }

    #[test]
    fn copy_on_write() {
        let a = Tensor::<f32>::zeros(vec![2]);
        let mut b = a.clone();
        b.data_mut()[0] = 1.0;
        assert_eq!(a.data(), &[0.0, 0.0]);
        assert_eq!(b.data(), &[1.0, 0.0]);
    }
}
