//! Dense 4-D tensors in (batch, channel, frequency, time) order.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, NumAssign};

use crate::error::{config_err, Result};

/// Floating point element type. Training runs in `f32`; gradient checks in `f64`.
pub trait Scalar: Float + NumAssign + Sum + Default + Debug + Send + Sync + 'static {
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    /// Elements in one (h, w) plane.
    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub const fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.c + c) * self.h + h) * self.w + w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.n, self.c, self.h, self.w)
    }
}

/// Row-major 4-D array with an optional gradient buffer of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Self {
            shape,
            data: vec![value; shape.numel()],
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(config_err(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Self {
            shape,
            data: (0..shape.numel()).map(&mut f).collect(),
            grad: None,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.shape.index(n, c, h, w)]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [T] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![T::zero(); n])
    }

    /// Adds `g` into the gradient slot.
    pub fn accumulate_grad(&mut self, g: &[T]) {
        debug_assert_eq!(g.len(), self.data.len());
        for (a, &b) in self.grad_mut().iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Values and gradient borrowed together.
    pub fn data_and_grad(&mut self) -> (&mut [T], Option<&[T]>) {
        (&mut self.data, self.grad.as_deref())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(config_err(format!(
                "cannot reshape {} into {shape}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_shape(other.shape)?;
        Ok(Self {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            grad: None,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape(other.shape)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn expect_shape(&self, shape: Shape) -> Result<()> {
        if self.shape != shape {
            return Err(config_err(format!(
                "shape mismatch: {} vs {shape}",
                self.shape
            )));
        }
        Ok(())
    }

    /// Rows `[h0, h1)` of the frequency axis.
    pub fn slice_freq(&self, h0: usize, h1: usize) -> Result<Self> {
        let s = self.shape;
        if h0 >= h1 || h1 > s.h {
            return Err(config_err(format!(
                "bad frequency slice {h0}..{h1} of height {}",
                s.h
            )));
        }
        let out_shape = Shape::new(s.n, s.c, h1 - h0, s.w);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..s.n {
            for c in 0..s.c {
                let base = s.index(n, c, h0, 0);
                data.extend_from_slice(&self.data[base..base + (h1 - h0) * s.w]);
            }
        }
        Self::from_vec(out_shape, data)
    }

    /// Concatenates along the frequency axis.
    pub fn concat_freq(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| config_err("concat of zero tensors"))?
            .shape;
        let mut h = 0;
        for p in parts {
            let s = p.shape;
            if (s.n, s.c, s.w) != (first.n, first.c, first.w) {
                return Err(config_err(format!("cannot concat {s} with {first}")));
            }
            h += s.h;
        }
        let out_shape = Shape::new(first.n, first.c, h, first.w);
        let mut data = Vec::with_capacity(out_shape.numel());
        for n in 0..first.n {
            for c in 0..first.c {
                for p in parts {
                    let s = p.shape;
                    let base = s.index(n, c, 0, 0);
                    data.extend_from_slice(&p.data[base..base + s.plane()]);
                }
            }
        }
        Self::from_vec(out_shape, data)
    }

    /// Stacks equally shaped tensors along the batch axis.
    pub fn stack_batch(parts: &[Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| config_err("stack of zero tensors"))?
            .shape;
        let mut data = Vec::with_capacity(first.numel() * parts.len());
        for p in parts {
            if (Shape {
                n: first.n,
                ..p.shape
            }) != first
            {
                return Err(config_err(format!("cannot stack {} with {first}", p.shape)));
            }
            data.extend_from_slice(&p.data);
        }
        let n = parts.iter().map(|p| p.shape.n).sum();
        Self::from_vec(Shape { n, ..first }, data)
    }

    /// Sample `i` as a batch of one.
    pub fn batch_item(&self, i: usize) -> Self {
        let s = self.shape;
        let per = s.c * s.plane();
        Self {
            shape: Shape { n: 1, ..s },
            data: self.data[i * per..(i + 1) * per].to_vec(),
            grad: None,
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
            grad: self
                .grad
                .as_ref()
                .map(|g| g.iter().map(|v| U::of(v.as_f64())).collect()),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 1, 2, 2), vec![0.0; 3]).is_err());
    }

    #[test]
    fn slice_and_concat_roundtrip() {
        let t = Tensor::<f32>::from_fn(Shape::new(2, 3, 6, 4), |i| i as f32);
        let parts: Vec<_> = (0..3)
            .map(|b| t.slice_freq(2 * b, 2 * b + 2).unwrap())
            .collect();
        assert_eq!(Tensor::concat_freq(&parts).unwrap(), t);
    }

    #[test]
    fn grad_slot_matches_shape() {
        let mut t = Tensor::<f32>::zeros(Shape::new(1, 2, 3, 4));
        assert!(t.grad().is_none());
        t.accumulate_grad(&[1.0; 24]);
        t.accumulate_grad(&[1.0; 24]);
        assert_eq!(t.grad().unwrap().len(), t.len());
        assert!(t.grad().unwrap().iter().all(|&g| g == 2.0));
    }
}
