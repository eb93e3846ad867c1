//! Dense rank-4 tensors and a tape-based reverse-mode differentiation graph.
//!
//! Every tensor is laid out as `batch x channels x height x width` in
//! row-major order. Computations are recorded on a [`Graph`]; calling
//! [`Graph::backward`] on a scalar node produces gradients for every node
//! that was created with `requires_grad`.

mod conv;
mod element;
pub mod gradcheck;
mod graph;
mod ops;

pub use element::Element;
pub use graph::{CustomOp, Gradients, Graph, Var};
pub use ops::{partition_subpatches, reassemble_subpatches};

use std::fmt;

use crate::error::{Error, Result};

/// Extents of a rank-4 tensor: `[batch, channels, height, width]`.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape(pub [usize; 4]);

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Shape([n, c, h, w])
    }

    pub const fn scalar() -> Self {
        Shape([1, 1, 1, 1])
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }

    pub fn batch(&self) -> usize {
        self.0[0]
    }

    pub fn channels(&self) -> usize {
        self.0[1]
    }

    pub fn height(&self) -> usize {
        self.0[2]
    }

    pub fn width(&self) -> usize {
        self.0[3]
    }

    /// Elements in one `height x width` plane.
    pub fn plane(&self) -> usize {
        self.0[2] * self.0[3]
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [n, c, h, w] = self.0;
        write!(f, "{n}x{c}x{h}x{w}")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Contiguous NCHW storage.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Shape(format!(
                "tensor of shape {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Shape::scalar(), value)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize) -> T) -> Self {
        Tensor {
            shape,
            data: (0..shape.numel()).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.offset(n, c, y, x)]
    }

    pub fn offset(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cs, hs, ws] = self.shape.0;
        ((n * cs + c) * hs + y) * ws + x
    }

    pub fn reshaped(mut self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.shape.numel() {
            return Err(Error::Shape(format!("cannot reshape {} into {shape}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Precision conversion, e.g. `f32` parameters into an `f64` check.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::cast_f64(v.as_f64())).collect(),
        }
    }

    /// One `(n, c)` plane as a slice.
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.shape.plane();
        let start = (n * self.shape.channels() + c) * p;
        &self.data[start..start + p]
    }

    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let p = self.shape.plane();
        let start = (n * self.shape.channels() + c) * p;
        &mut self.data[start..start + p]
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, ", {:?}", self.data)?;
        }
        write!(f, ")")
    }
}
