use std::fmt;

use super::Real;
use crate::error::{Error, Result};

/// Dimensions of a [`Grid`]: `(batch, len, channels)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub len: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(batch: usize, len: usize, channels: usize) -> Self {
        Shape {
            batch,
            len,
            channels,
        }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.len * self.channels
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}×{}×{}]", self.batch, self.len, self.channels)
    }
}

/// Dense row-major three-dimensional array of reals.
#[derive(Clone, PartialEq)]
pub struct Grid<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview = &self.data[..self.data.len().min(8)];
        f.debug_struct("Grid")
            .field("shape", &self.shape)
            .field("data", &preview)
            .finish()
    }
}

impl<T: Real> Grid<T> {
    /// Checked constructor: dimensions must be positive and every entry finite.
    pub fn new(shape: Shape, data: Vec<T>) -> Result<Self> {
        if shape.batch == 0 || shape.len == 0 || shape.channels == 0 {
            return Err(Error::InvalidArgument(format!("grid dimensions must be positive, got {shape}")));
        }
        if data.len() != shape.numel() {
            return Err(Error::shape("Grid::new", shape.numel(), data.len()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: "Grid::new",
                index,
            });
        }
        Ok(Grid { shape, data })
    }

    /// Unchecked constructor used on the hot path; only the length is asserted.
    pub fn from_parts(shape: Shape, data: Vec<T>) -> Self {
        assert_eq!(data.len(), shape.numel(), "grid data length does not match {shape}");
        Grid { shape, data }
    }

    /// Single-sample signal of length `len` with one channel.
    pub fn signal(values: &[T]) -> Result<Self> {
        Self::new(Shape::new(1, values.len(), 1), values.to_vec())
    }

    pub fn zeros(shape: Shape) -> Self {
        Grid {
            shape,
            data: vec![T::zero(); shape.numel()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Grid {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.batch
    }

    pub fn len(&self) -> usize {
        self.shape.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn numel(&self) -> usize {
        self.data.len()
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
    pub fn index(&self, b: usize, l: usize, c: usize) -> usize {
        (b * self.shape.len + l) * self.shape.channels + c
    }

    #[inline]
    pub fn at(&self, b: usize, l: usize, c: usize) -> T {
        self.data[self.index(b, l, c)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, l: usize, c: usize, value: T) {
        let i = self.index(b, l, c);
        self.data[i] = value;
    }

    /// All `len × channels` values of batch member `b`.
    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.shape.len * self.shape.channels;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [T] {
        let n = self.shape.len * self.shape.channels;
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn reshape(self, shape: Shape) -> Result<Self> {
        if shape.numel() != self.data.len() {
            return Err(Error::shape("reshape", self.shape, shape));
        }
        Ok(Grid {
            shape,
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Grid {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Grid<T>) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Element-type conversion (e.g. checkpoint `f32` into an `f64` model).
    pub fn cast<U: Real>(&self) -> Grid<U> {
        Grid {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64().unwrap_or(f64::NAN)))
                .collect(),
        }
    }

    /// Stacks single-sample grids of identical shape along the batch axis.
    pub fn stack(samples: &[Grid<T>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot stack zero grids".into()))?;
        let per = Shape::new(1, first.len(), first.channels());
        let mut data = Vec::with_capacity(per.numel() * samples.len());
        for s in samples {
            if s.shape != per {
                return Err(Error::shape("stack", per, s.shape));
            }
            data.extend_from_slice(&s.data);
        }
        Ok(Grid {
            shape: Shape::new(samples.len(), per.len, per.channels),
            data,
        })
    }

    pub(crate) fn expect_shape(&self, op: &'static str, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(op, expected, self.shape));
        }
        Ok(())
    }
}
