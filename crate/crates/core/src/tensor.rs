//! Dense 4-way real and complex arrays.
//!
//! Activations are stored as `[batch, channels, height, width]` in row-major
//! order; convolution weights as `[c_out, c_in, height, width]`. Spectral
//! data uses the same layout with complex entries.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type Shape = [usize; 4];

pub(crate) fn volume(shape: &Shape) -> usize {
    shape.iter().product()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; volume(&shape)],
        }
    }

    /// Builds a tensor, rejecting a length mismatch or any NaN/Inf entry.
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if data.len() != volume(&shape) {
            return Err(Error::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    /// Same as [`Tensor4::from_vec`] without the finiteness scan. Length is
    /// still checked.
    pub(crate) fn from_vec_unchecked(shape: Shape, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), volume(&shape));
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of scalars in one batch element.
    pub fn example_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn example(&self, b: usize) -> &[f64] {
        let m = self.example_len();
        &self.data[b * m..(b + 1) * m]
    }

    pub fn example_mut(&mut self, b: usize) -> &mut [f64] {
        let m = self.example_len();
        &mut self.data[b * m..(b + 1) * m]
    }

    /// Reinterprets the data under a new shape of equal volume.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if volume(&shape) != self.data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    /// Stacks single-example slices into a batch of shape `[n, c, h, w]`.
    pub fn stack(example_shape: [usize; 3], examples: &[&[f64]]) -> Result<Self> {
        let [c, h, w] = example_shape;
        let m = c * h * w;
        let mut data = Vec::with_capacity(m * examples.len());
        for e in examples {
            if e.len() != m {
                return Err(Error::LengthMismatch {
                    shape: [1, c, h, w],
                    len: e.len(),
                });
            }
            data.extend_from_slice(e);
        }
        Ok(Self::from_vec_unchecked([examples.len(), c, h, w], data))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: f64) -> Self {
        self.map(|v| v * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.expect_shape(other.shape)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Self::from_vec_unchecked(self.shape, data))
    }

    pub fn expect_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: self.shape,
            });
        }
        Ok(())
    }

    pub fn to_complex(&self) -> CTensor4 {
        CTensor4 {
            shape: self.shape,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CTensor4 {
    shape: Shape,
    data: Vec<Complex64>,
}

impl CTensor4 {
    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![Complex64::new(0.0, 0.0); volume(&shape)],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != volume(&shape) {
            return Err(Error::LengthMismatch {
                shape,
                len: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { shape, data })
    }

    pub(crate) fn from_vec_unchecked(shape: Shape, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(data.len(), volume(&shape));
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|z| z.norm_sqr()).sum::<f64>())
    }

    /// Largest absolute imaginary part.
    pub fn max_imag(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| f64::max(m, z.im.abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| f64::max(m, z.norm()))
    }

    /// Drops the imaginary parts without any check.
    pub fn real_part(&self) -> Tensor4 {
        Tensor4::from_vec_unchecked(self.shape, self.data.iter().map(|z| z.re).collect())
    }
}

pub fn norm(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
