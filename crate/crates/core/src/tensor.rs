//! Dense row-major tensor.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Dense N-dimensional array stored contiguously in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R = f32> {
    shape: Vec<usize>,
    data: Vec<R>,
}

fn checked_len(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl<R: Real> Tensor<R> {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, R::zero())
    }

    pub fn full(shape: &[usize], value: R) -> Result<Self> {
        let len = checked_len(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<R>) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != data.len() {
            return Err(Error::DataLength {
                shape: shape.to_vec(),
                got: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Builds a tensor from `f64` values, rounding into `R`.
    pub fn from_f64(shape: &[usize], data: &[f64]) -> Result<Self> {
        Self::from_vec(shape, data.iter().map(|&v| R::of_f64(v)).collect())
    }

    pub fn scalar(value: R) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<R> {
        self.data
    }

    /// Extent of the last axis.
    pub fn channels(&self) -> usize {
        *self.shape.last().expect("tensor shape is never empty")
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = checked_len(shape)?;
        if len != self.data.len() {
            return Err(Error::DataLength {
                shape: shape.to_vec(),
                got: self.data.len(),
            });
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| S::of_f64(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(R) -> R) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(R, R) -> R) -> Result<Self> {
        self.expect_shape(op, other.shape())?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn expect_shape(&self, op: &'static str, shape: &[usize]) -> Result<()> {
        if self.shape != shape {
            return Err(Error::shape(op, shape, &self.shape));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, op: &'static str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(op))
        }
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.expect_shape("add_assign", other.shape())?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: R) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Sum of squares accumulated in `f64`.
    pub fn sum_sq(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let v = v.as_f64();
                v * v
            })
            .sum()
    }

    pub fn min_max(&self) -> (R, R) {
        self.data.iter().fold((R::infinity(), R::neg_infinity()), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
    }

    /// Contiguous sub-tensor at `index` along the leading axis.
    pub fn outer(&self, index: usize) -> Result<Self> {
        let (inner_shape, stride) = self.outer_layout()?;
        if index >= self.shape[0] {
            return Err(Error::invalid("outer index out of range"));
        }
        Ok(Tensor {
            shape: inner_shape,
            data: self.data[index * stride..(index + 1) * stride].to_vec(),
        })
    }

    pub fn outer_slice(&self, index: usize) -> &[R] {
        let stride = self.data.len() / self.shape[0];
        &self.data[index * stride..(index + 1) * stride]
    }

    pub fn outer_slice_mut(&mut self, index: usize) -> &mut [R] {
        let stride = self.data.len() / self.shape[0];
        &mut self.data[index * stride..(index + 1) * stride]
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(parts: &[Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("stack"))?;
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(first.len() * parts.len());
        for p in parts {
            p.expect_shape("stack", first.shape())?;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor { shape, data })
    }

    fn outer_layout(&self) -> Result<(Vec<usize>, usize)> {
        if self.shape.len() < 2 {
            return Err(Error::invalid("outer() needs rank >= 2"));
        }
        Ok((self.shape[1..].to_vec(), self.data.len() / self.shape[0]))
    }
}

/// Square root of the sum of squares of every element of every tensor.
pub fn global_norm<R: Real>(tensors: &[&Tensor<R>]) -> f64 {
    Float::sqrt(tensors.iter().map(|t| t.sum_sq()).sum::<f64>())
}
