//! Elementwise activations and arithmetic, each paired with its backward.
//!
//! Backward functions take the upstream gradient and whatever the forward
//! produced (activations are differentiated through their outputs), and
//! return the gradient with respect to each input.

use crate::error::Result;
use crate::scalar::Real;
use crate::tensor::Tensor;

#[inline]
pub fn sigmoid_scalar<R: Real>(x: R) -> R {
    let one = R::one();
    if x >= R::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

pub fn sigmoid<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    x.map(sigmoid_scalar)
}

/// `grad_x = grad_y · y · (1 − y)` where `y = sigmoid(x)`.
pub fn sigmoid_backward<R: Real>(y: &Tensor<R>, grad_y: &Tensor<R>) -> Result<Tensor<R>> {
    y.zip_map(grad_y, "sigmoid_backward", |y, g| g * y * (R::one() - y))
}

pub fn tanh<R: Real>(x: &Tensor<R>) -> Tensor<R> {
    x.map(|v| v.tanh())
}

/// `grad_x = grad_y · (1 − y²)` where `y = tanh(x)`.
pub fn tanh_backward<R: Real>(y: &Tensor<R>, grad_y: &Tensor<R>) -> Result<Tensor<R>> {
    y.zip_map(grad_y, "tanh_backward", |y, g| g * (R::one() - y * y))
}

pub fn hadamard<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    a.zip_map(b, "hadamard", |x, y| x * y)
}

/// Returns `(grad_a, grad_b)`.
pub fn hadamard_backward<R: Real>(
    a: &Tensor<R>,
    b: &Tensor<R>,
    grad: &Tensor<R>,
) -> Result<(Tensor<R>, Tensor<R>)> {
    a.expect_shape("hadamard_backward", b.shape())?;
    Ok((
        grad.zip_map(b, "hadamard_backward", |g, v| g * v)?,
        grad.zip_map(a, "hadamard_backward", |g, v| g * v)?,
    ))
}

pub fn add<R: Real>(a: &Tensor<R>, b: &Tensor<R>) -> Result<Tensor<R>> {
    a.zip_map(b, "add", |x, y| x + y)
}

pub fn add_backward<R: Real>(grad: &Tensor<R>) -> (Tensor<R>, Tensor<R>) {
    (grad.clone(), grad.clone())
}

pub fn scale<R: Real>(a: &Tensor<R>, k: R) -> Tensor<R> {
    a.map(|v| v * k)
}

pub fn scale_backward<R: Real>(grad: &Tensor<R>, k: R) -> Tensor<R> {
    grad.map(|g| g * k)
}
