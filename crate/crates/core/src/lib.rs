//! Allocation-only core of the smogcast aerosol-index forecaster.
//!
//! Everything in this crate is a pure function of its inputs: dense tensor
//! kernels with hand-written backward passes, the convolutional LSTM stack,
//! the loss/similarity metrics, Adam with global-norm clipping, the training
//! loop, and the gridded-cube transforms used to build training windows.
//! File formats, configuration and the command-line surface live in the
//! `smogcast` companion crate.
//!
//! The crate is `no_std` and needs only `alloc`. Enabling the `parallel`
//! feature pulls in rayon and splits convolution work across output rows;
//! the per-element accumulation order is unchanged, so results stay
//! bit-identical to the serial build.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod conv;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Real;
pub use tensor::Tensor;
