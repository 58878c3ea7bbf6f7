use core::fmt::Debug;
use num_traits::Float;

/// Floating-point element type of a [`Tensor`](crate::Tensor).
///
/// Parameters are stored as `f32`; every kernel is generic so the gradient
/// oracles can run the identical code path in `f64`.
pub trait Real: Float + Default + Debug + Send + Sync + 'static {
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
