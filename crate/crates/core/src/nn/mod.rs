//! Minimal CPU neural-network engine: a handful of dense-prediction ops with
//! reverse-mode differentiation over a linear tape.
//!
//! The op set is exactly what the encoder/decoder architectures in
//! [`crate::models`] need, nothing more. All math is generic over [`Scalar`]
//! so tests can run the same graphs in `f64` when checking gradients against
//! finite differences.

pub mod kernels;
pub mod optim;
pub mod store;
pub mod tape;

pub use optim::{Adam, Optimizer, Sgd};
pub use store::{Parameter, ParameterStore};
pub use tape::{Mode, Tape, Var};

use rand::Rng;

/// Epsilon added to batch-norm variances before the reciprocal square root.
pub const BN_EPS: f64 = 1e-5;
/// Exponential moving-average coefficient for batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;

/// Element type for network math.
///
/// `f32` is the runtime type; `f64` exists for finite-difference gradient
/// checks, where `f32` rounding would drown the signal at the tolerances
/// the tests pin.
pub trait Scalar: ndarray::NdFloat + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// One draw from the standard normal distribution.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(rand_distr::StandardNormal)
    }
}
