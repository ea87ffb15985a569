//! Floating-point scalar abstraction shared by the simulation kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Scalar type the neuron, synapse and inhibition kernels are generic over.
///
/// Implemented for `f32` and `f64`. Configuration values are always carried
/// as `f64` and narrowed with [`Scalar::of`] when a kernel is instantiated.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn of(x: f64) -> Self {
        // Both implementors accept every finite f64 (f32 rounds or saturates to inf).
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
