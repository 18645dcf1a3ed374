//! Scalar abstraction: every numeric kernel in this crate is generic over a
//! floating-point type. `f64` is the default throughout the crate-root
//! aliases; `f32` works with correspondingly looser tolerances.

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal. Panics only for
    /// values outside the type's range, which never happens for the
    /// constants used here.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("constant not representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar convertible to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
