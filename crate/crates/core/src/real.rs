//! Scalar abstraction so the same layers run in 32-bit (training, inference)
//! and 64-bit (gradient and estimator oracles).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Default
    + Debug
    + Display
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Central-difference step used by [`crate::nn::grad_check`].
    const FD_STEP: f64;

    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const FD_STEP: f64 = 1e-3;
}

impl Real for f64 {
    const FD_STEP: f64 = 1e-6;
}
