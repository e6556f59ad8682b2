//! Scalar abstraction for the numerical core.
//!
//! The latency solver, the relay-subset optimizer and the small simplex all
//! run over any [`Real`]; the simulator is fixed to `f64` seconds.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar usable by the latency and optimization code: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Machine epsilon scaled for pivoting and ratio tests.
    fn tolerance() -> Self {
        Self::epsilon() * Self::lit(64.0)
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `|a - b| <= tol * max(1, |a|, |b|)`; infinities compare equal only to themselves.
pub fn approx_eq<T: Real>(a: T, b: T, tol: T) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    let scale = T::one().max(a.abs()).max(b.abs());
    (a - b).abs() <= tol * scale
}
