use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating point type usable as a probability.
///
/// Implemented for `f32` and `f64`. Everything in [`crate::distribution`] is
/// written against this trait; the rest of the crate uses the `f64` aliases
/// exported at the crate root.
pub trait Probability:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Slack allowed on `Σp = 1` for a distribution over `len` outcomes.
    fn sum_tolerance(len: usize) -> Self {
        let floor = Self::from_f64(1e-9).unwrap();
        let scaled = Self::epsilon() * Self::from_usize(len.max(1) * 16).unwrap();
        floor.max(scaled)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).unwrap()
    }
}

impl Probability for f32 {}
impl Probability for f64 {}
