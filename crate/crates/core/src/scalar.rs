//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the MDP machinery is generic over.
///
/// Implemented for `f32` and `f64`. Besides arithmetic it knows how to draw
/// the two primitive random variates the generative model needs, and which
/// tolerance to use when validating probability rows.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Uniform variate on `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Standard normal variate.
    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Absolute tolerance for row sums of a transition kernel.
    fn probability_tolerance() -> Self;

    /// Lossy conversion from `f64`; every constant in the crate goes through here.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 constant representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize representable in scalar type")
    }
}

impl Scalar for f64 {
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn probability_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }

    fn sample_standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn probability_tolerance() -> Self {
        // 64 ulps around 1.0
        64.0 * f32::EPSILON
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let a = f64::sample_unit(&mut rng);
            let b = f32::sample_unit(&mut rng);
            assert!((0.0..1.0).contains(&a));
            assert!((0.0..1.0).contains(&b));
        }
    }

    #[test]
    fn tolerances() {
        assert_eq!(f64::probability_tolerance(), 1e-12);
        assert!(f32::probability_tolerance() > 1e-6);
        assert_eq!(f32::of(0.5), 0.5f32);
    }
}
