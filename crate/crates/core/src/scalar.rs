//! Floating-point abstraction shared by the numerical core.
//!
//! Every model, surrogate and estimator in this crate is written once against
//! [`Scalar`] and instantiated for `f32` and `f64`. Special functions that the
//! standard library does not expose (the Gaussian CDF) are routed through `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type usable throughout the crate (`f32` or `f64`).
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Draw one standard normal variate.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Draw one variate uniform on `[0, 1)`.
    fn standard_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion from an `f64` literal or intermediate.
    fn of(x: f64) -> Self;

    /// Conversion from a count.
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn as_f64(self) -> f64;

    /// Standard normal cumulative distribution function.
    fn normal_cdf(self) -> Self {
        Self::of(normal_cdf(self.as_f64()))
    }
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                StandardNormal.sample(rng)
            }

            fn standard_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.random::<$t>()
            }

            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Φ(x) for the standard normal distribution, accurate in the far tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Φ⁻¹(p) for the standard normal distribution.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_tail_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(-3.0) / 1.349_898_031_630_093_3e-3 - 1.0).abs() < 1e-12);
        assert!((normal_cdf(-4.5) / 3.397_673_124_730_053_5e-6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-9, 3.4e-6, 0.1, 0.5, 0.9] {
            assert!((normal_cdf(normal_quantile(p)) / p - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn generic_draws_are_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(3);
        let mut b = ChaCha8Rng::seed_from_u64(3);
        let x: f32 = Scalar::standard_normal(&mut a);
        let y: f32 = Scalar::standard_normal(&mut b);
        assert_eq!(x.to_bits(), y.to_bits());
        let u: f64 = Scalar::standard_uniform(&mut a);
        assert!((0.0..1.0).contains(&u));
    }
}
