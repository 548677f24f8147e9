//! Independent uncertain parameters and their isoprobabilistic transforms.
//!
//! Three coordinate systems are involved:
//!
//! * physical θ, distributed according to the declared marginals;
//! * polynomial-chaos standard space ξ (`N(0,1)` for Gaussian marginals,
//!   `U(-1,1)` for uniform marginals), where the orthogonal bases live;
//! * Gaussian space u (`N(0,I)` in every dimension), where the conditional
//!   sampling kernel operates. For Gaussian marginals u and ξ coincide.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::PolynomialFamily;
use crate::scalar::Scalar;

/// Marginal distribution of one uncertain parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum MarginalDistribution<T> {
    Gaussian { mean: T, std_dev: T },
    Uniform { lower: T, upper: T },
}

impl<T: Scalar> MarginalDistribution<T> {
    pub fn gaussian(mean: T, std_dev: T) -> Result<Self> {
        let m = Self::Gaussian { mean, std_dev };
        m.validate()?;
        Ok(m)
    }

    pub fn uniform(lower: T, upper: T) -> Result<Self> {
        let m = Self::Uniform { lower, upper };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Gaussian { mean, std_dev } => {
                if !mean.is_finite() || !(std_dev > T::zero()) || !std_dev.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "gaussian marginal needs finite mean and std_dev > 0 (got {mean}, {std_dev})"
                    )));
                }
            }
            Self::Uniform { lower, upper } => {
                if !lower.is_finite() || !upper.is_finite() || !(lower < upper) {
                    return Err(Error::InvalidParameter(format!(
                        "uniform marginal needs lower < upper (got {lower}, {upper})"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Orthogonal polynomial family matched to this marginal.
    pub fn family(&self) -> PolynomialFamily {
        match self {
            Self::Gaussian { .. } => PolynomialFamily::Hermite,
            Self::Uniform { .. } => PolynomialFamily::Legendre,
        }
    }

    pub fn to_standard(&self, theta: T) -> T {
        match *self {
            Self::Gaussian { mean, std_dev } => (theta - mean) / std_dev,
            Self::Uniform { lower, upper } => T::of(2.0) * (theta - lower) / (upper - lower) - T::one(),
        }
    }

    pub fn from_standard(&self, xi: T) -> T {
        match *self {
            Self::Gaussian { mean, std_dev } => mean + std_dev * xi,
            Self::Uniform { lower, upper } => lower + (upper - lower) * (xi + T::one()) / T::of(2.0),
        }
    }

    /// Map a standard normal variate to this marginal (`F⁻¹(Φ(u))`).
    pub fn from_gaussian(&self, u: T) -> T {
        match *self {
            Self::Gaussian { mean, std_dev } => mean + std_dev * u,
            Self::Uniform { lower, upper } => lower + (upper - lower) * u.normal_cdf(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            Self::Gaussian { mean, std_dev } => mean + std_dev * T::standard_normal(rng),
            Self::Uniform { lower, upper } => lower + (upper - lower) * T::standard_uniform(rng),
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Gaussian { mean, .. } => mean,
            Self::Uniform { lower, upper } => (lower + upper) / T::of(2.0),
        }
    }
}

/// Vector of mutually independent uncertain parameters θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<MarginalDistribution<T>>", into = "Vec<MarginalDistribution<T>>")]
#[serde(bound = "T: Scalar")]
pub struct UncertainVector<T> {
    marginals: Vec<MarginalDistribution<T>>,
}

impl<T: Scalar> TryFrom<Vec<MarginalDistribution<T>>> for UncertainVector<T> {
    type Error = Error;

    fn try_from(marginals: Vec<MarginalDistribution<T>>) -> Result<Self> {
        Self::new(marginals)
    }
}

impl<T> From<UncertainVector<T>> for Vec<MarginalDistribution<T>> {
    fn from(uv: UncertainVector<T>) -> Self {
        uv.marginals
    }
}

impl<T: Scalar> UncertainVector<T> {
    pub fn new(marginals: Vec<MarginalDistribution<T>>) -> Result<Self> {
        if marginals.is_empty() {
            return Err(Error::InvalidParameter("an uncertain vector needs at least one marginal".into()));
        }
        for m in &marginals {
            m.validate()?;
        }
        Ok(Self { marginals })
    }

    /// `p` independent standard normal parameters.
    pub fn standard_normal(p: usize) -> Result<Self> {
        Self::new(vec![MarginalDistribution::Gaussian { mean: T::zero(), std_dev: T::one() }; p])
    }

    /// `p` i.i.d. Gaussian parameters.
    pub fn iid_gaussian(p: usize, mean: T, std_dev: T) -> Result<Self> {
        Self::new(vec![MarginalDistribution::gaussian(mean, std_dev)?; p])
    }

    pub fn dim(&self) -> usize {
        self.marginals.len()
    }

    pub fn marginals(&self) -> &[MarginalDistribution<T>] {
        &self.marginals
    }

    pub fn families(&self) -> Vec<PolynomialFamily> {
        self.marginals.iter().map(|m| m.family()).collect()
    }

    pub fn mean(&self) -> Vec<T> {
        self.marginals.iter().map(|m| m.mean()).collect()
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: len });
        }
        Ok(())
    }

    /// Draw `n` i.i.d. parameter vectors.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<T>> {
        (0..n).map(|_| self.marginals.iter().map(|m| m.sample(rng)).collect()).collect()
    }

    /// Isoprobabilistic transform θ ↦ ξ.
    pub fn to_standard(&self, theta: &[T]) -> Result<Vec<T>> {
        self.check(theta.len())?;
        Ok(self.marginals.iter().zip(theta).map(|(m, &t)| m.to_standard(t)).collect())
    }

    /// Inverse transform ξ ↦ θ.
    pub fn from_standard(&self, xi: &[T]) -> Result<Vec<T>> {
        self.check(xi.len())?;
        Ok(self.marginals.iter().zip(xi).map(|(m, &x)| m.from_standard(x)).collect())
    }

    /// Map a point of Gaussian space u to θ.
    pub fn from_gaussian(&self, u: &[T]) -> Result<Vec<T>> {
        self.check(u.len())?;
        Ok(self.marginals.iter().zip(u).map(|(m, &x)| m.from_gaussian(x)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn moments(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
        let n = xs.clone().count() as f64;
        let mean = xs.clone().sum::<f64>() / n;
        let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var.sqrt())
    }

    #[test]
    fn gaussian_sample_moments() {
        let uv = UncertainVector::iid_gaussian(3, 1.0, 0.15).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = uv.sample(100_000, &mut rng);
        for r in 0..3 {
            let (m, s) = moments(draws.iter().map(|d| d[r]));
            assert!((m - 1.0).abs() < 0.005, "mean {m}");
            assert!((s - 0.15).abs() < 0.005, "std {s}");
        }
    }

    #[test]
    fn standard_normal_symmetry() {
        let uv = UncertainVector::<f64>::standard_normal(1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let below = uv.sample(100_000, &mut rng).iter().filter(|d| d[0] < 0.0).count();
        assert!((below as f64 / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic() {
        let uv = UncertainVector::new(vec![MarginalDistribution::uniform(0.0, 1.0).unwrap()]).unwrap();
        let a = uv.sample(1, &mut ChaCha8Rng::seed_from_u64(99));
        let b = uv.sample(1, &mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(a, b);
    }

    #[test]
    fn transform_examples() {
        let g = MarginalDistribution::gaussian(1.0f64, 0.15).unwrap();
        assert_eq!(g.to_standard(1.0), 0.0);
        assert!((g.to_standard(1.3) - 2.0).abs() < 1e-14);
        let u = MarginalDistribution::uniform(2.0, 4.0).unwrap();
        assert_eq!(u.to_standard(4.0), 1.0);
        let id = MarginalDistribution::gaussian(0.0, 1.0).unwrap();
        assert_eq!(id.from_standard(0.37), 0.37);
        let id = MarginalDistribution::uniform(-1.0f64, 1.0).unwrap();
        assert!((id.from_standard(0.37) - 0.37).abs() < 1e-15);
    }

    #[test]
    fn round_trip_on_random_points() {
        let uv = UncertainVector::new(vec![
            MarginalDistribution::gaussian(1.0f64, 0.15).unwrap(),
            MarginalDistribution::uniform(2.0, 4.0).unwrap(),
            MarginalDistribution::gaussian(-3.0, 2.5).unwrap(),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 0.0;
        for theta in uv.sample(100, &mut rng) {
            let back = uv.from_standard(&uv.to_standard(&theta).unwrap()).unwrap();
            for (a, b) in theta.iter().zip(&back) {
                worst = worst.max((a - b).abs() / a.abs().max(1.0));
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn rejects_bad_marginals_and_dimensions() {
        assert!(MarginalDistribution::gaussian(0.0, 0.0).is_err());
        assert!(MarginalDistribution::uniform(1.0, 1.0).is_err());
        assert!(UncertainVector::<f64>::new(vec![]).is_err());
        let uv = UncertainVector::<f64>::standard_normal(3).unwrap();
        assert_eq!(uv.to_standard(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 3, got: 2 }));
        assert!(uv.from_standard(&[0.0; 4]).is_err());
    }

    #[test]
    fn uniform_gaussian_map_covers_interval() {
        let u = MarginalDistribution::uniform(2.0f64, 4.0).unwrap();
        assert!((u.from_gaussian(0.0) - 3.0).abs() < 1e-14);
        assert!(u.from_gaussian(-8.0) > 2.0 && u.from_gaussian(8.0) < 4.0);
    }

    #[test]
    fn works_in_single_precision() {
        let uv = UncertainVector::<f32>::iid_gaussian(2, 1.0, 0.5).unwrap();
        let xi = uv.to_standard(&[2.0, 0.0]).unwrap();
        assert_eq!(xi, vec![2.0, -2.0]);
    }
}
