//! Gaussian conditional sampling in standard normal space.
//!
//! The kernel proposes `u* = ρu + √(1−ρ²)ε`, which leaves `N(0, I)`
//! invariant, and accepts the candidate iff its screened value does not
//! exceed the current threshold. A rejected move repeats the current state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default proposal correlation.
pub const DEFAULT_RHO: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalKernel<T> {
    rho: T,
}

impl<T: Scalar> Default for ConditionalKernel<T> {
    fn default() -> Self {
        Self { rho: T::of(DEFAULT_RHO) }
    }
}

impl<T: Scalar> ConditionalKernel<T> {
    pub fn new(rho: T) -> Result<Self> {
        if !(rho >= T::zero() && rho < T::one()) {
            return Err(Error::InvalidParameter(format!("rho must lie in [0, 1), got {rho}")));
        }
        Ok(Self { rho })
    }

    pub fn rho(&self) -> T {
        self.rho
    }

    /// Draw a candidate from the conditional proposal around `current`.
    pub fn propose<R: Rng + ?Sized>(&self, current: &[T], rng: &mut R) -> Vec<T> {
        let s = (T::one() - self.rho * self.rho).sqrt();
        current.iter().map(|&u| self.rho * u + s * T::standard_normal(rng)).collect()
    }
}

/// Samples generated from one seed, the seed included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Chain<T: Scalar> {
    pub states: Vec<Vec<T>>,
    pub values: Vec<T>,
    /// Whether state `i` came from an accepted move (`false` for the seed).
    pub accepted: Vec<bool>,
    /// Number of times the screening function was called.
    pub screen_calls: usize,
}

impl<T: Scalar> Chain<T> {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.len() < 2 {
            return 0.0;
        }
        self.accepted.iter().filter(|&&a| a).count() as f64 / (self.len() - 1) as f64
    }
}

/// Grow a chain of `len` states from `seed`, keeping candidates whose
/// screened value is `≤ threshold`.
pub fn advance_chain<T, R, F>(
    kernel: &ConditionalKernel<T>,
    seed: Vec<T>,
    seed_value: T,
    len: usize,
    threshold: T,
    mut screen: F,
    rng: &mut R,
) -> Chain<T>
where
    T: Scalar,
    R: Rng + ?Sized,
    F: FnMut(&[T]) -> T,
{
    let mut states = Vec::with_capacity(len);
    let mut values = Vec::with_capacity(len);
    let mut accepted = Vec::with_capacity(len);
    states.push(seed);
    values.push(seed_value);
    accepted.push(false);
    let mut screen_calls = 0;
    for _ in 1..len {
        let current = states.last().unwrap();
        let candidate = kernel.propose(current, rng);
        let v = screen(&candidate);
        screen_calls += 1;
        if v <= threshold {
            states.push(candidate);
            values.push(v);
            accepted.push(true);
        } else {
            let (s, v) = (current.clone(), *values.last().unwrap());
            states.push(s);
            values.push(v);
            accepted.push(false);
        }
    }
    Chain { states, values, accepted, screen_calls }
}

/// Independent stream for chain `chain` of level `level` under `master`.
pub fn chain_rng(master: u64, level: usize, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((level as u64) << 32) | chain as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::normal_cdf;

    #[test]
    fn rejects_bad_rho() {
        assert!(ConditionalKernel::new(1.0f64).is_err());
        assert!(ConditionalKernel::new(-0.1f64).is_err());
        assert!(ConditionalKernel::new(0.0f64).is_ok());
    }

    #[test]
    fn zero_rho_decorrelates() {
        let k = ConditionalKernel::new(0.0f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sxy = 0.0;
        for _ in 0..n {
            let x = f64::standard_normal(&mut rng);
            let y = k.propose(&[x], &mut rng)[0];
            sxy += x * y;
        }
        assert!((sxy / n as f64).abs() < 0.02);
    }

    #[test]
    fn proposal_is_stationary_and_reversible() {
        let k = ConditionalKernel::new(0.8f64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        let mut hist = [[0usize; 4]; 4];
        let bin = |v: f64| (((v + 2.0) / 1.0).floor().clamp(0.0, 3.0)) as usize;
        for _ in 0..n {
            let x = f64::standard_normal(&mut rng);
            let y = k.propose(&[x], &mut rng)[0];
            m1 += y;
            m2 += y * y;
            hist[bin(x)][bin(y)] += 1;
        }
        let mean = m1 / n as f64;
        let var = m2 / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 5.0 * (2.0 / n as f64).sqrt());
        for i in 0..4 {
            for j in 0..i {
                let (a, b) = (hist[i][j] as f64, hist[j][i] as f64);
                assert!((a - b).abs() <= 5.0 * (a + b).sqrt().max(1.0), "{i},{j}: {a} {b}");
            }
        }
    }

    #[test]
    fn accept_all_screen() {
        let k = ConditionalKernel::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let chain = advance_chain(&k, vec![0.1, 0.2], 0.0, 50, f64::INFINITY, |_| 0.0, &mut rng);
        assert_eq!(chain.len(), 50);
        assert_eq!(chain.screen_calls, 49);
        assert!(chain.accepted[1..].iter().all(|&a| a));
        for w in chain.states.windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn chains_are_reproducible() {
        let k = ConditionalKernel::<f64>::default();
        let h = |u: &[f64]| 1.0 - u[0];
        let a = advance_chain(&k, vec![1.5], -0.5, 30, 0.0, h, &mut chain_rng(9, 2, 7));
        let b = advance_chain(&k, vec![1.5], -0.5, 30, 0.0, h, &mut chain_rng(9, 2, 7));
        assert_eq!(a, b);
        let c = advance_chain(&k, vec![1.5], -0.5, 30, 0.0, h, &mut chain_rng(9, 2, 8));
        assert_ne!(a, c);
        assert!(a.values.iter().all(|&v| v <= 0.0));
    }

    /// Chains conditioned on `h(u) = 2 − u₀ ≤ b` must reproduce the truncated
    /// normal law of `u₀`.
    #[test]
    fn conditional_distribution_matches_truncated_normal() {
        let k = ConditionalKernel::<f64>::default();
        let b = 0.5;
        let h = |u: &[f64]| 2.0 - u[0];
        let mut values = Vec::new();
        for c in 0..100 {
            let seed = vec![1.6 + 0.01 * c as f64, 0.0];
            let mut rng = chain_rng(42, 1, c);
            // Burn-in so the seed's position does not bias the sample.
            let warm = advance_chain(&k, seed, 0.0, 100, b, h, &mut rng);
            let start = warm.states.last().unwrap().clone();
            let chain = advance_chain(&k, start.clone(), h(&start), 100, b, h, &mut rng);
            values.extend(chain.values);
        }
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let tail = normal_cdf(-1.5);
        let cdf = |v: f64| normal_cdf(v - 2.0) / tail;
        let d = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = cdf(v);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.02, "Kolmogorov distance {d}");
    }
}
