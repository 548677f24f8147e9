//! Subset simulation: threshold selection, conditional sampling per level,
//! probability estimate, c.o.v. bounds and true-model call accounting.
//!
//! Sampling happens in Gaussian space u; the limit state is evaluated at
//! `θ = uv.from_gaussian(u)`. Failure is `h(θ) ≤ 0`.

use std::cmp::Ordering;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{advance_chain, chain_rng, Chain, ConditionalKernel, DEFAULT_RHO};
use crate::scalar::Scalar;
use crate::uncertainty::UncertainVector;

/// Configuration shared by subset simulation and its surrogate variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SusConfig {
    /// Samples per level.
    pub n: usize,
    /// Conditional probability of intermediate levels.
    pub p0: f64,
    /// Largest admissible number of levels `m`.
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    /// Proposal correlation of the conditional-sampling kernel.
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_max_levels() -> usize {
    20
}

fn default_rho() -> f64 {
    DEFAULT_RHO
}

impl SusConfig {
    pub fn new(n: usize, p0: f64) -> Self {
        Self { n, p0, max_levels: default_max_levels(), rho: DEFAULT_RHO }
    }

    /// `N_s = p0·N`, the number of seeds per level.
    pub fn seeds(&self) -> usize {
        (self.p0 * self.n as f64).round() as usize
    }

    /// Chain length `N / N_s`.
    pub fn chain_len(&self) -> usize {
        self.n / self.seeds().max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("N must be positive".into()));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::InvalidParameter(format!("p0 must lie in (0, 1), got {}", self.p0)));
        }
        let ns = self.seeds();
        if ns == 0 || (self.p0 * self.n as f64 - ns as f64).abs() > 1e-9 * self.n as f64 {
            return Err(Error::InvalidParameter(format!(
                "p0·N = {} is not a positive integer",
                self.p0 * self.n as f64
            )));
        }
        if !self.n.is_multiple_of(ns) {
            return Err(Error::InvalidParameter(format!("N = {} is not divisible by N_s = {ns}", self.n)));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidParameter("max_levels must be at least 1".into()));
        }
        ConditionalKernel::new(self.rho)?;
        Ok(())
    }

    /// Advisory messages for settings outside the recommended band.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if !(0.1..=0.3).contains(&self.p0) {
            w.push(format!("p0 = {} lies outside the recommended band [0.1, 0.3]", self.p0));
        }
        w
    }
}

/// One level of a subset-simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LevelRecord<T: Scalar> {
    pub level: usize,
    /// Threshold `b_{j+1}` derived from this level (the final level records 0).
    pub threshold: T,
    /// Screening threshold `b̃_{j+1}` (surrogate runs only).
    pub candidate_threshold: Option<T>,
    pub conditional_probability: T,
    pub true_calls: usize,
    pub surrogate_calls: usize,
    pub acceptance_rate: f64,
    pub gamma: f64,
    pub cov: f64,
    /// Order picked by the adaptive local response surface (surrogate runs only).
    pub rsm_order: Option<usize>,
    pub rsm_loo: Option<T>,
    /// Samples of the level in θ-space, chain by chain.
    #[serde(skip)]
    pub samples: Vec<Vec<T>>,
    /// Values used for threshold selection (true or surrogate).
    #[serde(skip)]
    pub values: Vec<T>,
    /// Indices of the samples carried forward as seeds.
    #[serde(skip)]
    pub seeds: Vec<usize>,
    /// Indices of true-evaluated candidates and their true values.
    #[serde(skip)]
    pub candidates: Vec<usize>,
    #[serde(skip)]
    pub candidate_values: Vec<T>,
}

/// Outcome of a subset-simulation style estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EstimationResult<T: Scalar> {
    pub p_hat: T,
    /// Intermediate thresholds `b_1 > b_2 > …`, one per non-final level.
    pub thresholds: Vec<T>,
    pub conditional_probabilities: Vec<T>,
    pub m: usize,
    pub n_f: usize,
    pub cov_lower: f64,
    pub cov_upper: f64,
    pub true_calls: usize,
    pub surrogate_calls: usize,
    pub converged: bool,
    pub levels: Vec<LevelRecord<T>>,
}

/// Failure modes of an estimation run.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError<T: Scalar> {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("no convergence within {} levels (p_hat so far {})", .0.m, .0.p_hat)]
    NotConverged(Box<EstimationResult<T>>),
}

pub(crate) fn cmp_values<T: Scalar>(a: &T, b: &T) -> Ordering {
    a.partial_cmp(b).unwrap_or_else(|| a.is_nan().cmp(&b.is_nan()))
}

/// Indices of the `count` smallest values (ties by index) and the
/// `count`-th smallest value.
pub fn select_seeds<T: Scalar>(values: &[T], count: usize) -> (Vec<usize>, T) {
    assert!(count >= 1 && count <= values.len(), "seed count out of range");
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| cmp_values(&values[a], &values[b]));
    order.truncate(count);
    let b = values[order[count - 1]];
    (order, b)
}

/// Per-level indicator stream laid out chain by chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelIndicators {
    pub indicators: Vec<bool>,
    /// Length of each chain; 1 for independent (Monte Carlo) levels.
    pub chain_len: usize,
}

/// Correlation factor `γ` of a level from the chain indicator autocorrelation.
pub fn level_gamma(level: &LevelIndicators) -> f64 {
    let n = level.indicators.len();
    let l = level.chain_len;
    if l <= 1 || n == 0 {
        return 0.0;
    }
    let chains = n / l;
    let p = level.indicators.iter().filter(|&&i| i).count() as f64 / n as f64;
    let r0 = p * (1.0 - p);
    if r0 <= 0.0 {
        return 0.0;
    }
    let mut gamma = 0.0;
    for tau in 1..l {
        let mut s = 0.0;
        for c in 0..chains {
            let chain = &level.indicators[c * l..(c + 1) * l];
            s += (0..l - tau).filter(|&k| chain[k] && chain[k + tau]).count() as f64;
        }
        let r = s / (n - tau * chains) as f64 - p * p;
        gamma += 2.0 * (1.0 - tau as f64 / l as f64) * r / r0;
    }
    gamma
}

/// Level c.o.v. `δ_j = √((1−p_j)/(p_j N)·(1+γ_j))`.
pub fn level_cov(level: &LevelIndicators) -> (f64, f64) {
    let n = level.indicators.len() as f64;
    let p = level.indicators.iter().filter(|&&i| i).count() as f64 / n;
    let gamma = level_gamma(level);
    if p >= 1.0 {
        return (0.0, gamma);
    }
    if p <= 0.0 {
        return (f64::INFINITY, gamma);
    }
    (((1.0 - p) / (p * n) * (1.0 + gamma)).sqrt(), gamma)
}

/// Lower (uncorrelated levels) and upper (fully correlated levels) c.o.v. bounds.
pub fn cov_bounds(levels: &[LevelIndicators]) -> (f64, f64) {
    let deltas: Vec<f64> = levels.iter().map(|l| level_cov(l).0).collect();
    let lower = deltas.iter().map(|d| d * d).sum::<f64>().sqrt();
    let upper = deltas.iter().sum();
    (lower, upper)
}

pub(crate) fn to_theta<T: Scalar>(uv: &UncertainVector<T>, u: &[T]) -> Vec<T> {
    uv.marginals().iter().zip(u).map(|(m, &x)| m.from_gaussian(x)).collect()
}

pub(crate) fn draw_level0<T: Scalar>(p: usize, n: usize, master: u64) -> Vec<Vec<T>> {
    let mut rng = chain_rng(master, 0, 0);
    (0..n).map(|_| (0..p).map(|_| T::standard_normal(&mut rng)).collect()).collect()
}

/// Run conditional-sampling chains from `seeds` in parallel, one stream each.
pub(crate) fn grow_chains<T, F>(
    kernel: &ConditionalKernel<T>,
    seeds: Vec<(Vec<T>, T)>,
    len: usize,
    threshold: T,
    master: u64,
    level: usize,
    screen: &F,
) -> Vec<Chain<T>>
where
    T: Scalar,
    F: Fn(&[T]) -> T + Sync,
{
    seeds
        .into_par_iter()
        .enumerate()
        .map(|(c, (u, v))| {
            let mut rng = chain_rng(master, level, c);
            advance_chain(kernel, u, v, len, threshold, screen, &mut rng)
        })
        .collect()
}

pub(crate) fn indicators_from(len: usize, chain_len: usize, hits: impl IntoIterator<Item = usize>) -> LevelIndicators {
    let mut indicators = vec![false; len];
    for i in hits {
        indicators[i] = true;
    }
    LevelIndicators { indicators, chain_len }
}

pub(crate) fn acceptance<T: Scalar>(chains: &[Chain<T>]) -> f64 {
    let moves: usize = chains.iter().map(|c| c.len().saturating_sub(1)).sum();
    if moves == 0 {
        return 0.0;
    }
    chains.iter().map(|c| c.accepted.iter().filter(|&&a| a).count()).sum::<usize>() as f64 / moves as f64
}

/// Subset simulation on the true limit state `h`.
pub fn run_sus<T, H, R>(
    h: H,
    uv: &UncertainVector<T>,
    cfg: &SusConfig,
    rng: &mut R,
) -> std::result::Result<EstimationResult<T>, RunError<T>>
where
    T: Scalar,
    H: Fn(&[T]) -> T + Sync,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let kernel = ConditionalKernel::new(T::of(cfg.rho))?;
    let master: u64 = rng.random();
    let (n, ns, chain_len) = (cfg.n, cfg.seeds(), cfg.chain_len());
    let screen = |u: &[T]| h(&to_theta(uv, u));

    let mut u_level = draw_level0::<T>(uv.dim(), n, master);
    let mut values: Vec<T> = u_level.par_iter().map(|u| screen(u)).collect();
    let mut true_calls = n;
    let mut level_true_calls = n;
    let mut level_chain_len = 1;
    let mut level_accept = 0.0;
    let mut thresholds = Vec::new();
    let mut levels = Vec::new();
    let mut indicators = Vec::new();

    for j in 0.. {
        let (seeds, b) = select_seeds(&values, ns);
        let samples: Vec<Vec<T>> = u_level.iter().map(|u| to_theta(uv, u)).collect();
        if b <= T::zero() || j + 1 >= cfg.max_levels {
            let converged = b <= T::zero();
            let failures: Vec<usize> = (0..n).filter(|&i| values[i] <= T::zero()).collect();
            let n_f = failures.len();
            let ind = indicators_from(n, level_chain_len, failures.iter().copied());
            let (cov, gamma) = level_cov(&ind);
            indicators.push(ind);
            let p_last = T::of_usize(n_f) / T::of_usize(n);
            levels.push(LevelRecord {
                level: j,
                threshold: T::zero(),
                candidate_threshold: None,
                conditional_probability: p_last,
                true_calls: level_true_calls,
                surrogate_calls: 0,
                acceptance_rate: level_accept,
                gamma,
                cov,
                rsm_order: None,
                rsm_loo: None,
                samples,
                values,
                seeds: failures,
                candidates: Vec::new(),
                candidate_values: Vec::new(),
            });
            let (cov_lower, cov_upper) = cov_bounds(&indicators);
            let mut conditional_probabilities = vec![T::of(cfg.p0); j];
            conditional_probabilities.push(p_last);
            let result = EstimationResult {
                p_hat: T::of(cfg.p0).powi(j as i32) * p_last,
                thresholds,
                conditional_probabilities,
                m: j + 1,
                n_f,
                cov_lower,
                cov_upper,
                true_calls,
                surrogate_calls: 0,
                converged,
                levels,
            };
            return if converged { Ok(result) } else { Err(RunError::NotConverged(Box::new(result))) };
        }

        let ind = indicators_from(n, level_chain_len, seeds.iter().copied());
        let (cov, gamma) = level_cov(&ind);
        indicators.push(ind);
        thresholds.push(b);
        let seed_states: Vec<(Vec<T>, T)> = seeds.iter().map(|&i| (u_level[i].clone(), values[i])).collect();
        levels.push(LevelRecord {
            level: j,
            threshold: b,
            candidate_threshold: None,
            conditional_probability: T::of(cfg.p0),
            true_calls: level_true_calls,
            surrogate_calls: 0,
            acceptance_rate: level_accept,
            gamma,
            cov,
            rsm_order: None,
            rsm_loo: None,
            samples,
            values: std::mem::take(&mut values),
            seeds,
            candidates: Vec::new(),
            candidate_values: Vec::new(),
        });

        let chains = grow_chains(&kernel, seed_states, chain_len, b, master, j + 1, &screen);
        level_true_calls = chains.iter().map(|c| c.screen_calls).sum();
        true_calls += level_true_calls;
        level_accept = acceptance(&chains);
        level_chain_len = chain_len;
        u_level = Vec::with_capacity(n);
        for c in chains {
            u_level.extend(c.states);
            values.extend(c.values);
        }
    }
    unreachable!()
}

/// Crude Monte Carlo with `n` true-model calls, reported as a one-level run.
pub fn run_mcs<T, H, R>(h: H, uv: &UncertainVector<T>, n: usize, rng: &mut R) -> Result<EstimationResult<T>>
where
    T: Scalar,
    H: Fn(&[T]) -> T + Sync,
    R: Rng + ?Sized,
{
    if n == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let master: u64 = rng.random();
    let u_level = draw_level0::<T>(uv.dim(), n, master);
    let samples: Vec<Vec<T>> = u_level.iter().map(|u| to_theta(uv, u)).collect();
    let values: Vec<T> = samples.par_iter().map(|t| h(t)).collect();
    let failures: Vec<usize> = (0..n).filter(|&i| values[i] <= T::zero()).collect();
    let n_f = failures.len();
    let ind = indicators_from(n, 1, failures.iter().copied());
    let (cov, gamma) = level_cov(&ind);
    let p_hat = T::of_usize(n_f) / T::of_usize(n);
    Ok(EstimationResult {
        p_hat,
        thresholds: Vec::new(),
        conditional_probabilities: vec![p_hat],
        m: 1,
        n_f,
        cov_lower: cov,
        cov_upper: cov,
        true_calls: n,
        surrogate_calls: 0,
        converged: true,
        levels: vec![LevelRecord {
            level: 0,
            threshold: T::zero(),
            candidate_threshold: None,
            conditional_probability: p_hat,
            true_calls: n,
            surrogate_calls: 0,
            acceptance_rate: 0.0,
            gamma,
            cov,
            rsm_order: None,
            rsm_loo: None,
            samples,
            values,
            seeds: failures,
            candidates: Vec::new(),
            candidate_values: Vec::new(),
        }],
    })
}

/// Replicate statistics of a batch of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub replicates: usize,
    pub mean: f64,
    pub std_dev: f64,
    /// Empirical c.o.v. `std/mean` across replicates.
    pub empirical_cov: f64,
    pub mean_cov_lower: f64,
    pub mean_cov_upper: f64,
    pub mean_true_calls: f64,
}

impl ReplicateSummary {
    pub fn from_results<T: Scalar>(results: &[EstimationResult<T>]) -> Self {
        let n = results.len() as f64;
        let ps: Vec<f64> = results.iter().map(|r| r.p_hat.as_f64()).collect();
        let mean = ps.iter().sum::<f64>() / n;
        let var = if results.len() > 1 { ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let std_dev = var.sqrt();
        Self {
            replicates: results.len(),
            mean,
            std_dev,
            empirical_cov: if mean > 0.0 { std_dev / mean } else { f64::NAN },
            mean_cov_lower: results.iter().map(|r| r.cov_lower).sum::<f64>() / n,
            mean_cov_upper: results.iter().map(|r| r.cov_upper).sum::<f64>() / n,
            mean_true_calls: results.iter().map(|r| r.true_calls as f64).sum::<f64>() / n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::normal_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn linear(beta: f64) -> impl Fn(&[f64]) -> f64 + Sync {
        move |t: &[f64]| beta - t.iter().sum::<f64>() / (t.len() as f64).sqrt()
    }

    #[test]
    fn crude_monte_carlo_brackets_truth() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let n = 1_000_000;
        let r = run_mcs(linear(3.0), &uv, n, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let p = normal_cdf(-3.0);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((r.p_hat - p).abs() < 3.0 * se, "{} vs {p}", r.p_hat);
        assert_eq!(r.true_calls, n);
        let expected = ((1.0 - r.p_hat) / (r.p_hat * n as f64)).sqrt();
        assert!((r.cov_upper - expected).abs() < 1e-12);
        assert!(run_mcs(linear(3.0), &uv, 0, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SusConfig::new(2000, 0.1).validate().is_ok());
        assert!(SusConfig::new(2000, 0.15).validate().is_err());
        assert!(SusConfig::new(1000, 0.123).validate().is_err());
        assert!(SusConfig::new(0, 0.1).validate().is_err());
        assert!(SusConfig::new(1000, 1.0).validate().is_err());
        assert!(SusConfig::new(1000, 0.1).warnings().is_empty());
        assert_eq!(SusConfig::new(1000, 0.05).warnings().len(), 1);
    }

    #[test]
    fn seed_selection_examples() {
        let v: Vec<f64> = vec![5.0, 3.0, 9.0, 1.0, 10.0, 2.0, 8.0, 4.0, 7.0, 6.0];
        let (s, b) = select_seeds(&v, 3);
        assert_eq!(s, vec![3, 5, 1]);
        assert_eq!(b, 3.0);
        let (s, b) = select_seeds(&[2.0; 6], 4);
        assert_eq!(s, vec![0, 1, 2, 3]);
        assert_eq!(b, 2.0);
    }

    #[test]
    fn crude_monte_carlo_when_first_threshold_fails() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SusConfig::new(1000, 0.1);
        let r = run_sus(linear(0.5), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(r.m, 1);
        assert_eq!(r.true_calls, 1000);
        assert!(r.thresholds.is_empty());
        assert!((r.p_hat - r.n_f as f64 / 1000.0).abs() < 1e-15);
        let mcs = ((1.0 - r.p_hat) / (r.p_hat * 1000.0)).sqrt();
        assert!((r.cov_lower - mcs).abs() < 1e-12 && (r.cov_upper - mcs).abs() < 1e-12);
    }

    #[test]
    fn call_count_identity_and_threshold_monotonicity() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SusConfig::new(2000, 0.1);
        let r = run_sus(linear(4.5), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(r.true_calls, 2000 + (r.m - 1) * 1800);
        assert_eq!(r.levels.iter().map(|l| l.true_calls).sum::<usize>(), r.true_calls);
        for w in r.thresholds.windows(2) {
            assert!(w[0] > w[1]);
        }
        let expected = 0.1f64.powi(r.m as i32 - 1) * r.n_f as f64 / 2000.0;
        assert_eq!(r.p_hat, expected);
        assert!(r.cov_lower <= r.cov_upper);
        for l in &r.levels[1..] {
            assert!(l.values.iter().all(|&v| v <= r.thresholds[l.level - 1]));
        }
    }

    #[test]
    fn estimates_linear_limit_state() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SusConfig::new(1000, 0.1);
        let runs: Vec<EstimationResult<f64>> = (0..20)
            .map(|s| run_sus(linear(3.0), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(100 + s)).unwrap())
            .collect();
        let summary = ReplicateSummary::from_results(&runs);
        let truth = normal_cdf(-3.0);
        assert!((summary.mean / truth - 1.0).abs() < 0.2, "{}", summary.mean);
    }

    #[test]
    fn reproducible_and_partial_on_non_convergence() {
        let uv = UncertainVector::standard_normal(2).unwrap();
        let cfg = SusConfig::new(500, 0.1);
        let a = run_sus(linear(3.5), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = run_sus(linear(3.5), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let short = SusConfig { max_levels: 2, ..cfg };
        match run_sus(linear(6.0), &uv, &short, &mut ChaCha8Rng::seed_from_u64(5)) {
            Err(RunError::NotConverged(partial)) => {
                assert!(!partial.converged);
                assert_eq!(partial.m, 2);
                assert_eq!(partial.true_calls, 500 + 450);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn independent_indicators_have_no_correlation_penalty() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let mut gammas = Vec::new();
        for _ in 0..20 {
            let ind: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.1).collect();
            gammas.push(level_gamma(&LevelIndicators { indicators: ind, chain_len: 10 }));
        }
        let mean = gammas.iter().sum::<f64>() / gammas.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        let ind: Vec<bool> = (0..1000).map(|_| rng.random::<f64>() < 0.1).collect();
        let mc = LevelIndicators { indicators: ind, chain_len: 1 };
        let (lo, up) = cov_bounds(&[mc.clone(), mc.clone()]);
        let d = level_cov(&mc).0;
        assert!((lo - d * 2f64.sqrt()).abs() < 1e-12 && (up - 2.0 * d).abs() < 1e-12);
    }

    #[test]
    fn repeated_states_raise_gamma() {
        // Chains of identical indicators: maximal correlation.
        let ind: Vec<bool> = (0..1000).map(|i| (i / 10) % 5 == 0).collect();
        let g = level_gamma(&LevelIndicators { indicators: ind, chain_len: 10 });
        assert!((g - 9.0).abs() < 1e-9, "{g}");
    }
}
