//! Surrogate-based subset simulation.
//!
//! A global surrogate (initial PCE overlaid by local response surfaces)
//! screens MCMC candidates; per level only the `Ñ_s = p̃0·N` samples with the
//! smallest surrogate values are evaluated on the true model. Level 0 is
//! screened by the initial PCE alone, so the total true-model cost is
//! `N₀ + (m−1)·Ñ_s`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::ConditionalKernel;
use crate::orthopoly::tensor_quadrature;
use crate::pce::{fit_projection, fit_regression, PceModel};
use crate::rsm::{fit_adaptive, RsmModel};
use crate::scalar::Scalar;
use crate::sus::{
    acceptance, cmp_values, cov_bounds, draw_level0, grow_chains, indicators_from, level_cov, select_seeds, to_theta,
    EstimationResult, LevelRecord, RunError, SusConfig,
};
use crate::uncertainty::UncertainVector;

/// Initial PCE followed by local models active below decreasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PiecewiseSurrogate<T: Scalar> {
    initial: PceModel<T>,
    refinements: Vec<(T, RsmModel<T>)>,
}

impl<T: Scalar> PiecewiseSurrogate<T> {
    pub fn new(initial: PceModel<T>) -> Self {
        Self { initial, refinements: Vec::new() }
    }

    pub fn initial(&self) -> &PceModel<T> {
        &self.initial
    }

    pub fn refinements(&self) -> &[(T, RsmModel<T>)] {
        &self.refinements
    }

    pub fn dim(&self) -> usize {
        self.initial.transform().dim()
    }

    /// Overlay `local` wherever the current surrogate is `≤ threshold`.
    pub fn refine(&mut self, threshold: T, local: RsmModel<T>) -> Result<()> {
        if local.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: local.dim() });
        }
        if let Some((previous, _)) = self.refinements.last() {
            if !(threshold < *previous) {
                return Err(Error::NonDecreasingThreshold { previous: previous.as_f64(), new: threshold.as_f64() });
            }
        }
        self.refinements.push((threshold, local));
        Ok(())
    }

    pub fn evaluate(&self, theta: &[T]) -> Result<T> {
        let mut v = self.initial.evaluate(theta)?;
        for (b, local) in &self.refinements {
            if v <= *b {
                v = local.evaluate(theta)?;
            } else {
                break;
            }
        }
        Ok(v)
    }
}

/// Free-function form of [`PiecewiseSurrogate::evaluate`].
pub fn evaluate_piecewise<T: Scalar>(s: &PiecewiseSurrogate<T>, theta: &[T]) -> Result<T> {
    s.evaluate(theta)
}

/// Indices of the `count` smallest surrogate values and the screening threshold `b̃`.
pub fn select_candidates<T: Scalar>(values: &[T], count: usize) -> (Vec<usize>, T) {
    select_seeds(values, count)
}

/// How the initial global surrogate is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSurrogate {
    /// Spectral projection on a tensor Gauss rule with `nodes` per dimension.
    Projection { order: usize, nodes: usize },
    /// Least-squares regression on `samples` random draws.
    Regression { order: usize, samples: usize },
}

impl Default for InitialSurrogate {
    fn default() -> Self {
        Self::Projection { order: 5, nodes: 6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbssConfig {
    #[serde(flatten)]
    pub sus: SusConfig,
    /// Fraction of each level evaluated on the true model.
    pub p_tilde: f64,
    #[serde(default)]
    pub initial: InitialSurrogate,
    #[serde(default = "default_rsm_min")]
    pub rsm_min_order: usize,
    #[serde(default = "default_rsm_max")]
    pub rsm_max_order: usize,
}

fn default_rsm_min() -> usize {
    2
}

fn default_rsm_max() -> usize {
    7
}

impl SbssConfig {
    pub fn new(n: usize, p0: f64, p_tilde: f64) -> Self {
        Self {
            sus: SusConfig::new(n, p0),
            p_tilde,
            initial: InitialSurrogate::default(),
            rsm_min_order: default_rsm_min(),
            rsm_max_order: default_rsm_max(),
        }
    }

    /// `Ñ_s = p̃0·N`.
    pub fn candidates(&self) -> usize {
        (self.p_tilde * self.sus.n as f64).round() as usize
    }

    /// True-model calls spent on the initial surrogate for `p` inputs.
    pub fn initial_calls(&self, p: usize) -> usize {
        match self.initial {
            InitialSurrogate::Projection { nodes, .. } => nodes.saturating_pow(p as u32),
            InitialSurrogate::Regression { samples, .. } => samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.sus.validate()?;
        let nc = self.candidates();
        if !(self.p_tilde > 0.0 && self.p_tilde <= 1.0)
            || (self.p_tilde * self.sus.n as f64 - nc as f64).abs() > 1e-9 * self.sus.n as f64
        {
            return Err(Error::InvalidParameter(format!(
                "p̃0·N = {} must be a positive integer with p̃0 in (0, 1]",
                self.p_tilde * self.sus.n as f64
            )));
        }
        if nc < self.sus.seeds() {
            return Err(Error::InvalidParameter(format!(
                "p̃0 = {} must not be smaller than p0 = {}",
                self.p_tilde, self.sus.p0
            )));
        }
        if self.rsm_min_order > self.rsm_max_order {
            return Err(Error::InvalidParameter("rsm_min_order exceeds rsm_max_order".into()));
        }
        match self.initial {
            InitialSurrogate::Projection { order, nodes } if nodes < order + 1 => {
                Err(Error::InsufficientQuadrature { nodes, order })
            }
            _ => Ok(()),
        }
    }
}

fn build_initial<T, H>(h: &H, uv: &UncertainVector<T>, cfg: &SbssConfig, master: u64) -> Result<PceModel<T>>
where
    T: Scalar,
    H: Fn(&[T]) -> T + Sync,
{
    match cfg.initial {
        InitialSurrogate::Projection { order, nodes } => {
            let rule = tensor_quadrature(&uv.families(), nodes)?;
            fit_projection(h, uv, order, &rule)
        }
        InitialSurrogate::Regression { order, samples } => {
            let mut rng = ChaCha8Rng::seed_from_u64(master ^ 0x5bd1_e995);
            let xs = uv.sample(samples, &mut rng);
            let ys: Vec<T> = xs.par_iter().map(|t| h(t)).collect();
            fit_regression(&xs, &ys, uv, order)
        }
    }
}

/// Candidate points with exact repeats removed, first occurrence kept.
fn distinct_design<T: Scalar>(candidates: &[usize], samples: &[Vec<T>], values: &[T]) -> (Vec<Vec<T>>, Vec<T>) {
    let mut design: Vec<Vec<T>> = Vec::with_capacity(candidates.len());
    let mut responses = Vec::with_capacity(candidates.len());
    for (&i, &v) in candidates.iter().zip(values) {
        if !design.contains(&samples[i]) {
            design.push(samples[i].clone());
            responses.push(v);
        }
    }
    (design, responses)
}

/// Surrogate-based subset simulation on the true limit state `h`.
pub fn run_sbss<T, H, R>(
    h: H,
    uv: &UncertainVector<T>,
    cfg: &SbssConfig,
    rng: &mut R,
) -> std::result::Result<(EstimationResult<T>, PiecewiseSurrogate<T>), RunError<T>>
where
    T: Scalar,
    H: Fn(&[T]) -> T + Sync,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    let sus = &cfg.sus;
    let kernel = ConditionalKernel::new(T::of(sus.rho))?;
    let master: u64 = rng.random();
    let (n, ns, nc, chain_len) = (sus.n, sus.seeds(), cfg.candidates(), sus.chain_len());

    let initial = build_initial(&h, uv, cfg, master)?;
    let n0 = initial.training_calls();
    let mut surrogate = PiecewiseSurrogate::new(initial);

    let mut u_level = draw_level0::<T>(uv.dim(), n, master);
    let mut samples: Vec<Vec<T>> = u_level.iter().map(|u| to_theta(uv, u)).collect();
    let mut values: Vec<T> = samples.par_iter().map(|t| surrogate.evaluate(t)).collect::<Result<_>>()?;
    let mut surrogate_calls = n;
    let mut true_calls = n0;
    let mut thresholds = Vec::new();
    let mut levels: Vec<LevelRecord<T>> = Vec::new();
    let mut indicators = Vec::new();

    // Level 0: thresholds and seeds straight from the initial PCE.
    let (seeds, b1) = select_seeds(&values, ns);
    let ind = indicators_from(
        n,
        1,
        if b1 <= T::zero() { (0..n).filter(|&i| values[i] <= T::zero()).collect::<Vec<_>>() } else { seeds.clone() },
    );
    let (cov, gamma) = level_cov(&ind);
    indicators.push(ind);
    if b1 <= T::zero() {
        let failures: Vec<usize> = (0..n).filter(|&i| values[i] <= T::zero()).collect();
        let n_f = failures.len();
        let p = T::of_usize(n_f) / T::of_usize(n);
        levels.push(LevelRecord {
            level: 0,
            threshold: T::zero(),
            candidate_threshold: None,
            conditional_probability: p,
            true_calls: n0,
            surrogate_calls: n,
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
        });
        let (cov_lower, cov_upper) = cov_bounds(&indicators);
        return Ok((
            EstimationResult {
                p_hat: p,
                thresholds,
                conditional_probabilities: vec![p],
                m: 1,
                n_f,
                cov_lower,
                cov_upper,
                true_calls,
                surrogate_calls,
                converged: true,
                levels,
            },
            surrogate,
        ));
    }
    thresholds.push(b1);
    let mut seed_u: Vec<Vec<T>> = seeds.iter().map(|&i| u_level[i].clone()).collect();
    levels.push(LevelRecord {
        level: 0,
        threshold: b1,
        candidate_threshold: None,
        conditional_probability: T::of(sus.p0),
        true_calls: n0,
        surrogate_calls: n,
        acceptance_rate: 0.0,
        gamma,
        cov,
        rsm_order: None,
        rsm_loo: None,
        samples,
        values,
        seeds,
        candidates: Vec::new(),
        candidate_values: Vec::new(),
    });
    let mut b = b1;

    for j in 1.. {
        if j >= sus.max_levels {
            let last = levels.last().unwrap();
            let failures = last.values.iter().filter(|&&v| v <= T::zero()).count();
            let p_last = T::of_usize(failures) / T::of_usize(n);
            let mut conditional_probabilities = vec![T::of(sus.p0); j - 1];
            conditional_probabilities.push(p_last);
            let (cov_lower, cov_upper) = cov_bounds(&indicators);
            return Err(RunError::NotConverged(Box::new(EstimationResult {
                p_hat: T::of(sus.p0).powi(j as i32 - 1) * p_last,
                thresholds,
                conditional_probabilities,
                m: j,
                n_f: failures,
                cov_lower,
                cov_upper,
                true_calls,
                surrogate_calls,
                converged: false,
                levels,
            })));
        }

        // Conditional samples screened by the current global surrogate.
        let screen = |u: &[T]| surrogate.evaluate(&to_theta(uv, u)).unwrap_or_else(|_| T::infinity());
        let seed_states: Vec<(Vec<T>, T)> = std::mem::take(&mut seed_u)
            .into_iter()
            .map(|u| {
                let v = screen(&u);
                (u, v)
            })
            .collect();
        let chains = grow_chains(&kernel, seed_states, chain_len, b, master, j, &screen);
        let level_surrogate_calls = ns + chains.iter().map(|c| c.screen_calls).sum::<usize>();
        surrogate_calls += level_surrogate_calls;
        let accept = acceptance(&chains);
        u_level = Vec::with_capacity(n);
        values = Vec::with_capacity(n);
        for c in chains {
            u_level.extend(c.states);
            values.extend(c.values);
        }
        samples = u_level.iter().map(|u| to_theta(uv, u)).collect();

        // Candidates by surrogate value, then the true model on them only.
        let (candidates, b_tilde) = select_candidates(&values, nc);
        let candidate_values: Vec<T> = candidates.par_iter().map(|&i| h(&samples[i])).collect();
        true_calls += nc;

        let mut by_truth: Vec<usize> = (0..nc).collect();
        by_truth.sort_by(|&a, &c| cmp_values(&candidate_values[a], &candidate_values[c]));
        let b_next = candidate_values[by_truth[ns - 1]];

        if b_next <= T::zero() {
            // Candidates count by true value; when b̃ < 0 the remaining
            // samples below zero count by surrogate value.
            let mut is_candidate = vec![false; n];
            candidates.iter().for_each(|&i| is_candidate[i] = true);
            let mut failures: Vec<usize> = (0..nc)
                .filter(|&k| candidate_values[k] <= T::zero())
                .map(|k| candidates[k])
                .chain((0..n).filter(|&i| !is_candidate[i] && values[i] <= T::zero()))
                .collect();
            failures.sort_unstable();
            let n_f = failures.len();
            let ind = indicators_from(n, chain_len, failures.iter().copied());
            let (cov, gamma) = level_cov(&ind);
            indicators.push(ind);
            let p_last = T::of_usize(n_f) / T::of_usize(n);
            levels.push(LevelRecord {
                level: j,
                threshold: T::zero(),
                candidate_threshold: Some(b_tilde),
                conditional_probability: p_last,
                true_calls: nc,
                surrogate_calls: level_surrogate_calls,
                acceptance_rate: accept,
                gamma,
                cov,
                rsm_order: None,
                rsm_loo: None,
                samples,
                values,
                seeds: failures,
                candidates,
                candidate_values,
            });
            let mut conditional_probabilities = vec![T::of(sus.p0); j];
            conditional_probabilities.push(p_last);
            let (cov_lower, cov_upper) = cov_bounds(&indicators);
            return Ok((
                EstimationResult {
                    p_hat: T::of(sus.p0).powi(j as i32) * p_last,
                    thresholds,
                    conditional_probabilities,
                    m: j + 1,
                    n_f,
                    cov_lower,
                    cov_upper,
                    true_calls,
                    surrogate_calls,
                    converged: true,
                    levels,
                },
                surrogate,
            ));
        }

        // Local response surface on the distinct candidates refines the surrogate.
        // Rejected MCMC moves repeat states, so a deep level can leave too few
        // distinct points for any order; the level then keeps the current surrogate.
        let (design, design_values) = distinct_design(&candidates, &samples, &candidate_values);
        let (rsm_order, rsm_loo) = match fit_adaptive(&design, &design_values, cfg.rsm_min_order, cfg.rsm_max_order) {
            Ok(local) => {
                let fitted = (Some(local.order), Some(local.diagnostics.eps_loo_rel));
                surrogate.refine(b_tilde, local.model)?;
                fitted
            }
            Err(Error::NoFeasibleOrder { .. } | Error::ConstantResponse) => (None, None),
            Err(e) => return Err(e.into()),
        };

        let seeds: Vec<usize> = by_truth[..ns].iter().map(|&k| candidates[k]).collect();
        let ind = indicators_from(n, chain_len, seeds.iter().copied());
        let (cov, gamma) = level_cov(&ind);
        indicators.push(ind);
        seed_u = seeds.iter().map(|&i| u_level[i].clone()).collect();
        thresholds.push(b_next);
        levels.push(LevelRecord {
            level: j,
            threshold: b_next,
            candidate_threshold: Some(b_tilde),
            conditional_probability: T::of(sus.p0),
            true_calls: nc,
            surrogate_calls: level_surrogate_calls,
            acceptance_rate: accept,
            gamma,
            cov,
            rsm_order,
            rsm_loo,
            samples: samples.clone(),
            values: values.clone(),
            seeds,
            candidates,
            candidate_values,
        });
        b = b_next;
    }
    unreachable!()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rsm::fit;
    use crate::sus::run_sus;

    fn linear(beta: f64) -> impl Fn(&[f64]) -> f64 + Sync {
        move |t: &[f64]| beta - t.iter().sum::<f64>() / (t.len() as f64).sqrt()
    }

    fn toy_pce(uv: &UncertainVector<f64>) -> PceModel<f64> {
        let rule = tensor_quadrature(&uv.families(), 4).unwrap();
        fit_projection(|t: &[f64]| t[0] * t[0] - t[1] + 0.5, uv, 3, &rule).unwrap()
    }

    fn toy_local(seed: u64, offset: f64) -> RsmModel<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> =
            (0..30).map(|_| vec![f64::standard_normal(&mut rng), f64::standard_normal(&mut rng)]).collect();
        let y: Vec<f64> = x.iter().map(|t| offset + t[0] - 0.3 * t[1] * t[1]).collect();
        fit(&x, &y, 2).unwrap().0
    }

    #[test]
    fn without_refinements_equals_pce() {
        let uv = UncertainVector::standard_normal(2).unwrap();
        let pce = toy_pce(&uv);
        let s = PiecewiseSurrogate::new(pce.clone());
        for t in [[0.3, -1.2], [2.0, 0.1]] {
            assert_eq!(s.evaluate(&t).unwrap(), pce.evaluate(&t).unwrap());
        }
        assert!(s.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn upper_branch_is_untouched() {
        let uv = UncertainVector::standard_normal(2).unwrap();
        let pce = toy_pce(&uv);
        let mut s = PiecewiseSurrogate::new(pce.clone());
        s.refine(0.0, toy_local(1, -1.0)).unwrap();
        s.refine(-1.0, toy_local(2, -2.0)).unwrap();
        let t = [3.0, -1.0];
        assert!(pce.evaluate(&t).unwrap() > 0.0);
        assert_eq!(s.evaluate(&t).unwrap(), pce.evaluate(&t).unwrap());
        assert!(matches!(s.refine(-0.5, toy_local(3, 0.0)), Err(Error::NonDecreasingThreshold { .. })));
    }

    #[test]
    fn candidate_selection_edges() {
        let v = vec![4.0, 1.0, 3.0, 2.0];
        let (c, b) = select_candidates(&v, 4);
        assert_eq!(b, 4.0);
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn config_checks() {
        let mut cfg = SbssConfig::new(2000, 0.1, 0.11);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.candidates(), 220);
        assert_eq!(cfg.initial_calls(3), 216);
        cfg.p_tilde = 0.05;
        assert!(cfg.validate().is_err());
        cfg.p_tilde = 0.11;
        cfg.initial = InitialSurrogate::Projection { order: 5, nodes: 5 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn collapsed_candidates_keep_the_current_surrogate() {
        // A limit state ignoring θ₁ at depth ~1e-10: some levels leave fewer
        // distinct candidates than any basis needs.
        let uv = UncertainVector::standard_normal(2).unwrap();
        let mut cfg = SbssConfig::new(500, 0.1, 0.12);
        cfg.initial = InitialSurrogate::Projection { order: 2, nodes: 3 };
        cfg.rsm_max_order = 3;
        let g = |t: &[f64]| 6.1535 + t[0];
        let (r, s) = run_sbss(g, &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        assert!(r.levels.iter().any(|l| l.rsm_order.is_none() && l.candidate_threshold.is_some()));
        assert_eq!(s.refinements().len(), r.levels.iter().filter(|l| l.rsm_order.is_some()).count());
        assert_eq!(r.true_calls, 9 + (r.m - 1) * 60);
    }

    #[test]
    fn call_accounting_and_structure() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SbssConfig::new(1000, 0.1, 0.11);
        let (r, s) = run_sbss(linear(4.0), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(r.true_calls, 216 + (r.m - 1) * 110);
        assert_eq!(r.levels.iter().map(|l| l.true_calls).sum::<usize>(), r.true_calls);
        let fitted = r.levels.iter().filter(|l| l.rsm_order.is_some()).count();
        assert_eq!(s.refinements().len(), fitted);
        assert!(fitted <= r.m - 2);
        for w in r.thresholds.windows(2) {
            assert!(w[0] > w[1]);
        }
        for l in &r.levels[1..r.m - 1] {
            assert_eq!(l.candidates.len(), 110);
            assert!(l.seeds.iter().all(|i| l.candidates.contains(i)));
            let bt = l.candidate_threshold.unwrap();
            assert!(l.seeds.iter().all(|&i| l.values[i] <= bt));
        }
        let truth = crate::scalar::normal_cdf(-4.0);
        assert!(r.p_hat > truth / 5.0 && r.p_hat < truth * 5.0, "{}", r.p_hat);
    }

    #[test]
    fn agrees_with_plain_subset_simulation() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SbssConfig::new(1000, 0.1, 0.11);
        let h = |t: &[f64]| 3.0 - t.iter().sum::<f64>() / 3f64.sqrt() + 0.1 * (t[0] - t[1]).powi(2);
        let a: f64 =
            (0..10).map(|s| run_sbss(h, &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(s)).unwrap().0.p_hat).sum::<f64>()
                / 10.0;
        let b: f64 = (0..10)
            .map(|s| run_sus(h, &uv, &cfg.sus, &mut ChaCha8Rng::seed_from_u64(50 + s)).unwrap().p_hat)
            .sum::<f64>()
            / 10.0;
        assert!((a / b - 1.0).abs() < 0.3, "{a} vs {b}");
    }

    #[test]
    fn reproducible() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SbssConfig::new(500, 0.1, 0.2);
        let a = run_sbss(linear(3.0), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = run_sbss(linear(3.0), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn single_level_from_initial_surrogate() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let cfg = SbssConfig::new(1000, 0.1, 0.11);
        let (r, _) = run_sbss(linear(0.5), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert_eq!(r.m, 1);
        assert_eq!(r.true_calls, 216);
    }
}
