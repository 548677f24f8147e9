//! Performance-guaranteed gain optimization.
//!
//! Minimizes `P[h₀(θ,k) < C₀]` over a gain box subject to chance constraints
//! `P[h_i(θ,k) < C_i] < β_i` and deterministic constraints `c_i(k) ≤ 0`.
//! Rare-event constraints are estimated by SBSS and checked against their
//! 3-σ upper bound; ordinary ones use Monte Carlo on a per-design
//! projection PCE. The search is differential evolution with
//! feasibility-first ranking.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flight::{self, FlightParams, GainVector, Performance};
use crate::orthopoly::tensor_quadrature;
use crate::pce::project_responses;
use crate::sbss::{run_sbss, SbssConfig};
use crate::sus::RunError;
use crate::uncertainty::UncertainVector;

/// Side of the limit that counts as a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `h < C` violates.
    Below,
    /// `h > C` violates; canonicalized as `−h < −C`.
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    SurrogateMcs,
    Sbss,
}

/// `P[h_index violates limit] < beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChanceConstraint {
    pub index: usize,
    pub direction: Direction,
    pub limit: f64,
    pub beta: f64,
    pub estimator: Estimator,
    /// Check `(1 + 3c_v)p̂ < β` instead of `p̂ < β`.
    #[serde(default)]
    pub inflate: bool,
}

impl ChanceConstraint {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(Error::InvalidParameter(format!("beta must lie in (0, 1], got {}", self.beta)));
        }
        if !self.limit.is_finite() {
            return Err(Error::InvalidParameter("constraint limit must be finite".into()));
        }
        Ok(())
    }

    /// Canonical limit state `g` with violation iff `g < 0`.
    pub fn canonical(&self, h: f64) -> f64 {
        match self.direction {
            Direction::Below => h - self.limit,
            Direction::Above => -h - (-self.limit),
        }
    }

    pub fn violated(&self, h: f64) -> bool {
        self.canonical(h) < 0.0
    }

    pub fn satisfied_by(&self, p_hat: f64, cov_upper: f64) -> bool {
        if self.inflate {
            check_rare_constraint(p_hat, cov_upper, self.beta)
        } else {
            p_hat < self.beta
        }
    }
}

/// `(1 + 3·cov_upper)·p_hat < beta`.
pub fn check_rare_constraint(p_hat: f64, cov_upper: f64, beta: f64) -> bool {
    (1.0 + 3.0 * cov_upper) * p_hat < beta
}

/// Estimator budgets for one design evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorBudget {
    pub mcs_samples: usize,
    pub pce_order: usize,
    pub pce_nodes: usize,
    pub sbss: SbssConfig,
}

impl Default for EstimatorBudget {
    fn default() -> Self {
        let mut sbss = SbssConfig::new(2000, 0.1, 0.11);
        sbss.sus.max_levels = 10;
        Self { mcs_samples: 100_000, pce_order: 5, pce_nodes: 6, sbss }
    }
}

impl EstimatorBudget {
    pub fn validate(&self) -> Result<()> {
        if self.mcs_samples == 0 {
            return Err(Error::InvalidParameter("mcs_samples must be positive".into()));
        }
        if self.pce_nodes < self.pce_order + 1 {
            return Err(Error::InsufficientQuadrature { nodes: self.pce_nodes, order: self.pce_order });
        }
        self.sbss.validate()
    }
}

/// Base vector of the differential mutation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// `x_r1 + F(x_r2 − x_r3)`.
    #[default]
    Rand1,
    /// `x_i + F(x_best − x_i) + F(x_r1 − x_r2)`.
    CurrentToBest1,
}

/// Differential evolution settings with binomial crossover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub population: usize,
    pub generations: usize,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_weight")]
    pub differential_weight: f64,
    #[serde(default = "default_crossover")]
    pub crossover: f64,
    /// Best feasible designs re-verified before giving up.
    #[serde(default = "default_reverify")]
    pub reverify_candidates: usize,
    /// Skip the remaining estimates once a design is infeasible on cheaper
    /// checks: deterministic constraints first, then surrogate MCS, then SBSS.
    #[serde(default = "default_true")]
    pub short_circuit: bool,
}

fn default_weight() -> f64 {
    0.6
}

fn default_crossover() -> f64 {
    0.9
}

fn default_reverify() -> usize {
    5
}

fn default_true() -> bool {
    true
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population: 12,
            generations: 10,
            strategy: Strategy::Rand1,
            differential_weight: default_weight(),
            crossover: default_crossover(),
            reverify_candidates: default_reverify(),
            short_circuit: true,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::InvalidParameter("population must be at least 4".into()));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight <= 2.0) {
            return Err(Error::InvalidParameter("differential_weight must lie in (0, 2]".into()));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::InvalidParameter("crossover must lie in [0, 1]".into()));
        }
        if self.reverify_candidates == 0 {
            return Err(Error::InvalidParameter("reverify_candidates must be positive".into()));
        }
        Ok(())
    }
}

/// The optimization program on a given design model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationProblem {
    /// Probability to minimize; its `beta` is ignored.
    pub objective: ChanceConstraint,
    pub constraints: Vec<ChanceConstraint>,
    /// Gain box `[lower, upper]` per gain.
    pub bounds: Vec<(f64, f64)>,
    pub budget: EstimatorBudget,
    pub optimizer: OptimizerConfig,
}

impl OptimizationProblem {
    /// Default requirements on the flight benchmark.
    pub fn flight_default() -> Self {
        let below = |index, limit, beta, estimator, inflate| ChanceConstraint {
            index,
            direction: Direction::Below,
            limit,
            beta,
            estimator,
            inflate,
        };
        let above = |index, limit, beta| ChanceConstraint {
            index,
            direction: Direction::Above,
            limit,
            beta,
            estimator: Estimator::SurrogateMcs,
            inflate: false,
        };
        Self {
            objective: below(0, -0.45, 1.0, Estimator::SurrogateMcs, false),
            constraints: vec![
                below(1, 6.0, 1e-6, Estimator::Sbss, true),
                below(2, 45.0, 1e-6, Estimator::Sbss, true),
                above(3, 0.2, 0.1),
                above(4, 1.0, 0.1),
            ],
            bounds: vec![(1.0, 3.0), (-2.5, -0.5), (0.5, 5.0), (-6.0, -1.0)],
            budget: EstimatorBudget::default(),
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bounds.is_empty()
            || self.bounds.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::InvalidParameter("gain box must be non-empty with finite bounds".into()));
        }
        if self.objective.estimator != Estimator::SurrogateMcs {
            return Err(Error::InvalidParameter("the objective is estimated by surrogate MCS".into()));
        }
        self.objective.validate()?;
        for c in &self.constraints {
            c.validate()?;
        }
        self.budget.validate()?;
        self.optimizer.validate()
    }

    fn mcs_indices(&self) -> Vec<usize> {
        let mut idx = vec![self.objective.index];
        for c in &self.constraints {
            if c.estimator == Estimator::SurrogateMcs && !idx.contains(&c.index) {
                idx.push(c.index);
            }
        }
        idx
    }
}

/// Performance functions depending on uncertain parameters `θ` and gains `k`.
pub trait DesignModel: Sync {
    fn uncertainty(&self) -> &UncertainVector<f64>;

    /// `h_i(θ, k)` for every `i` in `indices`.
    fn performances(&self, theta: &[f64], k: &[f64], indices: &[usize]) -> Result<Vec<f64>>;

    /// Value standing in for `h_i` when the model cannot be evaluated.
    fn failure_value(&self, index: usize) -> f64;

    /// Deterministic constraints `c_i(k)`, satisfied when `≤ 0`.
    fn deterministic(&self, k: &[f64]) -> Result<Vec<f64>>;

    fn describe(&self, index: usize) -> String {
        format!("h{index}")
    }
}

/// The closed-loop flight benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct FlightDesign {
    pub params: FlightParams,
    uncertainty: UncertainVector<f64>,
}

impl FlightDesign {
    pub fn new(params: FlightParams) -> Result<Self> {
        params.validate()?;
        let uncertainty = params.uncertainty()?;
        Ok(Self { params, uncertainty })
    }

    fn gains(k: &[f64]) -> Result<GainVector> {
        let k: [f64; 4] = k.try_into().map_err(|_| Error::DimensionMismatch { expected: 4, got: k.len() })?;
        Ok(GainVector::from_array(k))
    }
}

impl DesignModel for FlightDesign {
    fn uncertainty(&self) -> &UncertainVector<f64> {
        &self.uncertainty
    }

    fn performances(&self, theta: &[f64], k: &[f64], indices: &[usize]) -> Result<Vec<f64>> {
        flight::performance_subset(theta, &Self::gains(k)?, &self.params, indices)
    }

    fn failure_value(&self, index: usize) -> f64 {
        Performance::failed(&self.params).as_array()[index.min(4)]
    }

    fn deterministic(&self, k: &[f64]) -> Result<Vec<f64>> {
        let (c1, c2) = flight::deterministic_constraints(&Self::gains(k)?, &self.params)?;
        Ok(vec![c1, c2])
    }

    fn describe(&self, index: usize) -> String {
        flight::PERFORMANCE_NAMES.get(index).map_or_else(|| format!("h{index}"), |s| s.to_string())
    }
}

/// Probability estimate for one performance function at one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionEstimate {
    pub index: usize,
    pub description: String,
    pub estimator: Estimator,
    /// Estimated violation probability; an upper bound when `bounded`.
    pub p_v: f64,
    pub bounded: bool,
    pub cov_lower: Option<f64>,
    pub cov_upper: Option<f64>,
    /// True-model calls spent on this estimate.
    pub n_call: usize,
    pub beta: f64,
    pub satisfied: bool,
}

/// True-model calls by category.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallTally {
    /// Quadrature nodes of the per-design PCE (shared by all MCS functions).
    pub pce: usize,
    pub sbss: usize,
    /// Nominal simulations for the deterministic constraints.
    pub nominal: usize,
}

impl CallTally {
    pub fn total(&self) -> usize {
        self.pce + self.sbss + self.nominal
    }

    pub fn add(&mut self, other: &CallTally) {
        self.pce += other.pce;
        self.sbss += other.sbss;
        self.nominal += other.nominal;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignEvaluation {
    pub gains: Vec<f64>,
    pub seed: u64,
    pub objective: Option<FunctionEstimate>,
    pub constraints: Vec<FunctionEstimate>,
    pub deterministic: Vec<f64>,
    pub calls: CallTally,
    pub feasible: bool,
    /// Total constraint violation; zero when feasible.
    pub violation: f64,
    /// Constraints left unestimated after the design was found infeasible.
    pub skipped: Vec<usize>,
    pub error: Option<String>,
}

/// Quantities the optimizer ranks designs by.
pub trait Ranked {
    fn feasible(&self) -> bool;
    fn objective_value(&self) -> f64;
    fn violation(&self) -> f64;
}

impl Ranked for DesignEvaluation {
    fn feasible(&self) -> bool {
        self.feasible
    }

    fn objective_value(&self) -> f64 {
        self.objective.as_ref().map_or(f64::INFINITY, |o| o.p_v)
    }

    fn violation(&self) -> f64 {
        self.violation
    }
}

/// Feasible designs first, by objective; infeasible ones by violation.
pub fn rank_cmp<E: Ranked>(a: &E, b: &E) -> Ordering {
    match (a.feasible(), b.feasible()) {
        (true, false) => Ordering::Less,
        (false, true) => Ordering::Greater,
        (true, true) => a.objective_value().total_cmp(&b.objective_value()),
        (false, false) => a.violation().total_cmp(&b.violation()),
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn violation_of(p: f64, beta: f64) -> f64 {
    (p - beta).max(f64::MIN_POSITIVE)
}

fn infeasible(k: &[f64], seed: u64, calls: CallTally, error: Error) -> DesignEvaluation {
    DesignEvaluation {
        gains: k.to_vec(),
        seed,
        objective: None,
        constraints: Vec::new(),
        deterministic: Vec::new(),
        calls,
        feasible: false,
        violation: f64::INFINITY,
        skipped: Vec::new(),
        error: Some(error.to_string()),
    }
}

/// Estimate every probability of the program at design `k`.
///
/// Each estimate draws from its own stream of `seed`, so the objective does
/// not depend on which constraints are present. Model failures make the
/// design infeasible rather than aborting the search.
pub fn evaluate_design<M: DesignModel>(
    problem: &OptimizationProblem,
    model: &M,
    k: &[f64],
    seed: u64,
) -> DesignEvaluation {
    let mut calls = CallTally::default();
    let deterministic = match model.deterministic(k) {
        Ok(c) => c,
        Err(e) => return infeasible(k, seed, CallTally { nominal: 1, ..calls }, e),
    };
    calls.nominal = 1;
    let mut violation: f64 = deterministic.iter().map(|c| c.max(0.0)).sum();
    if problem.optimizer.short_circuit && violation > 0.0 {
        return DesignEvaluation {
            gains: k.to_vec(),
            seed,
            objective: None,
            constraints: Vec::new(),
            deterministic,
            calls,
            feasible: false,
            violation,
            skipped: (0..problem.constraints.len()).collect(),
            error: None,
        };
    }

    let budget = &problem.budget;
    let uv = model.uncertainty();
    let mcs_indices = problem.mcs_indices();
    let rule = match tensor_quadrature::<f64>(&uv.families(), budget.pce_nodes) {
        Ok(r) => r,
        Err(e) => return infeasible(k, seed, calls, e),
    };
    let thetas: Result<Vec<Vec<f64>>> = rule.nodes.iter().map(|xi| uv.from_standard(xi)).collect();
    let responses: Result<Vec<Vec<f64>>> =
        thetas.and_then(|ts| ts.par_iter().map(|t| model.performances(t, k, &mcs_indices)).collect());
    calls.pce = rule.len();
    let responses = match responses {
        Ok(r) => r,
        Err(e) => return infeasible(k, seed, calls, e),
    };
    let mut surrogates = Vec::with_capacity(mcs_indices.len());
    for col in 0..mcs_indices.len() {
        let ys: Vec<f64> = responses.iter().map(|r| r[col]).collect();
        match project_responses(uv, budget.pce_order, &rule, &ys) {
            Ok(s) => surrogates.push(s),
            Err(e) => return infeasible(k, seed, calls, e),
        }
    }
    let draws = uv.sample(budget.mcs_samples, &mut stream(seed, 0));
    let mcs_probability = |c: &ChanceConstraint| -> Result<f64> {
        let col = mcs_indices.iter().position(|&i| i == c.index).expect("index registered");
        let s = &surrogates[col];
        let mut hits = 0usize;
        for t in &draws {
            if c.violated(s.evaluate(t)?) {
                hits += 1;
            }
        }
        Ok(hits as f64 / draws.len() as f64)
    };
    let mcs_estimate = |c: &ChanceConstraint| -> Result<FunctionEstimate> {
        let p = mcs_probability(c)?;
        Ok(FunctionEstimate {
            index: c.index,
            description: model.describe(c.index),
            estimator: Estimator::SurrogateMcs,
            p_v: p,
            bounded: false,
            cov_lower: None,
            cov_upper: None,
            n_call: rule.len(),
            beta: c.beta,
            satisfied: c.satisfied_by(p, 0.0),
        })
    };

    let objective = match mcs_estimate(&problem.objective) {
        Ok(o) => o,
        Err(e) => return infeasible(k, seed, calls, e),
    };
    let mut estimates: Vec<Option<FunctionEstimate>> = vec![None; problem.constraints.len()];
    for (slot, c) in estimates.iter_mut().zip(&problem.constraints) {
        if c.estimator == Estimator::SurrogateMcs {
            match mcs_estimate(c) {
                Ok(e) => {
                    if !e.satisfied {
                        violation += violation_of(e.p_v, c.beta);
                    }
                    *slot = Some(e);
                }
                Err(e) => return infeasible(k, seed, calls, e),
            }
        }
    }
    let mut skipped = Vec::new();
    for (j, (slot, c)) in estimates.iter_mut().zip(&problem.constraints).enumerate() {
        if c.estimator != Estimator::Sbss {
            continue;
        }
        if problem.optimizer.short_circuit && violation > 0.0 {
            skipped.push(j);
            continue;
        }
        let failed = model.failure_value(c.index);
        let g = |t: &[f64]| {
            let h = model.performances(t, k, &[c.index]).map(|v| v[0]).unwrap_or(failed);
            c.canonical(h)
        };
        let mut rng = stream(seed, 1 + j as u64);
        let sus = &budget.sbss.sus;
        let estimate = match run_sbss(g, uv, &budget.sbss, &mut rng) {
            Ok((r, _)) => {
                calls.sbss += r.true_calls;
                (r.p_hat, false, Some(r.cov_lower), Some(r.cov_upper), r.true_calls)
            }
            Err(RunError::NotConverged(partial)) => {
                // Every level stayed above the limit: the probability is below p0^max_levels.
                calls.sbss += partial.true_calls;
                (sus.p0.powi(sus.max_levels as i32), true, None, None, partial.true_calls)
            }
            Err(RunError::Invalid(e)) => return infeasible(k, seed, calls, e),
        };
        let (p, bounded, cl, cu, n_call) = estimate;
        let satisfied = c.satisfied_by(p, cu.unwrap_or(0.0));
        if !satisfied {
            let inflated = if c.inflate { (1.0 + 3.0 * cu.unwrap_or(0.0)) * p } else { p };
            violation += violation_of(inflated, c.beta);
        }
        *slot = Some(FunctionEstimate {
            index: c.index,
            description: model.describe(c.index),
            estimator: Estimator::Sbss,
            p_v: p,
            bounded,
            cov_lower: cl,
            cov_upper: cu,
            n_call,
            beta: c.beta,
            satisfied,
        });
    }
    DesignEvaluation {
        gains: k.to_vec(),
        seed,
        objective: Some(objective),
        constraints: estimates.into_iter().flatten().collect(),
        deterministic,
        calls,
        feasible: violation == 0.0,
        violation,
        skipped,
        error: None,
    }
}

/// One evaluated design in the search history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry<E> {
    /// 0 for the initial population.
    pub generation: usize,
    pub x: Vec<f64>,
    pub seed: u64,
    pub evaluation: E,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeOutcome<E> {
    /// Final population, best first.
    pub population: Vec<LogEntry<E>>,
    pub log: Vec<LogEntry<E>>,
}

impl<E> DeOutcome<E> {
    pub fn best(&self) -> &LogEntry<E> {
        &self.population[0]
    }
}

/// Differential evolution over a box with feasibility-first selection. `evaluate(x, seed)` must be deterministic in its arguments.
pub fn differential_evolution<E, F, R>(
    bounds: &[(f64, f64)],
    cfg: &OptimizerConfig,
    evaluate: F,
    rng: &mut R,
) -> Result<DeOutcome<E>>
where
    E: Ranked + Clone + Send,
    F: Fn(&[f64], u64) -> E + Sync,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    if bounds.is_empty() || bounds.iter().any(|(lo, hi)| !(lo <= hi)) {
        return Err(Error::InvalidParameter("gain box must be non-empty".into()));
    }
    let dim = bounds.len();
    let np = cfg.population;
    let eval_batch = |xs: Vec<(Vec<f64>, u64)>, generation: usize| -> Vec<LogEntry<E>> {
        xs.into_par_iter()
            .map(|(x, seed)| {
                let evaluation = evaluate(&x, seed);
                LogEntry { generation, x, seed, evaluation }
            })
            .collect()
    };
    let initial: Vec<(Vec<f64>, u64)> = (0..np)
        .map(|_| {
            let x = bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
            (x, rng.random())
        })
        .collect();
    let mut population = eval_batch(initial, 0);
    let mut log = population.clone();
    for generation in 1..=cfg.generations {
        let best = (0..np)
            .min_by(|&a, &b| rank_cmp(&population[a].evaluation, &population[b].evaluation))
            .expect("non-empty population");
        let trials: Vec<(Vec<f64>, u64)> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.random_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let r2 = loop {
                    let r = pick();
                    if r != r1 {
                        break r;
                    }
                };
                let r3 = loop {
                    let r = pick();
                    if r != r1 && r != r2 {
                        break r;
                    }
                };
                let forced = rng.random_range(0..dim);
                let x = (0..dim)
                    .map(|d| {
                        let cross = d == forced || rng.random::<f64>() < cfg.crossover;
                        let v = if cross {
                            let f = cfg.differential_weight;
                            let pd = |j: usize| population[j].x[d];
                            match cfg.strategy {
                                Strategy::Rand1 => pd(r1) + f * (pd(r2) - pd(r3)),
                                Strategy::CurrentToBest1 => pd(i) + f * (pd(best) - pd(i)) + f * (pd(r1) - pd(r2)),
                            }
                        } else {
                            population[i].x[d]
                        };
                        v.clamp(bounds[d].0, bounds[d].1)
                    })
                    .collect();
                (x, rng.random())
            })
            .collect();
        let evaluated = eval_batch(trials, generation);
        log.extend(evaluated.iter().cloned());
        for (slot, trial) in population.iter_mut().zip(evaluated) {
            if rank_cmp(&trial.evaluation, &slot.evaluation) != Ordering::Greater {
                *slot = trial;
            }
        }
    }
    population.sort_by(|a, b| rank_cmp(&a.evaluation, &b.evaluation));
    Ok(DeOutcome { population, log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub gains: Vec<f64>,
    /// Evaluation of the returned design during the search.
    pub design: DesignEvaluation,
    /// Independent re-evaluation with fresh streams.
    pub verification: DesignEvaluation,
    /// Re-verifications that failed before `verification` passed.
    pub rejected: Vec<DesignEvaluation>,
    pub log: Vec<LogEntry<DesignEvaluation>>,
    pub calls: CallTally,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    /// Lowest-penalty design found.
    pub best: DesignEvaluation,
    pub rejected: Vec<DesignEvaluation>,
    pub log: Vec<LogEntry<DesignEvaluation>>,
    pub calls: CallTally,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimizeError {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("no design passed verification (best violation {})", .0.best.violation)]
    Infeasible(Box<InfeasibleReport>),
}

/// Search the gain box, then re-verify the best feasible designs with fresh
/// streams and return the first that passes.
pub fn optimize<M: DesignModel, R: Rng + ?Sized>(
    problem: &OptimizationProblem,
    model: &M,
    rng: &mut R,
) -> std::result::Result<OptimizationResult, OptimizeError> {
    problem.validate()?;
    let outcome = differential_evolution(
        &problem.bounds,
        &problem.optimizer,
        |k, seed| evaluate_design(problem, model, k, seed),
        rng,
    )?;
    let mut calls = CallTally::default();
    for entry in &outcome.log {
        calls.add(&entry.evaluation.calls);
    }
    let mut ranked: Vec<&LogEntry<DesignEvaluation>> = outcome.log.iter().collect();
    ranked.sort_by(|a, b| rank_cmp(&a.evaluation, &b.evaluation));
    let mut seen: Vec<&[f64]> = Vec::new();
    let mut rejected = Vec::new();
    for entry in ranked.iter().filter(|e| e.evaluation.feasible) {
        if seen.contains(&entry.x.as_slice()) {
            continue;
        }
        if seen.len() == problem.optimizer.reverify_candidates {
            break;
        }
        seen.push(&entry.x);
        let check = evaluate_design(problem, model, &entry.x, rng.random());
        calls.add(&check.calls);
        if check.feasible {
            return Ok(OptimizationResult {
                gains: entry.x.clone(),
                design: entry.evaluation.clone(),
                verification: check,
                rejected,
                evaluations: outcome.log.len(),
                log: outcome.log,
                calls,
            });
        }
        rejected.push(check);
    }
    Err(OptimizeError::Infeasible(Box::new(InfeasibleReport {
        best: ranked[0].evaluation.clone(),
        rejected,
        log: outcome.log.clone(),
        calls,
    })))
}
