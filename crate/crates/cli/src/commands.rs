//! Subcommand drivers.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use raresim::benchmarks::benchmark_row;
use raresim::chance_opt::{optimize as run_optimize, Direction, FlightDesign, FunctionEstimate, OptimizeError};
use raresim::flight::performance_value;
use raresim::sbss::run_sbss;
use raresim::sus::{run_mcs, run_sus, EstimationResult, ReplicateSummary, RunError};
use rayon::prelude::*;

use crate::config::{load, BenchmarkConfig, EstimateConfig, MethodConfig, OptimizeConfig, ProblemConfig};
use crate::report::{self, BenchmarkReport, EstimateReport, OptimizeReport, ReplicateOutcome, VERSION};
use crate::CliError;

fn prepare(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    Ok(())
}

type LimitState<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

/// Limit state `g` with failure iff `g ≤ 0`.
fn limit_state(cfg: &EstimateConfig) -> LimitState<'_> {
    match &cfg.problem {
        ProblemConfig::Analytic(ls) => Box::new(move |t: &[f64]| ls.evaluate(t).unwrap_or(f64::NAN)),
        ProblemConfig::Flight(f) => Box::new(move |t: &[f64]| {
            let h = performance_value(t, &f.gains, &f.params, f.performance).unwrap_or(f64::NAN);
            match f.direction {
                Direction::Below => h - f.limit,
                Direction::Above => f.limit - h,
            }
        }),
    }
}

fn run_replicate(cfg: &EstimateConfig, replicate: usize) -> Result<ReplicateOutcome, CliError> {
    let uv = cfg.uncertainty()?;
    let h = limit_state(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replicate as u64);
    let outcome: Result<EstimationResult<f64>, RunError<f64>> = match &cfg.method {
        MethodConfig::Mcs(m) => run_mcs(&h, &uv, m.n, &mut rng).map_err(RunError::from),
        MethodConfig::Sus(s) => run_sus(&h, &uv, s, &mut rng),
        MethodConfig::Sbss(s) => run_sbss(&h, &uv, s, &mut rng).map(|(r, _)| r),
    };
    match outcome {
        Ok(result) => Ok(ReplicateOutcome { replicate, converged: true, result: Some(result), error: None }),
        Err(RunError::NotConverged(partial)) => Ok(ReplicateOutcome {
            replicate,
            converged: false,
            error: Some(format!("no convergence within {} levels", partial.m)),
            result: Some(*partial),
        }),
        Err(RunError::Invalid(e)) => Err(e.into()),
    }
}

pub fn estimate(
    path: &Path,
    seed: Option<u64>,
    replicates: Option<usize>,
    out: Option<PathBuf>,
) -> Result<String, CliError> {
    let mut cfg: EstimateConfig = load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = replicates {
        cfg.replicates = r;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    cfg.validate().map_err(CliError::into_config)?;
    let warnings = match &cfg.method {
        MethodConfig::Mcs(_) => Vec::new(),
        MethodConfig::Sus(s) => s.warnings(),
        MethodConfig::Sbss(s) => s.sus.warnings(),
    };
    for w in &warnings {
        eprintln!("raresim: warning: {w}");
    }
    let outcomes: Vec<ReplicateOutcome> =
        (0..cfg.replicates).into_par_iter().map(|r| run_replicate(&cfg, r)).collect::<Result<_, _>>()?;
    let converged: Vec<EstimationResult<f64>> =
        outcomes.iter().filter(|o| o.converged).filter_map(|o| o.result.clone()).collect();
    let failed = outcomes.len() - converged.len();
    let summary = (!converged.is_empty()).then(|| ReplicateSummary::from_results(&converged));
    let true_pf = match &cfg.problem {
        ProblemConfig::Analytic(ls) => Some(ls.true_pf()),
        ProblemConfig::Flight(_) => None,
    };
    let dir = cfg.output.clone();
    prepare(&dir)?;
    report::write_levels(&dir, &outcomes)?;
    report::write_cdf(&dir, &outcomes)?;
    let line = match &summary {
        Some(s) => format!(
            "p_hat mean {:e} over {} replicate(s), empirical c.o.v. {:.4}, mean true calls {}",
            s.mean, s.replicates, s.empirical_cov, s.mean_true_calls
        ),
        None => "no replicate converged".to_string(),
    };
    let doc = EstimateReport {
        version: VERSION,
        seed: cfg.seed,
        config: cfg,
        true_pf,
        warnings,
        replicates: outcomes,
        summary,
    };
    report::write_json(&dir, &doc)?;
    if failed > 0 {
        return Err(CliError::NotConverged(format!(
            "{failed} of {} replicate(s) did not converge; partial report in {}",
            doc.replicates.len(),
            dir.display()
        )));
    }
    Ok(line)
}

pub fn optimize(path: &Path) -> Result<String, CliError> {
    let cfg: OptimizeConfig = load(path)?;
    cfg.validate().map_err(CliError::into_config)?;
    let model = FlightDesign::new(cfg.flight.clone()).map_err(|e| CliError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dir = cfg.output.clone();
    let outcome = run_optimize(&cfg.problem, &model, &mut rng);
    prepare(&dir)?;
    match outcome {
        Ok(result) => {
            let v = &result.verification;
            let functions: Vec<&FunctionEstimate> = v.objective.iter().chain(&v.constraints).collect();
            report::write_design_table(&dir, &functions)?;
            let line = format!(
                "gains {:?}, objective {}, {} evaluations, {} true-model calls",
                result.gains,
                v.objective.as_ref().map(|o| format!("{:e}", o.p_v)).unwrap_or_default(),
                result.evaluations,
                result.calls.total()
            );
            let doc = OptimizeReport {
                version: VERSION,
                seed: cfg.seed,
                config: cfg,
                feasible: true,
                result: Some(result),
                diagnostic: None,
            };
            report::write_json(&dir, &doc)?;
            Ok(line)
        }
        Err(OptimizeError::Infeasible(diag)) => {
            let message = format!(
                "no feasible design verified (best violation {}); diagnostic report in {}",
                diag.best.violation,
                dir.display()
            );
            let doc = OptimizeReport {
                version: VERSION,
                seed: cfg.seed,
                config: cfg,
                feasible: false,
                result: None,
                diagnostic: Some(*diag),
            };
            report::write_json(&dir, &doc)?;
            Err(CliError::Infeasible(message))
        }
        Err(OptimizeError::Invalid(e)) => Err(CliError::Config(e.to_string())),
    }
}

pub fn benchmark(path: &Path) -> Result<String, CliError> {
    let cfg: BenchmarkConfig = load(path)?;
    cfg.validate().map_err(CliError::into_config)?;
    let rows: Vec<_> =
        cfg.cases.par_iter().map(|case| benchmark_row(case, cfg.p0, cfg.p_tilde, &cfg.initial, cfg.seed)).collect();
    let dir = cfg.output.clone();
    prepare(&dir)?;
    report::write_benchmark_table(&dir, &rows)?;
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    for r in rows.iter().filter_map(|r| r.error.as_ref().map(|e| (r, e))) {
        eprintln!("raresim: row N = {}, m = {}: {}", r.0.n, r.0.m, r.1);
    }
    let line = format!("{} row(s), {} with errors", rows.len(), failed);
    let doc = BenchmarkReport { version: VERSION, seed: cfg.seed, config: cfg, rows };
    report::write_json(&dir, &doc)?;
    Ok(line)
}
