//! Report documents and their plot-ready CSV companions.

use std::fs;
use std::path::Path;

use raresim::benchmarks::BenchmarkRow;
use raresim::chance_opt::{FunctionEstimate, InfeasibleReport, OptimizationResult};
use raresim::sus::{EstimationResult, ReplicateSummary};
use serde::Serialize;
use serde_json::Value;

use crate::config::{BenchmarkConfig, EstimateConfig, OptimizeConfig};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Serialize)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub converged: bool,
    /// Full result, or the partial result of a non-converged run.
    pub result: Option<EstimationResult<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct EstimateReport {
    pub version: &'static str,
    pub seed: u64,
    pub config: EstimateConfig,
    /// Exact probability when the problem has one.
    pub true_pf: Option<f64>,
    pub warnings: Vec<String>,
    pub replicates: Vec<ReplicateOutcome>,
    /// Statistics over the converged replicates.
    pub summary: Option<ReplicateSummary>,
}

#[derive(Debug, Serialize)]
pub struct OptimizeReport {
    pub version: &'static str,
    pub seed: u64,
    pub config: OptimizeConfig,
    pub feasible: bool,
    pub result: Option<OptimizationResult>,
    pub diagnostic: Option<InfeasibleReport>,
}

#[derive(Debug, Serialize)]
pub struct BenchmarkReport {
    pub version: &'static str,
    pub seed: u64,
    pub config: BenchmarkConfig,
    pub rows: Vec<BenchmarkRow>,
}

fn require<'a>(v: &'a Value, key: &str, context: &str) -> Result<&'a Value, CliError> {
    v.get(key).ok_or_else(|| CliError::Report(format!("{context} lacks `{key}`")))
}

fn require_array<'a>(v: &'a Value, key: &str, context: &str) -> Result<&'a Vec<Value>, CliError> {
    require(v, key, context)?.as_array().ok_or_else(|| CliError::Report(format!("{context}.{key} is not an array")))
}

fn require_count(v: &Value, key: &str, context: &str) -> Result<u64, CliError> {
    require(v, key, context)?.as_u64().ok_or_else(|| CliError::Report(format!("{context}.{key} is not a count")))
}

fn check_estimation(r: &Value, context: &str) -> Result<(), CliError> {
    require(r, "p_hat", context)?;
    let m = require_count(r, "m", context)?;
    require_count(r, "true_calls", context)?;
    let levels = require_array(r, "levels", context)?;
    if levels.len() as u64 != m {
        return Err(CliError::Report(format!("{context} has {} level records for m = {m}", levels.len())));
    }
    for (j, level) in levels.iter().enumerate() {
        let ctx = format!("{context}.levels[{j}]");
        require_count(level, "level", &ctx)?;
        require_count(level, "true_calls", &ctx)?;
        require(level, "threshold", &ctx)?;
    }
    Ok(())
}

fn check_evaluation(e: &Value, context: &str) -> Result<(), CliError> {
    require_array(e, "gains", context)?;
    require_array(e, "constraints", context)?;
    require(e, "objective", context)?;
    require(e, "feasible", context)?
        .as_bool()
        .ok_or_else(|| CliError::Report(format!("{context}.feasible is not a flag")))?;
    Ok(())
}

/// Structural check of a serialized report before it reaches disk.
pub fn validate(doc: &Value) -> Result<(), CliError> {
    let kind = require(doc, "version", "report")?;
    if !kind.is_string() {
        return Err(CliError::Report("version is not a string".into()));
    }
    require_count(doc, "seed", "report")?;
    require(doc, "config", "report")?;
    if let Some(reps) = doc.get("replicates") {
        let reps = reps.as_array().ok_or_else(|| CliError::Report("replicates is not an array".into()))?;
        for (i, rep) in reps.iter().enumerate() {
            let ctx = format!("replicates[{i}]");
            if let Some(r) = require(rep, "result", &ctx)?.as_object() {
                check_estimation(&Value::Object(r.clone()), &format!("{ctx}.result"))?;
            }
        }
        require(doc, "summary", "report")?;
    } else if let Some(feasible) = doc.get("feasible") {
        if feasible.as_bool() == Some(true) {
            let result = require(doc, "result", "report")?;
            check_evaluation(require(result, "design", "result")?, "result.design")?;
            check_evaluation(require(result, "verification", "result")?, "result.verification")?;
        } else {
            let diag = require(doc, "diagnostic", "report")?;
            check_evaluation(require(diag, "best", "diagnostic")?, "diagnostic.best")?;
        }
    } else {
        for (i, row) in require_array(doc, "rows", "report")?.iter().enumerate() {
            let ctx = format!("rows[{i}]");
            require_count(row, "n", &ctx)?;
            require_count(row, "m", &ctx)?;
        }
    }
    Ok(())
}

/// Validate and write `report.json` into `dir`.
pub fn write_json<R: Serialize>(dir: &Path, report: &R) -> Result<(), CliError> {
    let doc = serde_json::to_value(report)?;
    validate(&doc)?;
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-level records of every replicate.
pub fn write_levels(dir: &Path, replicates: &[ReplicateOutcome]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("levels.csv"))?;
    w.write_record([
        "replicate",
        "level",
        "threshold",
        "candidate_threshold",
        "conditional_probability",
        "true_calls",
        "surrogate_calls",
        "acceptance_rate",
        "gamma",
        "cov",
        "rsm_order",
        "rsm_loo",
    ])?;
    for rep in replicates {
        let Some(result) = &rep.result else { continue };
        for l in &result.levels {
            w.write_record([
                rep.replicate.to_string(),
                l.level.to_string(),
                l.threshold.to_string(),
                opt(l.candidate_threshold),
                l.conditional_probability.to_string(),
                l.true_calls.to_string(),
                l.surrogate_calls.to_string(),
                l.acceptance_rate.to_string(),
                l.gamma.to_string(),
                l.cov.to_string(),
                opt(l.rsm_order),
                opt(l.rsm_loo),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Staircase points `(b_j, P[h ≤ b_j])` with the final level at `b = 0`.
pub fn cdf_points(result: &EstimationResult<f64>) -> Vec<(f64, f64)> {
    let mut points = Vec::with_capacity(result.m);
    let mut p = 1.0;
    for (j, &cp) in result.conditional_probabilities.iter().enumerate() {
        p *= cp;
        let b = result.thresholds.get(j).copied().unwrap_or(0.0);
        points.push((b, p));
    }
    points
}

pub fn write_cdf(dir: &Path, replicates: &[ReplicateOutcome]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("cdf.csv"))?;
    w.write_record(["replicate", "level", "threshold", "probability"])?;
    for rep in replicates {
        let Some(result) = &rep.result else { continue };
        for (j, (b, p)) in cdf_points(result).into_iter().enumerate() {
            w.write_record([rep.replicate.to_string(), (j + 1).to_string(), b.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn function_row(f: &FunctionEstimate) -> [String; 6] {
    let p_v = if f.bounded { format!("<{:e}", f.p_v) } else { f.p_v.to_string() };
    [format!("h{}", f.index), f.description.clone(), p_v, opt(f.cov_lower), opt(f.cov_upper), f.n_call.to_string()]
}

/// One row per probabilistic function of the verified design.
pub fn write_design_table(dir: &Path, functions: &[&FunctionEstimate]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("table.csv"))?;
    w.write_record(["function", "description", "p_v", "cov_lower", "cov_upper", "N_call"])?;
    for f in functions {
        w.write_record(function_row(f))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_benchmark_table(dir: &Path, rows: &[BenchmarkRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(dir.join("table.csv"))?;
    w.write_record([
        "N",
        "m",
        "m_sus",
        "m_sbss",
        "N_call_sus",
        "N_call_sbss",
        "expected_sus",
        "expected_sbss",
        "ratio",
        "p_hat_sus",
        "p_hat_sbss",
        "true_pf",
        "error",
    ])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            opt(r.m_sus),
            opt(r.m_sbss),
            opt(r.n_call_sus),
            opt(r.n_call_sbss),
            r.expected_sus.to_string(),
            r.expected_sbss.to_string(),
            opt(r.savings()),
            opt(r.p_hat_sus),
            opt(r.p_hat_sbss),
            r.true_pf.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn cdf_staircase_is_cumulative() {
        let r = EstimationResult::<f64> {
            p_hat: 2e-3,
            thresholds: vec![1.5, 0.7],
            conditional_probabilities: vec![0.1, 0.1, 0.2],
            m: 3,
            n_f: 40,
            cov_lower: 0.1,
            cov_upper: 0.2,
            true_calls: 100,
            surrogate_calls: 0,
            converged: true,
            levels: Vec::new(),
        };
        let pts = cdf_points(&r);
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[0], (1.5, 0.1));
        assert!((pts[1].1 - 0.01).abs() < 1e-15);
        assert_eq!(pts[2].0, 0.0);
        assert!((pts[2].1 - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn malformed_reports_are_caught() {
        assert!(validate(&json!({"seed": 1, "config": {}})).is_err());
        assert!(validate(&json!({"version": "x", "seed": 1, "config": {}, "rows": [{"n": 1}]})).is_err());
        let bad_levels = json!({
            "version": "x", "seed": 1, "config": {}, "summary": null,
            "replicates": [{"result": {"p_hat": 0.1, "m": 2, "true_calls": 10, "levels": []}}]
        });
        assert!(validate(&bad_levels).is_err());
        assert!(validate(&json!({"version": "x", "seed": 1, "config": {}, "feasible": true, "result": {}})).is_err());
        let ok = json!({"version": "x", "seed": 1, "config": {}, "rows": [{"n": 1, "m": 2}]});
        assert!(validate(&ok).is_ok());
    }
}
