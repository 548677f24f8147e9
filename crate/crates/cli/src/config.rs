//! Run configuration files. Every block rejects unknown keys and is
//! validated before any computation starts.

use std::fs;
use std::path::{Path, PathBuf};

use raresim::benchmarks::{AnalyticLimitState, BenchmarkCase};
use raresim::chance_opt::{Direction, OptimizationProblem};
use raresim::flight::{FlightParams, GainVector};
use raresim::sbss::{InitialSurrogate, SbssConfig};
use raresim::sus::SusConfig;
use raresim::uncertainty::{MarginalDistribution, UncertainVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Limit state of one flight performance function at fixed gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlightLimit {
    #[serde(default)]
    pub params: FlightParams,
    #[serde(default)]
    pub gains: GainVector,
    /// Performance index `i` of `h_i`.
    pub performance: usize,
    pub direction: Direction,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemConfig {
    Analytic(AnalyticLimitState),
    Flight(FlightLimit),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum MethodConfig {
    Mcs(McsConfig),
    Sus(SusConfig),
    Sbss(SbssConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsConfig {
    pub n: usize,
}

fn default_replicates() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("raresim-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub problem: ProblemConfig,
    /// Input distribution; only the flight problem accepts an override.
    #[serde(default)]
    pub distribution: Option<Vec<MarginalDistribution<f64>>>,
    pub method: MethodConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl EstimateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.replicates == 0 {
            return Err(CliError::Config("replicates must be positive".into()));
        }
        match &self.problem {
            ProblemConfig::Analytic(ls) => {
                ls.validate()?;
                if self.distribution.is_some() {
                    return Err(CliError::Config(
                        "analytic limit states are defined on standard normal inputs; remove `distribution`".into(),
                    ));
                }
            }
            ProblemConfig::Flight(f) => {
                f.params.validate()?;
                if f.performance > 4 {
                    return Err(CliError::Config(format!("no performance function h{}", f.performance)));
                }
                if !f.limit.is_finite() {
                    return Err(CliError::Config("limit must be finite".into()));
                }
            }
        }
        let uv = self.uncertainty()?;
        match &self.method {
            MethodConfig::Mcs(m) if m.n == 0 => return Err(CliError::Config("N must be positive".into())),
            MethodConfig::Mcs(_) => {}
            MethodConfig::Sus(s) => s.validate()?,
            MethodConfig::Sbss(s) => {
                s.validate()?;
                if let InitialSurrogate::Regression { samples, order } = s.initial {
                    let size = raresim::orthopoly::basis_size(uv.dim(), order).unwrap_or(usize::MAX);
                    if samples < size {
                        return Err(CliError::Config(format!(
                            "initial regression needs at least {size} samples, got {samples}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn uncertainty(&self) -> Result<UncertainVector<f64>, CliError> {
        match (&self.problem, &self.distribution) {
            (ProblemConfig::Analytic(ls), _) => Ok(ls.inputs()),
            (ProblemConfig::Flight(f), None) => Ok(f.params.uncertainty()?),
            (ProblemConfig::Flight(_), Some(marginals)) => {
                if marginals.len() != 3 {
                    return Err(CliError::Config(format!(
                        "the flight model has 3 uncertain ratios, got {} marginals",
                        marginals.len()
                    )));
                }
                Ok(UncertainVector::new(marginals.clone())?)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    #[serde(default)]
    pub flight: FlightParams,
    #[serde(default = "OptimizationProblem::flight_default")]
    pub problem: OptimizationProblem,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        self.flight.validate()?;
        self.problem.validate()?;
        if self.problem.bounds.len() != 4 {
            return Err(CliError::Config(format!(
                "the flight model has 4 gains, got {} bounds",
                self.problem.bounds.len()
            )));
        }
        let indices = std::iter::once(&self.problem.objective).chain(&self.problem.constraints);
        if let Some(c) = indices.clone().find(|c| c.index > 4) {
            return Err(CliError::Config(format!("no performance function h{}", c.index)));
        }
        Ok(())
    }
}

fn default_p0() -> f64 {
    0.1
}

fn default_p_tilde() -> f64 {
    0.11
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub cases: Vec<BenchmarkCase>,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_p_tilde")]
    pub p_tilde: f64,
    #[serde(default)]
    pub initial: InitialSurrogate,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.cases.is_empty() {
            return Err(CliError::Config("benchmark needs at least one case".into()));
        }
        for case in &self.cases {
            if case.m == 0 {
                return Err(CliError::Config("level count m must be positive".into()));
            }
            let mut cfg = SbssConfig::new(case.n, self.p0, self.p_tilde);
            cfg.initial = self.initial.clone();
            cfg.validate()?;
        }
        Ok(())
    }
}

/// Parse a JSON config file, mapping every failure to a config error.
pub fn load<C: DeserializeOwned>(path: &Path) -> Result<C, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_config_round_trip() {
        let text = r#"{
            "problem": {"analytic": {"kind": "linear", "p": 3, "beta": 4.5}},
            "method": {"method": "sbss", "n": 2000, "p0": 0.1, "p_tilde": 0.11},
            "replicates": 4, "seed": 9
        }"#;
        let cfg: EstimateConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.output, PathBuf::from("raresim-out"));
        let again: EstimateConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let cases = [
            r#"{"problem": {"analytic": {"kind": "linear", "p": 3, "beta": 3.0}}, "method": {"method": "sus", "n": 100, "p0": 0.1}, "extra": 1}"#,
            r#"{"problem": {"analytic": {"kind": "linear", "p": 3, "beta": 3.0, "q": 1}}, "method": {"method": "sus", "n": 100, "p0": 0.1}}"#,
            r#"{"problem": {"analytic": {"kind": "linear", "p": 3, "beta": 3.0}}, "method": {"method": "sus", "n": 100, "p0": 0.1, "rh0": 0.5}}"#,
            r#"{"problem": {"analytic": {"kind": "linear", "p": 3, "beta": 3.0}}, "method": {"method": "sbss", "n": 100, "p0": 0.1, "p_tilde": 0.2, "x": 0}}"#,
            r#"{"problem": {"flight": {"performance": 1, "direction": "below", "limit": 6.0, "gainz": {}}}, "method": {"method": "mcs", "n": 10}}"#,
        ];
        for text in cases {
            assert!(serde_json::from_str::<EstimateConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn preconditions_are_checked() {
        let base = |method: &str| {
            format!(r#"{{"problem": {{"analytic": {{"kind": "linear", "p": 3, "beta": 3.0}}}}, "method": {method}}}"#)
        };
        let bad = [
            base(r#"{"method": "sus", "n": 1000, "p0": 0.15}"#),
            base(r#"{"method": "sbss", "n": 1000, "p0": 0.1, "p_tilde": 0.05}"#),
            base(r#"{"method": "mcs", "n": 0}"#),
            base(r#"{"method": "sus", "n": 1000, "p0": 0.1, "rho": 1.0}"#),
        ];
        for text in bad {
            let cfg: EstimateConfig = serde_json::from_str(&text).unwrap();
            assert!(cfg.validate().is_err(), "{text}");
        }
    }

    #[test]
    fn flight_distribution_override() {
        let text = r#"{
            "problem": {"flight": {"performance": 2, "direction": "below", "limit": 45.0}},
            "distribution": [
                {"family": "gaussian", "mean": 1.0, "std_dev": 0.1},
                {"family": "uniform", "lower": 0.5, "upper": 1.5},
                {"family": "gaussian", "mean": 1.0, "std_dev": 0.1}
            ],
            "method": {"method": "mcs", "n": 10}
        }"#;
        let cfg: EstimateConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.uncertainty().unwrap().dim(), 3);
        let mut two = cfg.clone();
        two.distribution.as_mut().unwrap().pop();
        assert!(two.validate().is_err());
    }

    #[test]
    fn optimize_defaults_to_flight_problem() {
        let cfg: OptimizeConfig = serde_json::from_str("{}").unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.problem, OptimizationProblem::flight_default());
    }
}
