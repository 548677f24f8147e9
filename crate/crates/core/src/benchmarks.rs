//! Limit states with known failure probabilities under `θ ~ N(0, I)`.
//!
//! All three kinds depend on θ only through `u = Σθᵢ/√p` and
//! `w = θ₁ − θ₂`, which are independent with `u ~ N(0,1)`, `w ~ N(0,2)`.
//! Failure `u ≥ β + g(w)` then has probability `E[Φ(−β − g(w))]`, a 1-D
//! integral evaluated by composite Gauss–Legendre quadrature.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::PolynomialFamily;
use crate::sbss::{run_sbss, InitialSurrogate, SbssConfig};
use crate::scalar::{normal_cdf, normal_pdf, normal_quantile, Scalar};
use crate::sus::{run_sus, RunError, SusConfig};
use crate::uncertainty::UncertainVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AnalyticLimitState {
    /// `β − Σθᵢ/√p`.
    Linear { p: usize, beta: f64 },
    /// `β − Σθᵢ/√p + a(θ₁−θ₂)²`.
    QuadraticConvex { p: usize, beta: f64, a: f64 },
    /// `β − Σθᵢ/√p + a(θ₁−θ₂)² + c(θ₁−θ₂)⁴ + d|θ₁−θ₂|`.
    QuarticNonsmooth { p: usize, beta: f64, a: f64, c: f64, d: f64 },
}

impl AnalyticLimitState {
    pub fn dim(&self) -> usize {
        match *self {
            Self::Linear { p, .. } | Self::QuadraticConvex { p, .. } | Self::QuarticNonsmooth { p, .. } => p,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear { .. } => "linear",
            Self::QuadraticConvex { .. } => "quadratic-convex",
            Self::QuarticNonsmooth { .. } => "quartic-nonsmooth",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.dim();
        let needs_pair = !matches!(self, Self::Linear { .. });
        if p == 0 || (needs_pair && p < 2) {
            return Err(Error::InvalidParameter(format!(
                "{} limit state needs p ≥ {}",
                self.name(),
                1 + needs_pair as usize
            )));
        }
        let finite = match *self {
            Self::Linear { beta, .. } => beta.is_finite(),
            Self::QuadraticConvex { beta, a, .. } => beta.is_finite() && a.is_finite() && a >= 0.0,
            Self::QuarticNonsmooth { beta, a, c, d, .. } => {
                [beta, a, c, d].iter().all(|v| v.is_finite()) && a >= 0.0 && c >= 0.0 && d >= 0.0
            }
        };
        if !finite {
            return Err(Error::InvalidParameter(format!(
                "{} limit state needs finite β and non-negative shape coefficients",
                self.name()
            )));
        }
        Ok(())
    }

    /// Penalty `g(w)` added to the linear part.
    fn ridge(&self, w: f64) -> f64 {
        match *self {
            Self::Linear { .. } => 0.0,
            Self::QuadraticConvex { a, .. } => a * w * w,
            Self::QuarticNonsmooth { a, c, d, .. } => a * w * w + c * w.powi(4) + d * w.abs(),
        }
    }

    fn beta(&self) -> f64 {
        match *self {
            Self::Linear { beta, .. } | Self::QuadraticConvex { beta, .. } | Self::QuarticNonsmooth { beta, .. } => {
                beta
            }
        }
    }

    pub fn evaluate<T: Scalar>(&self, theta: &[T]) -> Result<T> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        let s: T = theta.iter().copied().sum();
        let lin = T::of(self.beta()) - s / T::of_usize(theta.len()).sqrt();
        Ok(match *self {
            Self::Linear { .. } => lin,
            Self::QuadraticConvex { a, .. } => {
                let w = theta[0] - theta[1];
                lin + T::of(a) * w * w
            }
            Self::QuarticNonsmooth { a, c, d, .. } => {
                let w = theta[0] - theta[1];
                lin + T::of(a) * w * w + T::of(c) * w.powi(4) + T::of(d) * w.abs()
            }
        })
    }

    /// Failure probability `P[h(θ) ≤ 0]` for standard normal θ.
    pub fn true_pf(&self) -> f64 {
        let beta = self.beta();
        if let Self::Linear { .. } = self {
            return normal_cdf(-beta);
        }
        // w = √2·v with v ~ N(0,1); the integrand is even in v.
        let f = |v: f64| normal_cdf(-beta - self.ridge(std::f64::consts::SQRT_2 * v)) * normal_pdf(v);
        2.0 * composite_gauss_legendre(f, 0.0, 12.0, 400)
    }

    /// The standard normal input vector these limit states are defined on.
    pub fn inputs<T: Scalar>(&self) -> UncertainVector<T> {
        UncertainVector::standard_normal(self.dim()).expect("dimension validated")
    }
}

fn composite_gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights): (Vec<f64>, Vec<f64>) = PolynomialFamily::Legendre.gauss_rule(20).expect("20-point rule");
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for k in 0..panels {
        let lo = a + k as f64 * h;
        // Legendre weights sum to 1 on [-1, 1], so scale by the panel width.
        total += nodes.iter().zip(&weights).map(|(&x, &w)| w * f(lo + 0.5 * h * (x + 1.0))).sum::<f64>() * h;
    }
    total
}

/// Reliability index placing the true probability at `p0^(m − 1/2)`, the
/// log-midpoint of the band where subset simulation stops after `m` levels.
pub fn fixed_depth_beta(p0: f64, m: usize) -> f64 {
    -normal_quantile(p0.powf(m as f64 - 0.5))
}

/// Settings for one row of the call-count comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkCase {
    pub n: usize,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub n: usize,
    pub m: usize,
    pub m_sus: Option<usize>,
    pub m_sbss: Option<usize>,
    pub n_call_sus: Option<usize>,
    pub n_call_sbss: Option<usize>,
    /// `N + (m−1)(1−p0)N`.
    pub expected_sus: usize,
    /// `N₀ + (m−1)p̃0N`.
    pub expected_sbss: usize,
    pub p_hat_sus: Option<f64>,
    pub p_hat_sbss: Option<f64>,
    pub true_pf: f64,
    pub error: Option<String>,
}

impl BenchmarkRow {
    /// Both methods reached the requested depth with the predicted call counts.
    pub fn matches(&self) -> bool {
        self.error.is_none()
            && self.m_sus == Some(self.m)
            && self.m_sbss == Some(self.m)
            && self.n_call_sus == Some(self.expected_sus)
            && self.n_call_sbss == Some(self.expected_sbss)
    }

    pub fn savings(&self) -> Option<f64> {
        match (self.n_call_sus, self.n_call_sbss) {
            (Some(a), Some(b)) if a > 0 => Some(b as f64 / a as f64),
            _ => None,
        }
    }
}

/// Run SuS and SBSS on the linear limit state engineered for depth `m`.
pub fn benchmark_row(
    case: &BenchmarkCase,
    p0: f64,
    p_tilde: f64,
    initial: &InitialSurrogate,
    seed: u64,
) -> BenchmarkRow {
    let ls = AnalyticLimitState::Linear { p: 3, beta: fixed_depth_beta(p0, case.m) };
    let uv = ls.inputs::<f64>();
    let h = |t: &[f64]| ls.evaluate(t).unwrap_or(f64::NAN);
    let mut sus_cfg = SusConfig::new(case.n, p0);
    sus_cfg.max_levels = sus_cfg.max_levels.max(case.m + 2);
    let mut sbss_cfg = SbssConfig::new(case.n, p0, p_tilde);
    sbss_cfg.sus = sus_cfg.clone();
    sbss_cfg.initial = initial.clone();
    let n_s_tilde = (p_tilde * case.n as f64).round() as usize;
    let mut row = BenchmarkRow {
        n: case.n,
        m: case.m,
        m_sus: None,
        m_sbss: None,
        n_call_sus: None,
        n_call_sbss: None,
        expected_sus: case.n + (case.m - 1) * (case.n - sus_cfg.seeds()),
        expected_sbss: sbss_cfg.initial_calls(3) + (case.m - 1) * n_s_tilde,
        p_hat_sus: None,
        p_hat_sbss: None,
        true_pf: ls.true_pf(),
        error: None,
    };
    let mut errors = Vec::new();
    match run_sus(h, &uv, &sus_cfg, &mut ChaCha8Rng::seed_from_u64(seed)) {
        Ok(r) => {
            row.m_sus = Some(r.m);
            row.n_call_sus = Some(r.true_calls);
            row.p_hat_sus = Some(r.p_hat);
        }
        Err(e) => errors.push(format!("SuS: {e}")),
    }
    match run_sbss(h, &uv, &sbss_cfg, &mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1))) {
        Ok((r, _)) => {
            row.m_sbss = Some(r.m);
            row.n_call_sbss = Some(r.true_calls);
            row.p_hat_sbss = Some(r.p_hat);
        }
        Err(RunError::NotConverged(r)) => errors.push(format!("SBSS: no convergence after {} levels", r.m)),
        Err(e) => errors.push(format!("SBSS: {e}")),
    }
    if !errors.is_empty() {
        row.error = Some(errors.join("; "));
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn evaluation_examples() {
        let ls = AnalyticLimitState::Linear { p: 3, beta: 3.0 };
        assert_eq!(ls.evaluate(&[0.0f64; 3]).unwrap(), 3.0);
        let on = 3.0 * 3f64.sqrt() / 3.0;
        assert!(ls.evaluate(&[on; 3]).unwrap().abs() < 1e-14);
        assert!(ls.evaluate(&[0.0f64; 2]).is_err());
        let q = AnalyticLimitState::QuadraticConvex { p: 3, beta: 3.0, a: 0.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let t: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            assert_eq!(q.evaluate(&t).unwrap(), ls.evaluate(&t).unwrap());
        }
    }

    #[test]
    fn linear_probabilities() {
        let a = AnalyticLimitState::Linear { p: 3, beta: 3.0 }.true_pf();
        assert!((a - 1.349_898_031_630_093_3e-3).abs() < 1e-15);
        let b = AnalyticLimitState::Linear { p: 3, beta: 4.5 }.true_pf();
        assert!((b / 3.397_673_124_730_053_5e-6 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reduced_integral_matches_reference_values() {
        // Reference values from adaptive quadrature in double precision.
        let q = AnalyticLimitState::QuadraticConvex { p: 3, beta: 3.0, a: 0.1 };
        assert!((q.true_pf() / 8.787_684_577_855_432e-4 - 1.0).abs() < 1e-10);
        let z = AnalyticLimitState::QuadraticConvex { p: 3, beta: 3.0, a: 0.0 };
        assert!((z.true_pf() / normal_cdf(-3.0) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn importance_sampling_cross_check() {
        // Shift the mean of u to the design point; w stays standard.
        let ls = AnalyticLimitState::QuarticNonsmooth { p: 3, beta: 3.0, a: 0.1, c: 0.02, d: 0.3 };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let shift = 3.0;
        let mut s = 0.0;
        let mut s2 = 0.0;
        for _ in 0..n {
            let u = shift + f64::standard_normal(&mut rng);
            let v = f64::standard_normal(&mut rng);
            let third = f64::standard_normal(&mut rng);
            // Rebuild θ with Σθ/√3 = u and θ₁ − θ₂ = √2 v.
            let e1 = [1.0 / 3f64.sqrt(); 3];
            let e2 = [1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt(), 0.0];
            let e3 = [1.0 / 6f64.sqrt(), 1.0 / 6f64.sqrt(), -2.0 / 6f64.sqrt()];
            let t: Vec<f64> = (0..3).map(|i| u * e1[i] + v * e2[i] + third * e3[i]).collect();
            let fail = ls.evaluate(&t).unwrap() <= 0.0;
            let w = if fail { (-shift * u + 0.5 * shift * shift).exp() } else { 0.0 };
            s += w;
            s2 += w * w;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        let truth = ls.true_pf();
        assert!((mean - truth).abs() < 3.0 * se, "{mean} vs {truth} ± {se}");
    }

    #[test]
    fn fixed_depth_targets() {
        let b = fixed_depth_beta(0.1, 6);
        assert!((normal_cdf(-b) / 10f64.powf(-5.5) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn small_benchmark_row() {
        let row = benchmark_row(&BenchmarkCase { n: 500, m: 3 }, 0.1, 0.12, &InitialSurrogate::default(), 7);
        assert_eq!(row.expected_sus, 500 + 2 * 450);
        assert_eq!(row.expected_sbss, 216 + 2 * 60);
        assert!(row.matches(), "{row:?}");
    }
}
