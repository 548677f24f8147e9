//! Polynomial response surfaces in physical coordinates with empirical and
//! leave-one-out error estimates, plus LOO-driven order selection.
//!
//! Inputs are standardized with the per-dimension mean and standard
//! deviation of the experimental design before monomials are formed; the
//! map is stored in the model so evaluation needs nothing else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::orthopoly::{basis_size, total_degree_indices, MultiIndex};
use crate::scalar::Scalar;

/// Leverage above which a fit counts as interpolatory.
pub const LEVERAGE_LIMIT: f64 = 1.0 - 1e-6;

/// Least-squares polynomial `ĥ(θ) = Σ cₖ Π_r z_r^{m_r}`, `z = (θ − center)/scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct RsmModel<T: Scalar> {
    order: usize,
    indices: Vec<MultiIndex>,
    coefficients: Vec<T>,
    center: Vec<T>,
    scale: Vec<T>,
}

/// Error measures of a fit on its own experimental design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FitDiagnostics<T: Scalar> {
    pub eps_emp: T,
    pub eps_emp_rel: T,
    pub eps_loo: T,
    pub eps_loo_rel: T,
    /// Diagonal of the hat matrix, one entry per design point.
    pub leverage: Vec<T>,
}

impl<T: Scalar> RsmModel<T> {
    /// A model from explicit parts; mostly useful for tests and replay.
    pub fn from_parts(order: usize, coefficients: Vec<T>, center: Vec<T>, scale: Vec<T>) -> Result<Self> {
        let p = center.len();
        if scale.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: scale.len() });
        }
        if scale.iter().any(|s| !(*s > T::zero())) {
            return Err(Error::InvalidParameter("RSM scales must be positive".into()));
        }
        let indices = total_degree_indices(p, order)?;
        if coefficients.len() != indices.len() {
            return Err(Error::DimensionMismatch { expected: indices.len(), got: coefficients.len() });
        }
        Ok(Self { order, indices, coefficients, center, scale })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    pub fn scale(&self) -> &[T] {
        &self.scale
    }

    pub fn evaluate(&self, theta: &[T]) -> Result<T> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        let mut row = vec![T::zero(); self.indices.len()];
        monomial_row(&self.indices, self.order, &self.center, &self.scale, theta, &mut row);
        Ok(row.iter().zip(&self.coefficients).map(|(&a, &b)| a * b).sum())
    }
}

fn monomial_row<T: Scalar>(
    indices: &[MultiIndex],
    order: usize,
    center: &[T],
    scale: &[T],
    theta: &[T],
    out: &mut [T],
) {
    let p = theta.len();
    let stride = order + 1;
    let mut powers = vec![T::one(); p * stride];
    for r in 0..p {
        let z = (theta[r] - center[r]) / scale[r];
        for d in 1..stride {
            powers[r * stride + d] = powers[r * stride + d - 1] * z;
        }
    }
    for (slot, idx) in out.iter_mut().zip(indices) {
        let mut v = T::one();
        for (r, &d) in idx.degrees().iter().enumerate() {
            v *= powers[r * stride + d];
        }
        *slot = v;
    }
}

/// Unbiased sample variance.
pub(crate) fn variance<T: Scalar>(y: &[T]) -> T {
    let n = T::of_usize(y.len());
    let mean = y.iter().copied().sum::<T>() / n;
    y.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (n - T::one())
}

fn standardization<T: Scalar>(samples: &[Vec<T>]) -> Result<(Vec<T>, Vec<T>)> {
    let p = samples[0].len();
    let n = T::of_usize(samples.len());
    let mut center = vec![T::zero(); p];
    let mut scale = vec![T::zero(); p];
    for r in 0..p {
        let mean = samples.iter().map(|s| s[r]).sum::<T>() / n;
        let var = samples.iter().map(|s| (s[r] - mean).powi(2)).sum::<T>() / n;
        if !(var > T::zero()) {
            return Err(Error::DegenerateDesign(format!("input dimension {r} does not vary")));
        }
        center[r] = mean;
        scale[r] = var.sqrt();
    }
    Ok((center, scale))
}

/// Least-squares fit of total order `order` with LOO diagnostics.
pub fn fit<T: Scalar>(samples: &[Vec<T>], responses: &[T], order: usize) -> Result<(RsmModel<T>, FitDiagnostics<T>)> {
    let n = samples.len();
    if n != responses.len() {
        return Err(Error::DimensionMismatch { expected: n, got: responses.len() });
    }
    if n < 2 {
        return Err(Error::DegenerateDesign("at least two samples are required".into()));
    }
    let p = samples[0].len();
    if let Some(s) = samples.iter().find(|s| s.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, got: s.len() });
    }
    let size = basis_size(p, order).ok_or_else(|| Error::BasisTooLarge(format!("p = {p}, M = {order}")))?;
    if n < size + 1 {
        return Err(Error::DegenerateDesign(format!("{n} samples cannot support {size} terms plus one")));
    }
    let var_y = variance(responses);
    if !(var_y > T::zero()) {
        return Err(Error::ConstantResponse);
    }
    let (center, scale) = standardization(samples)?;
    let indices = total_degree_indices(p, order)?;
    let mut a = Matrix::zeros(n, size);
    for (i, theta) in samples.iter().enumerate() {
        monomial_row(&indices, order, &center, &scale, theta, a.row_mut(i));
    }
    let lsq = least_squares(&a, responses)?;
    let limit = T::of(LEVERAGE_LIMIT);
    if let Some(i) = lsq.leverage.iter().position(|&s| s > limit) {
        return Err(Error::DegenerateDesign(format!(
            "design point {i} has leverage {} (interpolatory fit)",
            lsq.leverage[i]
        )));
    }
    let nf = T::of_usize(n);
    let eps_emp = lsq.residuals.iter().map(|&r| r * r).sum::<T>() / nf;
    let eps_loo = lsq
        .residuals
        .iter()
        .zip(&lsq.leverage)
        .map(|(&r, &s)| {
            let e = r / (T::one() - s);
            e * e
        })
        .sum::<T>()
        / nf;
    let diagnostics = FitDiagnostics {
        eps_emp,
        eps_emp_rel: eps_emp / var_y,
        eps_loo,
        eps_loo_rel: eps_loo / var_y,
        leverage: lsq.leverage,
    };
    let model = RsmModel { order, indices, coefficients: lsq.coefficients, center, scale };
    Ok((model, diagnostics))
}

/// Outcome of one candidate order inside [`fit_adaptive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OrderTrial<T: Scalar> {
    pub order: usize,
    pub basis_size: usize,
    /// `(ε_emp^r, ε_LOO^r)` when the order could be fitted.
    pub errors: Option<(T, T)>,
    /// Why the order was skipped, when it was.
    pub skipped: Option<String>,
}

/// Result of LOO-driven order selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AdaptiveFit<T: Scalar> {
    pub model: RsmModel<T>,
    pub diagnostics: FitDiagnostics<T>,
    pub order: usize,
    pub trials: Vec<OrderTrial<T>>,
}

/// Fit every feasible order in `min_order..=max_order` and keep the one with
/// the smallest relative LOO error (ties go to the lower order).
pub fn fit_adaptive<T: Scalar>(
    samples: &[Vec<T>],
    responses: &[T],
    min_order: usize,
    max_order: usize,
) -> Result<AdaptiveFit<T>> {
    if min_order > max_order {
        return Err(Error::InvalidParameter(format!("order range {min_order}..={max_order} is empty")));
    }
    if samples.len() >= 2 && !(variance(responses) > T::zero()) {
        return Err(Error::ConstantResponse);
    }
    let p = samples.first().map_or(0, Vec::len);
    let mut trials = Vec::new();
    let mut best: Option<(RsmModel<T>, FitDiagnostics<T>)> = None;
    for order in min_order..=max_order {
        let size = basis_size(p, order).unwrap_or(usize::MAX);
        if samples.len() < size.saturating_add(1) {
            trials.push(OrderTrial {
                order,
                basis_size: size,
                errors: None,
                skipped: Some(format!("{} samples < {size} terms + 1", samples.len())),
            });
            continue;
        }
        match fit(samples, responses, order) {
            Ok((model, diag)) if diag.eps_loo_rel.is_finite() => {
                trials.push(OrderTrial {
                    order,
                    basis_size: size,
                    errors: Some((diag.eps_emp_rel, diag.eps_loo_rel)),
                    skipped: None,
                });
                let better = best.as_ref().is_none_or(|(_, b)| diag.eps_loo_rel < b.eps_loo_rel);
                if better {
                    best = Some((model, diag));
                }
            }
            Ok(_) => trials.push(OrderTrial {
                order,
                basis_size: size,
                errors: None,
                skipped: Some("non-finite LOO error".into()),
            }),
            Err(Error::ConstantResponse) => return Err(Error::ConstantResponse),
            Err(e) => trials.push(OrderTrial { order, basis_size: size, errors: None, skipped: Some(e.to_string()) }),
        }
    }
    match best {
        Some((model, diagnostics)) => Ok(AdaptiveFit { order: model.order, model, diagnostics, trials }),
        None => Err(Error::NoFeasibleOrder { min: min_order, max: max_order, samples: samples.len() }),
    }
}
