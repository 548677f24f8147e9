//! Truncated polynomial chaos expansions.
//!
//! Coefficients are computed either by spectral projection on a tensor
//! Gauss rule or by least-squares regression on an experimental design.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::orthopoly::{
    basis_size, multivariate_norm, total_degree_indices, BasisEvaluator, MultiIndex, PolynomialFamily, QuadratureRule,
};
use crate::scalar::Scalar;
use crate::uncertainty::UncertainVector;

/// A fitted expansion `ĥ(θ) = Σ aᵢ Ψᵢ(τ(θ))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PceModel<T: Scalar> {
    order: usize,
    families: Vec<PolynomialFamily>,
    indices: Vec<MultiIndex>,
    coefficients: Vec<T>,
    transform: UncertainVector<T>,
    /// True-model evaluations spent on the fit.
    training_calls: usize,
    #[serde(skip)]
    evaluator: Option<BasisEvaluator>,
}

impl<T: Scalar> PceModel<T> {
    /// Assemble a model from explicit coefficients (graded total-degree layout).
    pub fn from_coefficients(uv: &UncertainVector<T>, order: usize, coefficients: Vec<T>) -> Result<Self> {
        let families = uv.families();
        let indices = total_degree_indices(uv.dim(), order)?;
        if coefficients.len() != indices.len() {
            return Err(Error::DimensionMismatch { expected: indices.len(), got: coefficients.len() });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("PCE coefficients must be finite".into()));
        }
        let evaluator = BasisEvaluator::new(families.clone(), indices.clone())?;
        Ok(Self {
            order,
            families,
            indices,
            coefficients,
            transform: uv.clone(),
            training_calls: 0,
            evaluator: Some(evaluator),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn coefficients(&self) -> &[T] {
        &self.coefficients
    }

    pub fn families(&self) -> &[PolynomialFamily] {
        &self.families
    }

    pub fn transform(&self) -> &UncertainVector<T> {
        &self.transform
    }

    pub fn training_calls(&self) -> usize {
        self.training_calls
    }

    /// Coefficient of the basis term with the given degrees, if retained.
    pub fn coefficient_of(&self, degrees: &[usize]) -> Option<T> {
        self.indices.iter().position(|i| i.degrees() == degrees).map(|k| self.coefficients[k])
    }

    /// Rebuild the cached basis evaluator (needed after deserialization).
    pub fn rehydrate(mut self) -> Result<Self> {
        self.evaluator = Some(BasisEvaluator::new(self.families.clone(), self.indices.clone())?);
        Ok(self)
    }

    /// Evaluate at a point of standard space ξ.
    pub fn evaluate_standard(&self, xi: &[T]) -> Result<T> {
        match &self.evaluator {
            Some(ev) => ev.dot(&self.coefficients, xi),
            None => BasisEvaluator::new(self.families.clone(), self.indices.clone())?.dot(&self.coefficients, xi),
        }
    }

    /// Evaluate at a physical parameter vector θ.
    pub fn evaluate(&self, theta: &[T]) -> Result<T> {
        let xi = self.transform.to_standard(theta)?;
        self.evaluate_standard(&xi)
    }

    /// Mean and variance implied by the coefficients.
    pub fn moments(&self) -> (T, T) {
        let mean = self.coefficients[0];
        let var = self
            .indices
            .iter()
            .zip(&self.coefficients)
            .skip(1)
            .map(|(i, &a)| a * a * multivariate_norm::<T>(&self.families, i))
            .sum();
        (mean, var)
    }
}

/// Spectral projection `aᵢ = (1/γᵢ) Σⱼ h(ξ⁽ʲ⁾) Ψᵢ(ξ⁽ʲ⁾) w⁽ʲ⁾`.
///
/// `h` is called once per quadrature node, at `θ = τ⁻¹(ξ⁽ʲ⁾)`.
pub fn fit_projection<T, H>(
    h: H,
    uv: &UncertainVector<T>,
    order: usize,
    rule: &QuadratureRule<T>,
) -> Result<PceModel<T>>
where
    T: Scalar,
    H: Fn(&[T]) -> T + Sync,
{
    if rule.nodes_per_dim < order + 1 {
        return Err(Error::InsufficientQuadrature { nodes: rule.nodes_per_dim, order });
    }
    if let Some(node) = rule.nodes.iter().find(|n| n.len() != uv.dim()) {
        return Err(Error::DimensionMismatch { expected: uv.dim(), got: node.len() });
    }
    let thetas = rule.nodes.iter().map(|xi| uv.from_standard(xi)).collect::<Result<Vec<_>>>()?;
    let responses: Vec<T> = thetas.par_iter().map(|t| h(t)).collect();
    project_responses(uv, order, rule, &responses)
}

/// Projection from responses already evaluated on the rule's nodes.
pub fn project_responses<T: Scalar>(
    uv: &UncertainVector<T>,
    order: usize,
    rule: &QuadratureRule<T>,
    responses: &[T],
) -> Result<PceModel<T>> {
    if responses.len() != rule.len() {
        return Err(Error::DimensionMismatch { expected: rule.len(), got: responses.len() });
    }
    let families = uv.families();
    let indices = total_degree_indices(uv.dim(), order)?;
    let evaluator = BasisEvaluator::new(families.clone(), indices.clone())?;
    let mut sums = vec![T::zero(); indices.len()];
    let mut row = vec![T::zero(); indices.len()];
    for ((xi, &w), &y) in rule.nodes.iter().zip(&rule.weights).zip(responses) {
        evaluator.fill_row(xi, &mut row)?;
        for (s, &psi) in sums.iter_mut().zip(&row) {
            *s += y * psi * w;
        }
    }
    let coefficients: Vec<T> =
        sums.into_iter().zip(&indices).map(|(s, i)| s / multivariate_norm::<T>(&families, i)).collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidParameter("projection produced non-finite coefficients".into()));
    }
    Ok(PceModel {
        order,
        families,
        indices,
        coefficients,
        transform: uv.clone(),
        training_calls: rule.len(),
        evaluator: Some(evaluator),
    })
}

/// Least-squares regression on the experimental matrix `Aᵢⱼ = Ψⱼ(ξ⁽ⁱ⁾)`.
pub fn fit_regression<T: Scalar>(
    samples: &[Vec<T>],
    responses: &[T],
    uv: &UncertainVector<T>,
    order: usize,
) -> Result<PceModel<T>> {
    if samples.len() != responses.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), got: responses.len() });
    }
    let size =
        basis_size(uv.dim(), order).ok_or_else(|| Error::BasisTooLarge(format!("p = {}, M = {order}", uv.dim())))?;
    if samples.len() < size {
        return Err(Error::DegenerateDesign(format!("{} samples for {size} basis terms", samples.len())));
    }
    let families = uv.families();
    let indices = total_degree_indices(uv.dim(), order)?;
    let evaluator = BasisEvaluator::new(families.clone(), indices.clone())?;
    let mut a = Matrix::zeros(samples.len(), indices.len());
    for (i, theta) in samples.iter().enumerate() {
        let xi = uv.to_standard(theta)?;
        evaluator.fill_row(&xi, a.row_mut(i))?;
    }
    let fit = least_squares(&a, responses)?;
    Ok(PceModel {
        order,
        families,
        indices,
        coefficients: fit.coefficients,
        transform: uv.clone(),
        training_calls: samples.len(),
        evaluator: Some(evaluator),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::tensor_quadrature;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (UncertainVector<f64>, QuadratureRule<f64>) {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let rule = tensor_quadrature(&uv.families(), 6).unwrap();
        (uv, rule)
    }

    #[test]
    fn projection_of_square() {
        let (uv, rule) = setup();
        let model = fit_projection(|t: &[f64]| t[0] * t[0], &uv, 5, &rule).unwrap();
        assert_eq!(model.training_calls(), 216);
        assert!((model.coefficient_of(&[0, 0, 0]).unwrap() - 1.0).abs() < 1e-10);
        assert!((model.coefficient_of(&[2, 0, 0]).unwrap() - 1.0).abs() < 1e-10);
        for (i, &a) in model.indices().iter().zip(model.coefficients()) {
            if i.degrees() != [0, 0, 0] && i.degrees() != [2, 0, 0] {
                assert!(a.abs() < 1e-10);
            }
        }
        assert!((model.evaluate(&[2.0, 0.3, -1.0]).unwrap() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn projection_recovers_each_basis_polynomial() {
        let (uv, rule) = setup();
        let indices = total_degree_indices(3, 5).unwrap();
        let fam = uv.families();
        for (k, idx) in indices.iter().enumerate() {
            let target = |t: &[f64]| crate::orthopoly::eval_multivariate(&fam, idx, t).unwrap();
            let model = fit_projection(target, &uv, 5, &rule).unwrap();
            for (j, &a) in model.coefficients().iter().enumerate() {
                let expected = if j == k { 1.0 } else { 0.0 };
                assert!((a - expected).abs() < 1e-10, "term {k}, coefficient {j}: {a}");
            }
        }
    }

    #[test]
    fn insufficient_rule_is_rejected() {
        let (uv, rule) = setup();
        assert_eq!(
            fit_projection(|_: &[f64]| 0.0, &uv, 6, &rule).unwrap_err(),
            Error::InsufficientQuadrature { nodes: 6, order: 6 }
        );
    }

    #[test]
    fn regression_recovers_synthesized_expansion() {
        let uv = UncertainVector::iid_gaussian(3, 1.0, 0.15).unwrap();
        let p = basis_size(3, 2).unwrap();
        let truth: Vec<f64> = (0..p).map(|k| 0.3 * k as f64 - 1.0).collect();
        let reference = PceModel::from_coefficients(&uv, 2, truth.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = uv.sample(3 * p, &mut rng);
        let y: Vec<f64> = samples.iter().map(|t| reference.evaluate(t).unwrap()).collect();
        let model = fit_regression(&samples, &y, &uv, 2).unwrap();
        assert_eq!(model.training_calls(), 3 * p);
        for (a, b) in model.coefficients().iter().zip(&truth) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn regression_on_constant_responses() {
        let uv = UncertainVector::standard_normal(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples = uv.sample(30, &mut rng);
        let y = vec![2.5f64; 30];
        let model = fit_regression(&samples, &y, &uv, 3).unwrap();
        assert!((model.coefficients()[0] - 2.5).abs() < 1e-12);
        assert!(model.coefficients()[1..].iter().all(|a| a.abs() < 1e-12));
    }

    #[test]
    fn regression_on_exact_cubic_has_no_residual() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let p = basis_size(3, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = uv.sample(2 * p, &mut rng);
        let cubic = |t: &[f64]| t[0].powi(3) - 2.0 * t[1] * t[2] + 0.5 * t[2] + 1.0;
        let y: Vec<f64> = samples.iter().map(|t| cubic(t)).collect();
        let model = fit_regression(&samples, &y, &uv, 3).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        let emp =
            samples.iter().zip(&y).map(|(t, v)| (v - model.evaluate(t).unwrap()).powi(2)).sum::<f64>() / y.len() as f64;
        assert!(emp < 1e-16 * var, "{emp}");
    }

    #[test]
    fn too_few_samples_for_regression() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let samples = vec![vec![0.0; 3]; 5];
        assert!(matches!(fit_regression(&samples, &[0.0; 5], &uv, 2), Err(Error::DegenerateDesign(_))));
    }

    #[test]
    fn evaluate_checks_dimension_and_zero_model() {
        let uv = UncertainVector::standard_normal(3).unwrap();
        let zero = PceModel::from_coefficients(&uv, 2, vec![0.0; 10]).unwrap();
        assert_eq!(zero.evaluate(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(zero.evaluate(&[1.0]).is_err());
    }

    #[test]
    fn polynomial_target_matches_on_fresh_samples() {
        let (uv, rule) = setup();
        let h = |t: &[f64]| 0.3 * t[0].powi(4) - t[1] * t[2].powi(2) + t[0] * t[1] - 2.0;
        let model = fit_projection(h, &uv, 5, &rule).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let worst =
            uv.sample(1000, &mut rng).iter().map(|t| (model.evaluate(t).unwrap() - h(t)).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-8, "{worst}");
    }

    #[test]
    fn serialized_model_round_trips() {
        let (uv, rule) = setup();
        let model = fit_projection(|t: &[f64]| t[0] - t[2], &uv, 2, &rule).unwrap();
        let text = serde_json::to_string(&model).unwrap();
        let back: PceModel<f64> = serde_json::from_str::<PceModel<f64>>(&text).unwrap().rehydrate().unwrap();
        let x = [0.2, 0.4, -0.6];
        assert_eq!(back.evaluate(&x).unwrap(), model.evaluate(&x).unwrap());
    }
}
