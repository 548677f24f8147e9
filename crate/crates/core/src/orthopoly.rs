//! Orthogonal polynomial families, total-degree multi-index sets and
//! Gaussian quadrature rules.
//!
//! Hermite polynomials use the probabilists' normalization (weight
//! `exp(-ξ²/2)/√(2π)`, norms `γₙ = n!`); Legendre polynomials are orthogonal
//! with respect to the uniform density `1/2` on `[-1, 1]` (`γₙ = 1/(2n+1)`).
//! Quadrature weights are normalized to sum to one, so a rule approximates an
//! expectation directly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolynomialFamily {
    /// Probabilists' Hermite polynomials `Heₙ`, Gaussian weight.
    Hermite,
    /// Legendre polynomials `Pₙ`, uniform weight on `[-1, 1]`.
    Legendre,
}

impl PolynomialFamily {
    /// `ψₙ(ξ)` by the three-term recurrence.
    pub fn eval<T: Scalar>(self, n: usize, xi: T) -> T {
        let mut prev = T::one();
        if n == 0 {
            return prev;
        }
        let mut cur = xi;
        for k in 1..n {
            let kf = T::of_usize(k);
            let next = match self {
                Self::Hermite => xi * cur - kf * prev,
                Self::Legendre => ((T::of(2.0) * kf + T::one()) * xi * cur - kf * prev) / (kf + T::one()),
            };
            prev = cur;
            cur = next;
        }
        cur
    }

    /// Fill `out[k] = ψₖ(ξ)` for `k = 0..out.len()`.
    pub fn eval_all<T: Scalar>(self, xi: T, out: &mut [T]) {
        if out.is_empty() {
            return;
        }
        out[0] = T::one();
        if out.len() == 1 {
            return;
        }
        out[1] = xi;
        for k in 1..out.len() - 1 {
            let kf = T::of_usize(k);
            out[k + 1] = match self {
                Self::Hermite => xi * out[k] - kf * out[k - 1],
                Self::Legendre => ((T::of(2.0) * kf + T::one()) * xi * out[k] - kf * out[k - 1]) / (kf + T::one()),
            };
        }
    }

    /// Norm `γₙ = E[ψₙ²]`.
    pub fn norm<T: Scalar>(self, n: usize) -> T {
        match self {
            Self::Hermite => (1..=n).fold(T::one(), |acc, k| acc * T::of_usize(k)),
            Self::Legendre => T::one() / T::of_usize(2 * n + 1),
        }
    }

    /// `q`-node Gauss rule for this family (Golub–Welsch).
    pub fn gauss_rule<T: Scalar>(self, q: usize) -> Result<(Vec<T>, Vec<T>)> {
        if q == 0 {
            return Err(Error::InvalidParameter("a Gauss rule needs at least one node".into()));
        }
        let mut diag = vec![T::zero(); q];
        let mut off = vec![T::zero(); q];
        for k in 1..q {
            let kf = T::of_usize(k);
            off[k - 1] = match self {
                Self::Hermite => kf.sqrt(),
                Self::Legendre => kf / (T::of(4.0) * kf * kf - T::one()).sqrt(),
            };
        }
        let mut first = vec![T::zero(); q];
        first[0] = T::one();
        symmetric_tridiagonal_eigen(&mut diag, &mut off, &mut first)?;
        let mut pairs: Vec<(T, T)> = diag.into_iter().zip(first).map(|(x, v)| (x, v * v)).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
        Ok(pairs.into_iter().unzip())
    }
}

/// Implicit QL iteration on a symmetric tridiagonal matrix.
///
/// `diag` receives the eigenvalues; `off[i]` couples rows `i` and `i + 1`
/// (the last entry is ignored); `row` holds one row of the accumulated
/// eigenvector matrix (start from a unit row to get first components).
fn symmetric_tridiagonal_eigen<T: Scalar>(diag: &mut [T], off: &mut [T], row: &mut [T]) -> Result<()> {
    let n = diag.len();
    if n == 1 {
        return Ok(());
    }
    off[n - 1] = T::zero();
    let two = T::of(2.0);
    for l in 0..n {
        let mut iterations = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iterations += 1;
            if iterations > 60 {
                return Err(Error::InvalidParameter("tridiagonal eigenvalue iteration did not converge".into()));
            }
            let mut g = (diag[l + 1] - diag[l]) / (two * off[l]);
            let mut r = g.hypot(T::one());
            let signed = if g >= T::zero() { r.abs() } else { -r.abs() };
            g = diag[m] - diag[l] + off[l] / (g + signed);
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == T::zero() {
                    diag[i + 1] -= p;
                    off[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + two * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
                let z = row[i + 1];
                row[i + 1] = s * row[i] + c * z;
                row[i] = c * row[i] - s * z;
            }
            if underflow {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = T::zero();
        }
    }
    Ok(())
}

/// Degrees of a multivariate basis polynomial, one per input dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn total_degree(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.0
    }
}

/// `(M + p)! / (M! p!)`, or `None` on overflow.
pub fn basis_size(p: usize, order: usize) -> Option<usize> {
    // C(M + p, p) built incrementally so every intermediate is an exact binomial.
    let mut acc: usize = 1;
    for k in 1..=p {
        acc = acc.checked_mul(order + k)? / k;
    }
    Some(acc)
}

/// Every multi-index of dimension `p` with total degree at most `order`,
/// in graded order: by total degree, then descending lexicographic
/// (`(1,0,0)` before `(0,1,0)`). Index 0 is the constant term.
pub fn total_degree_indices(p: usize, order: usize) -> Result<Vec<MultiIndex>> {
    if p == 0 {
        return Err(Error::InvalidParameter("multi-indices need p >= 1".into()));
    }
    let count = basis_size(p, order)
        .ok_or_else(|| Error::BasisTooLarge(format!("total-degree basis with p = {p}, M = {order} overflows")))?;
    if count > 50_000_000 {
        return Err(Error::BasisTooLarge(format!("total-degree basis with p = {p}, M = {order} has {count} terms")));
    }
    let mut out = Vec::with_capacity(count);
    let mut current = vec![0usize; p];
    for degree in 0..=order {
        fill_degree(&mut current, 0, degree, &mut out);
    }
    debug_assert_eq!(out.len(), count);
    Ok(out)
}

fn fill_degree(current: &mut [usize], pos: usize, remaining: usize, out: &mut Vec<MultiIndex>) {
    if pos == current.len() - 1 {
        current[pos] = remaining;
        out.push(MultiIndex(current.to_vec()));
        return;
    }
    for d in (0..=remaining).rev() {
        current[pos] = d;
        fill_degree(current, pos + 1, remaining - d, out);
    }
    current[pos] = 0;
}

/// `Ψ(ξ) = Π_r ψ_{m_r}(ξ_r)` with a per-dimension family.
pub fn eval_multivariate<T: Scalar>(families: &[PolynomialFamily], index: &MultiIndex, xi: &[T]) -> Result<T> {
    if index.dim() != xi.len() {
        return Err(Error::DimensionMismatch { expected: index.dim(), got: xi.len() });
    }
    if families.len() != xi.len() {
        return Err(Error::DimensionMismatch { expected: families.len(), got: xi.len() });
    }
    Ok(families.iter().zip(index.degrees()).zip(xi).map(|((f, &d), &x)| f.eval(d, x)).fold(T::one(), |acc, v| acc * v))
}

/// Norm `E[Ψ²]` of a tensor basis polynomial.
pub fn multivariate_norm<T: Scalar>(families: &[PolynomialFamily], index: &MultiIndex) -> T {
    families.iter().zip(index.degrees()).map(|(f, &d)| f.norm::<T>(d)).fold(T::one(), |acc, v| acc * v)
}

/// Evaluates a whole basis at a point, caching univariate values per
/// dimension so each row costs one recurrence per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisEvaluator {
    families: Vec<PolynomialFamily>,
    indices: Vec<MultiIndex>,
    max_degree: usize,
}

impl BasisEvaluator {
    pub fn new(families: Vec<PolynomialFamily>, indices: Vec<MultiIndex>) -> Result<Self> {
        let p = families.len();
        if let Some(bad) = indices.iter().find(|i| i.dim() != p) {
            return Err(Error::DimensionMismatch { expected: p, got: bad.dim() });
        }
        let max_degree = indices.iter().flat_map(|i| i.degrees().iter().copied()).max().unwrap_or(0);
        Ok(Self { families, indices, max_degree })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn indices(&self) -> &[MultiIndex] {
        &self.indices
    }

    pub fn families(&self) -> &[PolynomialFamily] {
        &self.families
    }

    /// Write `Ψ_k(ξ)` for every basis term into `out`.
    pub fn fill_row<T: Scalar>(&self, xi: &[T], out: &mut [T]) -> Result<()> {
        let p = self.dim();
        if xi.len() != p {
            return Err(Error::DimensionMismatch { expected: p, got: xi.len() });
        }
        let stride = self.max_degree + 1;
        let mut table = vec![T::zero(); p * stride];
        for (r, (f, &x)) in self.families.iter().zip(xi).enumerate() {
            f.eval_all(x, &mut table[r * stride..(r + 1) * stride]);
        }
        for (slot, idx) in out.iter_mut().zip(&self.indices) {
            let mut v = T::one();
            for (r, &d) in idx.degrees().iter().enumerate() {
                v *= table[r * stride + d];
            }
            *slot = v;
        }
        Ok(())
    }

    /// `Σ_k coeffs[k] Ψ_k(ξ)`.
    pub fn dot<T: Scalar>(&self, coeffs: &[T], xi: &[T]) -> Result<T> {
        let mut row = vec![T::zero(); self.len()];
        self.fill_row(xi, &mut row)?;
        Ok(row.iter().zip(coeffs).map(|(&a, &b)| a * b).sum())
    }
}

/// Quadrature nodes and weights on the standard space (weights sum to one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule<T> {
    pub nodes: Vec<Vec<T>>,
    pub weights: Vec<T>,
    /// Nodes per dimension of the underlying 1-D rules.
    pub nodes_per_dim: usize,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `Σ_j f(ξ⁽ʲ⁾) w⁽ʲ⁾`.
    pub fn integrate(&self, mut f: impl FnMut(&[T]) -> T) -> T {
        self.nodes.iter().zip(&self.weights).map(|(x, &w)| f(x) * w).sum()
    }
}

/// Tensor product of `q`-node Gauss rules, one family per dimension.
pub fn tensor_quadrature<T: Scalar>(families: &[PolynomialFamily], q: usize) -> Result<QuadratureRule<T>> {
    if families.is_empty() {
        return Err(Error::InvalidParameter("tensor quadrature needs p >= 1".into()));
    }
    let total = (0..families.len()).try_fold(1usize, |acc, _| acc.checked_mul(q));
    let total = total.ok_or_else(|| Error::BasisTooLarge("tensor grid overflows".into()))?;
    let rules = families.iter().map(|f| f.gauss_rule::<T>(q)).collect::<Result<Vec<_>>>()?;
    let p = families.len();
    let mut nodes = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    let mut digits = vec![0usize; p];
    for _ in 0..total {
        nodes.push(digits.iter().zip(&rules).map(|(&d, r)| r.0[d]).collect());
        weights.push(digits.iter().zip(&rules).map(|(&d, r)| r.1[d]).fold(T::one(), |a, w| a * w));
        // Odometer increment, last dimension fastest.
        for r in (0..p).rev() {
            digits[r] += 1;
            if digits[r] < q {
                break;
            }
            digits[r] = 0;
        }
    }
    Ok(QuadratureRule { nodes, weights, nodes_per_dim: q })
}
