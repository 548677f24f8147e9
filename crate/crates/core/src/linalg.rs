//! Dense least squares through Householder QR, with hat-matrix diagonals.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut m = Self::zeros(rows.len(), cols);
        for (i, r) in rows.iter().enumerate() {
            m.row_mut(i).copy_from_slice(r);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum()).collect()
    }
}

/// Result of an ordinary least-squares solve `min ‖A c − y‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquaresFit<T> {
    pub coefficients: Vec<T>,
    /// `y − A c` at every design point.
    pub residuals: Vec<T>,
    /// Diagonal of `A (AᵀA)⁻¹ Aᵀ`.
    pub leverage: Vec<T>,
}

/// Solve the least-squares problem via Householder QR.
///
/// The normal-equations solution `(AᵀA)⁻¹Aᵀy` is obtained without forming
/// `AᵀA`; leverages are the squared row norms of the thin `Q` factor.
pub fn least_squares<T: Scalar>(a: &Matrix<T>, y: &[T]) -> Result<LeastSquaresFit<T>> {
    let (n, p) = (a.rows(), a.cols());
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if p == 0 || n < p {
        return Err(Error::DegenerateDesign(format!("{n} samples cannot determine {p} coefficients")));
    }
    let mut r = a.clone();
    // Householder vectors are stored below the diagonal of `r`, the leading
    // entry of each vector separately.
    let mut heads = vec![T::zero(); p];
    let mut diag = vec![T::zero(); p];
    for k in 0..p {
        let norm = (k..n).map(|i| r.get(i, k).powi(2)).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(Error::DegenerateDesign(format!("column {k} is identically zero")));
        }
        let alpha = if r.get(k, k) > T::zero() { -norm } else { norm };
        let head = r.get(k, k) - alpha;
        r.set(k, k, head);
        let vnorm2 = head * head + (k + 1..n).map(|i| r.get(i, k).powi(2)).sum::<T>();
        if vnorm2 > T::zero() {
            for j in k + 1..p {
                let dot = (k..n).map(|i| r.get(i, k) * r.get(i, j)).sum::<T>();
                let f = T::of(2.0) * dot / vnorm2;
                for i in k..n {
                    let v = r.get(i, j) - f * r.get(i, k);
                    r.set(i, j, v);
                }
            }
        }
        heads[k] = vnorm2;
        diag[k] = alpha;
    }

    let scale = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
    let tol = scale * T::epsilon() * T::of_usize(n.max(p)) * T::of(1e2);
    if let Some(k) = diag.iter().position(|d| d.abs() <= tol) {
        return Err(Error::DegenerateDesign(format!("experimental matrix is rank deficient at column {k}")));
    }

    let apply_reflectors = |v: &mut [T]| {
        for k in 0..p {
            if heads[k] == T::zero() {
                continue;
            }
            let dot = (k..n).map(|i| r.get(i, k) * v[i]).sum::<T>();
            let f = T::of(2.0) * dot / heads[k];
            for (i, slot) in v.iter_mut().enumerate().skip(k) {
                *slot -= f * r.get(i, k);
            }
        }
    };

    // Qᵀy, then back substitution on R.
    let mut qty = y.to_vec();
    apply_reflectors(&mut qty);
    let mut coefficients = vec![T::zero(); p];
    for k in (0..p).rev() {
        let mut s = qty[k];
        for j in k + 1..p {
            s -= r.get(k, j) * coefficients[j];
        }
        coefficients[k] = s / diag[k];
    }

    // Thin Q, column by column: Q e_k = H_0 … H_{p-1} e_k.
    let mut leverage = vec![T::zero(); n];
    let mut col = vec![T::zero(); n];
    for k in 0..p {
        col.iter_mut().for_each(|c| *c = T::zero());
        col[k] = T::one();
        for m in (0..p).rev() {
            if heads[m] == T::zero() {
                continue;
            }
            let dot = (m..n).map(|i| r.get(i, m) * col[i]).sum::<T>();
            let f = T::of(2.0) * dot / heads[m];
            for (i, slot) in col.iter_mut().enumerate().skip(m) {
                *slot -= f * r.get(i, m);
            }
        }
        for (l, c) in leverage.iter_mut().zip(&col) {
            *l += *c * *c;
        }
    }

    let fitted = a.mul_vec(&coefficients);
    let residuals = y.iter().zip(&fitted).map(|(&y, &f)| y - f).collect();
    Ok(LeastSquaresFit { coefficients, residuals, leverage })
}
