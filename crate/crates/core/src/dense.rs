//! Small row-major dense matrices for desk-scale evaluation and the reference solver.

use crate::error::{FamError, Result};
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Thin singular value decomposition `A = U diag(s) Vᵀ`, singular values sorted
/// in decreasing order. `u[k]` and `v[k]` are the k-th left/right vectors.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub s: Vec<T>,
    pub u: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(FamError::DimensionMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn add_at(&mut self, r: usize, c: usize, v: T) {
        let i = r * self.cols + c;
        self.data[i] = self.data[i] + v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Adds `w · u vᵀ`.
    pub fn add_rank_one(&mut self, w: T, u: &[T], v: &[T]) {
        debug_assert_eq!(u.len(), self.rows);
        debug_assert_eq!(v.len(), self.cols);
        for (r, &ur) in u.iter().enumerate() {
            let wu = w * ur;
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, &vc) in row.iter_mut().zip(v) {
                *x = *x + wu * vc;
            }
        }
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|&x| x * x).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(FamError::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        })
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// One-sided Jacobi (Hestenes) SVD. Accurate to working precision, intended
    /// for matrices of at most a few hundred rows/columns.
    pub fn svd(&self) -> Svd<T> {
        if self.rows < self.cols {
            let t = self.transpose().svd();
            return Svd {
                s: t.s,
                u: t.v,
                v: t.u,
            };
        }
        let (m, n) = (self.rows, self.cols);
        // columns of A, rotated in place until mutually orthogonal
        let mut a: Vec<Vec<T>> = (0..n).map(|c| (0..m).map(|r| self.get(r, c)).collect()).collect();
        let mut v: Vec<Vec<T>> = (0..n)
            .map(|c| (0..n).map(|r| if r == c { T::one() } else { T::zero() }).collect())
            .collect();
        let eps = T::epsilon();
        for _sweep in 0..80 {
            let mut rotated = false;
            for i in 0..n {
                for j in (i + 1)..n {
                    let alpha = dot(&a[i], &a[i]);
                    let beta = dot(&a[j], &a[j]);
                    let gamma = dot(&a[i], &a[j]);
                    if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                        continue;
                    }
                    rotated = true;
                    let zeta = (beta - alpha) / (gamma + gamma);
                    let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                    let c = T::one() / (T::one() + t * t).sqrt();
                    let s = c * t;
                    let (lo, hi) = a.split_at_mut(j);
                    rotate(&mut lo[i], &mut hi[0], c, s);
                    let (lo, hi) = v.split_at_mut(j);
                    rotate(&mut lo[i], &mut hi[0], c, s);
                }
            }
            if !rotated {
                break;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        let norms: Vec<T> = a.iter().map(|col| dot(col, col).sqrt()).collect();
        order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap_or(std::cmp::Ordering::Equal));
        let mut s = Vec::with_capacity(n);
        let mut u = Vec::with_capacity(n);
        let mut vv = Vec::with_capacity(n);
        for k in order {
            let sk = norms[k];
            s.push(sk);
            if sk > T::zero() {
                u.push(a[k].iter().map(|&x| x / sk).collect());
            } else {
                u.push(vec![T::zero(); m]);
            }
            vv.push(v[k].clone());
        }
        Svd { s, u, v: vv }
    }

    /// Sum of singular values.
    pub fn nuclear_norm(&self) -> T {
        self.svd().s.into_iter().sum()
    }

    /// Number of singular values above `threshold · σ₁`.
    pub fn numerical_rank(&self, threshold: T) -> usize {
        let s = self.svd().s;
        match s.first() {
            Some(&s1) if s1 > T::zero() => s.iter().filter(|&&x| x > threshold * s1).count(),
            _ => 0,
        }
    }
}

fn rotate<T: Scalar>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

impl<T: Scalar> Svd<T> {
    /// Rebuilds `U diag(s) Vᵀ` keeping only singular values shrunk by `shift`
    /// (soft thresholding); returns the matrix and the count of survivors.
    pub fn soft_threshold(&self, rows: usize, cols: usize, shift: T) -> (DenseMatrix<T>, usize) {
        let mut out = DenseMatrix::zeros(rows, cols);
        let mut kept = 0;
        for k in 0..self.s.len() {
            let w = self.s[k] - shift;
            if w > T::zero() {
                out.add_rank_one(w, &self.u[k], &self.v[k]);
                kept += 1;
            }
        }
        (out, kept)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_of_diagonal() {
        let m = DenseMatrix::from_fn(3, 2, |r, c| if r == c { [3.0, 1.0][r] } else { 0.0 });
        let svd = m.svd();
        assert!((svd.s[0] - 3.0f64).abs() < 1e-14);
        assert!((svd.s[1] - 1.0f64).abs() < 1e-14);
    }

    #[test]
    fn svd_reconstructs_wide_matrix() {
        let m = DenseMatrix::from_fn(3, 5, |r, c| ((r * 7 + c * 3) % 5) as f64 - 2.0 + 0.1 * c as f64);
        let svd = m.svd();
        let (rec, kept) = svd.soft_threshold(3, 5, 0.0);
        assert!(kept <= 3);
        for r in 0..3 {
            for c in 0..5 {
                assert!((rec.get(r, c) - m.get(r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn nuclear_norm_of_rank_one() {
        let mut m = DenseMatrix::zeros(4, 3);
        m.add_rank_one(2.5, &[0.6, 0.8, 0.0, 0.0], &[0.0, 1.0, 0.0]);
        assert!((m.nuclear_norm() - 2.5f64).abs() < 1e-13);
        assert_eq!(m.numerical_rank(1e-8), 1);
    }
}
