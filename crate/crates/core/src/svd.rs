//! Leading singular triple of a sparse matrix by restarted Lanczos
//! bidiagonalization, using only products with `g` and `gᵀ`.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::scalar::{dot, norm2, normalize, Scalar};

/// Coordinate-list matrix with unique coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    row_idx: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn new(rows: usize, cols: usize, entries: Vec<(usize, usize, T)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(FamError::IndexOutOfBounds {
                    row: r,
                    col: c,
                    rows,
                    cols,
                });
            }
            if !seen.insert((r, c)) {
                return Err(FamError::InvalidArgument(format!("duplicate coordinate ({r}, {c})")));
            }
        }
        Ok(Self::from_unique(rows, cols, entries))
    }

    /// Caller guarantees coordinates are unique and in bounds.
    pub(crate) fn from_unique(rows: usize, cols: usize, entries: Vec<(usize, usize, T)>) -> Self {
        let mut m = Self {
            rows,
            cols,
            row_idx: Vec::with_capacity(entries.len()),
            col_idx: Vec::with_capacity(entries.len()),
            vals: Vec::with_capacity(entries.len()),
        };
        for (r, c, v) in entries {
            m.row_idx.push(r);
            m.col_idx.push(c);
            m.vals.push(v);
        }
        m
    }

    pub fn from_dense(d: &DenseMatrix<T>) -> Self {
        let mut entries = Vec::new();
        for r in 0..d.rows() {
            for c in 0..d.cols() {
                let v = d.get(r, c);
                if v != T::zero() {
                    entries.push((r, c, v));
                }
            }
        }
        Self::from_unique(d.rows(), d.cols(), entries)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.vals.len())
            .map(|i| (self.row_idx[i], self.col_idx[i], self.vals[i]))
            .collect()
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.vals.len() {
            d.add_at(self.row_idx[i], self.col_idx[i], self.vals[i]);
        }
        d
    }

    /// `⟨g, u vᵀ⟩`.
    pub fn bilinear(&self, u: &[T], v: &[T]) -> T {
        (0..self.vals.len()).fold(T::zero(), |acc, i| acc + self.vals[i] * u[self.row_idx[i]] * v[self.col_idx[i]])
    }

    /// `out = g x`
    pub fn mul_vec(&self, x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for i in 0..self.vals.len() {
            let r = self.row_idx[i];
            out[r] = out[r] + self.vals[i] * x[self.col_idx[i]];
        }
    }

    /// `out = gᵀ y`
    pub fn mul_vec_t(&self, y: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|o| *o = T::zero());
        for i in 0..self.vals.len() {
            let c = self.col_idx[i];
            out[c] = out[c] + self.vals[i] * y[self.row_idx[i]];
        }
    }

    fn is_zero(&self) -> bool {
        self.vals.iter().all(|&v| v == T::zero())
    }
}

/// Output of [`top_singular_pair`]: `g v = σ u` holds exactly up to rounding and
/// `‖gᵀu − σ v‖ ≤ tol · σ` when `converged` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriple<T> {
    pub sigma: T,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

const MAX_START_ATTEMPTS: u64 = 16;

fn gaussian_start<T: Scalar>(cols: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cols)
        .map(|_| T::lit(StandardNormal.sample(&mut rng)))
        .collect()
}

/// Largest singular value of `g` with its unit singular vectors, from a seeded
/// Gaussian start. Deterministic in `(g, seed, tol, max_iter)`.
pub fn top_singular_pair<T: Scalar>(g: &SparseMatrix<T>, seed: u64, tol: T, max_iter: usize) -> Result<SingularTriple<T>> {
    if g.is_zero() {
        return Err(FamError::ZeroMatrix);
    }
    for attempt in 0..MAX_START_ATTEMPTS {
        let start = gaussian_start::<T>(g.cols, seed.wrapping_add(attempt));
        if let Some(t) = krylov_top(g, start, tol, max_iter)? {
            return Ok(t);
        }
    }
    Err(FamError::InvalidArgument(
        "every starting vector fell in the null space".into(),
    ))
}

/// Same as [`top_singular_pair`] but started from `start` (e.g. the previous
/// right singular vector when the matrix changes slowly). Falls back to a
/// seeded Gaussian start if `start` lies in the null space.
pub fn top_singular_pair_from<T: Scalar>(
    g: &SparseMatrix<T>,
    start: &[T],
    seed: u64,
    tol: T,
    max_iter: usize,
) -> Result<SingularTriple<T>> {
    if g.is_zero() {
        return Err(FamError::ZeroMatrix);
    }
    if start.len() != g.cols {
        return Err(FamError::DimensionMismatch(format!(
            "start vector of length {} for {} columns",
            start.len(),
            g.cols
        )));
    }
    match krylov_top(g, start.to_vec(), tol, max_iter)? {
        Some(t) => Ok(t),
        None => top_singular_pair(g, seed, tol, max_iter),
    }
}

/// Largest Krylov basis built between restarts.
const KRYLOV_DIM: usize = 32;

fn reorthogonalize<T: Scalar>(w: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            for (x, &y) in w.iter_mut().zip(b) {
                *x = *x - c * y;
            }
        }
    }
}

/// Restarted Golub-Kahan-Lanczos bidiagonalization: each cycle builds a Krylov
/// basis from the current right vector and restarts from the leading Ritz
/// vector. `iterations` counts products with `g` and `gᵀ` beyond the first.
fn krylov_top<T: Scalar>(g: &SparseMatrix<T>, mut v: Vec<T>, tol: T, max_iter: usize) -> Result<Option<SingularTriple<T>>> {
    if !(tol > T::zero()) {
        return Err(FamError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let tiny = T::min_positive_value().max(T::lit(1e-300));
    let nv = norm2(&v);
    if !(nv > tiny) {
        return Ok(None);
    }
    v.iter_mut().for_each(|x| *x = *x / nv);
    let kmax = KRYLOV_DIM.min(g.rows.min(g.cols)).max(1);

    let mut u = vec![T::zero(); g.rows];
    let mut z = vec![T::zero(); g.cols];
    let mut sigma;
    let mut converged = false;
    let mut iterations = 0;
    let mut first = true;
    loop {
        g.mul_vec(&v, &mut u);
        sigma = norm2(&u);
        if !(sigma > tiny) {
            return Ok(None);
        }
        u.iter_mut().for_each(|x| *x = *x / sigma);
        g.mul_vec_t(&u, &mut z);
        if !first {
            iterations += 1;
        }
        first = false;
        let mut w: Vec<T> = z.iter().zip(&v).map(|(&zi, &vi)| zi - sigma * vi).collect();
        if norm2(&w) <= tol * sigma {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }

        let steps = kmax.min(max_iter - iterations);
        let mut vs = vec![v.clone()];
        let mut us = vec![u.clone()];
        let mut alpha = vec![sigma];
        let mut beta: Vec<T> = Vec::new();
        reorthogonalize(&mut w, &vs);
        while us.len() < steps {
            let b = norm2(&w);
            if !(b > tiny * sigma) {
                break;
            }
            let vj: Vec<T> = w.iter().map(|&x| x / b).collect();
            let mut p = vec![T::zero(); g.rows];
            g.mul_vec(&vj, &mut p);
            let prev = us.last().expect("basis is nonempty");
            for (pi, &qi) in p.iter_mut().zip(prev) {
                *pi = *pi - b * qi;
            }
            reorthogonalize(&mut p, &us);
            let a = norm2(&p);
            iterations += 1;
            if !(a > tiny * sigma) {
                break;
            }
            p.iter_mut().for_each(|x| *x = *x / a);
            g.mul_vec_t(&p, &mut z);
            w = z.iter().zip(&vj).map(|(&zi, &vi)| zi - a * vi).collect();
            vs.push(vj);
            us.push(p);
            alpha.push(a);
            beta.push(b);
            reorthogonalize(&mut w, &vs);
        }

        let k = us.len();
        let bidiag = DenseMatrix::from_fn(k, k, |r, c| {
            if r == c {
                alpha[r]
            } else if c == r + 1 {
                beta[r]
            } else {
                T::zero()
            }
        });
        let y = bidiag.svd().v.swap_remove(0);
        let mut ritz = vec![T::zero(); g.cols];
        for (basis, &yi) in vs.iter().zip(&y) {
            for (r, &b) in ritz.iter_mut().zip(basis) {
                *r = *r + yi * b;
            }
        }
        if !(normalize(&mut ritz) > tiny) {
            break;
        }
        v = ritz;
    }

    // first nonzero component of u positive
    if let Some(&first) = u.iter().find(|&&x| x != T::zero()) {
        if first < T::zero() {
            u.iter_mut().for_each(|x| *x = -*x);
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(Some(SingularTriple {
        sigma,
        u,
        v,
        iterations,
        converged,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal() {
        let g = SparseMatrix::new(2, 2, vec![(0, 0, 3.0f64), (1, 1, 1.0)]).unwrap();
        let t = top_singular_pair(&g, 0, 1e-10, 1000).unwrap();
        assert!(t.converged);
        assert!((t.sigma - 3.0).abs() < 1e-10);
        assert!((t.u[0].abs() - 1.0).abs() < 1e-9 && t.u[1].abs() < 1e-5);
        assert!((t.v[0].abs() - 1.0).abs() < 1e-9);
        assert!(t.u[0] > 0.0);
    }

    #[test]
    fn exact_rank_one() {
        let u = [0.6f64, 0.0, 0.8];
        let v = [0.0f64, 1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()];
        let mut e = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                let x = 5.0 * u[r] * v[c];
                if x != 0.0 {
                    e.push((r, c, x));
                }
            }
        }
        let g = SparseMatrix::new(3, 3, e).unwrap();
        let t = top_singular_pair(&g, 7, 1e-10, 1000).unwrap();
        assert!((t.sigma - 5.0).abs() < 1e-10);
    }

    #[test]
    fn zero_matrix_is_an_error() {
        let g = SparseMatrix::new(2, 2, vec![(0, 0, 0.0f64)]).unwrap();
        assert!(matches!(top_singular_pair(&g, 0, 1e-10, 10), Err(FamError::ZeroMatrix)));
        let g = SparseMatrix::<f64>::new(2, 2, vec![]).unwrap();
        assert!(matches!(top_singular_pair(&g, 0, 1e-10, 10), Err(FamError::ZeroMatrix)));
    }

    #[test]
    fn nonconvergence_is_flagged() {
        let e = (0..20).map(|i| (i, (i * 7) % 20, 1.0f64 - 0.01 * i as f64)).collect();
        let g = SparseMatrix::new(20, 20, e).unwrap();
        let t = top_singular_pair(&g, 1, 1e-14, 2).unwrap();
        assert!(!t.converged);
        assert_eq!(t.iterations, 2);
        assert!(t.sigma > 0.0);
    }

    #[test]
    fn rejects_duplicates_and_out_of_bounds() {
        assert!(SparseMatrix::new(2, 2, vec![(0, 0, 1.0f64), (0, 0, 2.0)]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![(2, 0, 1.0f64)]).is_err());
    }

    #[test]
    fn warm_start_matches_cold_start() {
        let g = SparseMatrix::new(3, 2, vec![(0, 0, 2.0f64), (1, 1, -1.0), (2, 0, 0.5), (2, 1, 0.25)]).unwrap();
        let cold = top_singular_pair(&g, 3, 1e-12, 1000).unwrap();
        let warm = top_singular_pair_from(&g, &cold.v, 3, 1e-12, 1000).unwrap();
        assert!((cold.sigma - warm.sigma).abs() < 1e-12);
        assert!(warm.iterations <= 1);
    }
}
