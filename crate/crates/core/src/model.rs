//! Domain types shared by the solvers: observations, atoms, atomic models,
//! per-entry probability fields and solver configuration.
//!
//! Parameter classes are indexed `0..p-1` internally and correspond to labels
//! `1..=p-1`; label `p` is the reference class and carries no parameter matrix.

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::link::logit_probs_into;
use crate::scalar::{norm2, normalize, Scalar};

/// One observed `(row, col, label)` triple. Indices are 0-based, labels 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sample {
    pub row: usize,
    pub col: usize,
    pub label: u32,
}

impl Sample {
    pub fn new(row: usize, col: usize, label: u32) -> Self {
        Self { row, col, label }
    }
}

/// A multiset of revealed entries of an `rows × cols` matrix with labels in `1..=classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSet {
    rows: usize,
    cols: usize,
    classes: usize,
    samples: Vec<Sample>,
}

impl ObservationSet {
    pub fn new(rows: usize, cols: usize, classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(FamError::InvalidArgument(format!("empty matrix shape {rows}x{cols}")));
        }
        if classes < 2 {
            return Err(FamError::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        for s in &samples {
            if s.row >= rows || s.col >= cols {
                return Err(FamError::IndexOutOfBounds {
                    row: s.row,
                    col: s.col,
                    rows,
                    cols,
                });
            }
            if s.label < 1 || s.label as usize > classes {
                return Err(FamError::Validation(format!(
                    "label {} outside 1..={classes}",
                    s.label
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            classes,
            samples,
        })
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
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Same shape and alphabet, different samples (validated).
    pub fn with_samples(&self, samples: Vec<Sample>) -> Result<Self> {
        Self::new(self.rows, self.cols, self.classes, samples)
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            classes: self.classes,
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
        }
    }

    pub(crate) fn require_nonempty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(FamError::InvalidArgument("observation set is empty".into()))
        } else {
            Ok(())
        }
    }
}

/// A weighted normalized rank-one matrix `weight · left rightᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom<T> {
    pub(crate) weight: T,
    pub(crate) left: Vec<T>,
    pub(crate) right: Vec<T>,
}

pub(crate) fn unit_tolerance<T: Scalar>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(64.0))
}

impl<T: Scalar> Atom<T> {
    /// Validating constructor: `left`/`right` must already be unit vectors.
    pub fn new(weight: T, left: Vec<T>, right: Vec<T>) -> Result<Self> {
        if !(weight >= T::zero()) {
            return Err(FamError::InvalidArgument(format!("negative atom weight {weight}")));
        }
        let tol = unit_tolerance::<T>();
        for (name, v) in [("left", &left), ("right", &right)] {
            let n = norm2(v);
            if !((n - T::one()).abs() <= tol) {
                return Err(FamError::InvalidArgument(format!("{name} vector has norm {n}, expected 1")));
            }
        }
        Ok(Self { weight, left, right })
    }

    /// Builds `weight · u vᵀ` from arbitrary nonzero vectors, folding their norms
    /// into the weight.
    pub fn from_vectors(weight: T, mut left: Vec<T>, mut right: Vec<T>) -> Result<Self> {
        let nl = normalize(&mut left);
        let nr = normalize(&mut right);
        if nl == T::zero() || nr == T::zero() {
            return Err(FamError::InvalidArgument("zero vector in atom".into()));
        }
        Self::new(weight * nl * nr, left, right)
    }

    #[inline]
    pub fn weight(&self) -> T {
        self.weight
    }

    #[inline]
    pub fn left(&self) -> &[T] {
        &self.left
    }

    #[inline]
    pub fn right(&self) -> &[T] {
        &self.right
    }

    /// Entry `(row, col)` of the unweighted rank-one matrix.
    #[inline]
    pub fn basis_at(&self, row: usize, col: usize) -> T {
        self.left[row] * self.right[col]
    }
}

/// Nonnegative combination of atoms per parameter class (`classes - 1` lists).
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicModel<T> {
    rows: usize,
    cols: usize,
    classes: usize,
    atoms: Vec<Vec<Atom<T>>>,
}

impl<T: Scalar> AtomicModel<T> {
    /// The all-zero model (every class uniform under the logit link).
    pub fn zeros(rows: usize, cols: usize, classes: usize) -> Self {
        Self {
            rows,
            cols,
            classes,
            atoms: vec![Vec::new(); classes.saturating_sub(1)],
        }
    }

    pub fn from_atoms(rows: usize, cols: usize, classes: usize, atoms: Vec<Vec<Atom<T>>>) -> Result<Self> {
        if classes < 2 {
            return Err(FamError::InvalidArgument(format!("need at least 2 classes, got {classes}")));
        }
        if atoms.len() != classes - 1 {
            return Err(FamError::DimensionMismatch(format!(
                "{} atom lists for {} parameter classes",
                atoms.len(),
                classes - 1
            )));
        }
        for a in atoms.iter().flatten() {
            if a.left.len() != rows || a.right.len() != cols {
                return Err(FamError::DimensionMismatch(format!(
                    "atom of shape {}x{} in a {rows}x{cols} model",
                    a.left.len(),
                    a.right.len()
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            classes,
            atoms,
        })
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
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of parameter classes (`classes - 1`).
    #[inline]
    pub fn param_classes(&self) -> usize {
        self.atoms.len()
    }

    pub fn class_atoms(&self, class: usize) -> &[Atom<T>] {
        &self.atoms[class]
    }

    pub fn all_atoms(&self) -> &[Vec<Atom<T>>] {
        &self.atoms
    }

    pub(crate) fn into_atoms(self) -> Vec<Vec<Atom<T>>> {
        self.atoms
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.iter().map(Vec::len).sum()
    }

    /// Atomic l1 mass `Σ_j Σ_k σ_k`, an upper bound on `Σ_j ‖Xʲ‖_*`.
    pub fn l1_mass(&self) -> T {
        self.atoms.iter().flatten().map(|a| a.weight).sum()
    }

    pub(crate) fn check_entry(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            Err(FamError::IndexOutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            })
        } else {
            Ok(())
        }
    }

    /// Writes the `classes - 1` parameters at `(row, col)` into `out`, without bounds checks.
    #[inline]
    pub(crate) fn entry_into(&self, row: usize, col: usize, out: &mut [T]) {
        for (o, list) in out.iter_mut().zip(&self.atoms) {
            *o = list.iter().map(|a| a.weight * a.basis_at(row, col)).sum();
        }
    }

    /// Parameter vectors at the requested entries, touching only those entries.
    pub fn evaluate_entries(&self, pairs: &[(usize, usize)]) -> Result<Vec<Vec<T>>> {
        pairs
            .iter()
            .map(|&(r, c)| {
                self.check_entry(r, c)?;
                let mut out = vec![T::zero(); self.param_classes()];
                self.entry_into(r, c, &mut out);
                Ok(out)
            })
            .collect()
    }

    /// Materializes `Xʲ = Σ σ_k u_k v_kᵀ` for every parameter class.
    pub fn densify(&self) -> Vec<DenseMatrix<T>> {
        self.atoms
            .iter()
            .map(|list| {
                let mut m = DenseMatrix::zeros(self.rows, self.cols);
                for a in list {
                    m.add_rank_one(a.weight, &a.left, &a.right);
                }
                m
            })
            .collect()
    }

    /// Logit-link class probabilities at every entry (dense).
    pub fn probability_field(&self) -> ProbabilityField<T> {
        let mut x = vec![T::zero(); self.param_classes()];
        let mut probs = Vec::with_capacity(self.rows * self.cols * self.classes);
        let mut p = vec![T::zero(); self.classes];
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.entry_into(r, c, &mut x);
                logit_probs_into(&x, &mut p);
                probs.extend_from_slice(&p);
            }
        }
        ProbabilityField {
            rows: self.rows,
            cols: self.cols,
            classes: self.classes,
            probs,
        }
    }
}

/// Length-`classes` probability vector at every entry, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityField<T> {
    rows: usize,
    cols: usize,
    classes: usize,
    probs: Vec<T>,
}

impl<T: Scalar> ProbabilityField<T> {
    pub fn new(rows: usize, cols: usize, classes: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != rows * cols * classes {
            return Err(FamError::DimensionMismatch(format!(
                "{} probabilities for {rows}x{cols}x{classes}",
                probs.len()
            )));
        }
        let tol = T::lit(1e-9).max(T::epsilon() * T::lit(1e3));
        for (i, chunk) in probs.chunks(classes).enumerate() {
            let s: T = chunk.iter().copied().sum();
            if chunk.iter().any(|&x| !(x >= T::zero())) || !((s - T::one()).abs() <= tol) {
                return Err(FamError::Validation(format!(
                    "entry ({}, {}) is not a probability vector (sum {s})",
                    i / cols,
                    i % cols
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            classes,
            probs,
        })
    }

    /// Builds a field from a per-entry generator; the generator must return valid vectors.
    pub fn from_fn(
        rows: usize,
        cols: usize,
        classes: usize,
        mut f: impl FnMut(usize, usize) -> Vec<T>,
    ) -> Result<Self> {
        let mut probs = Vec::with_capacity(rows * cols * classes);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                if v.len() != classes {
                    return Err(FamError::DimensionMismatch(format!(
                        "generator returned {} probabilities, expected {classes}",
                        v.len()
                    )));
                }
                probs.extend(v);
            }
        }
        Self::new(rows, cols, classes, probs)
    }

    /// Logit-link field of dense parameter matrices (one per parameter class).
    pub fn from_params(params: &[DenseMatrix<T>]) -> Result<Self> {
        let first = params
            .first()
            .ok_or_else(|| FamError::InvalidArgument("no parameter matrices".into()))?;
        let (rows, cols) = (first.rows(), first.cols());
        if params.iter().any(|m| m.rows() != rows || m.cols() != cols) {
            return Err(FamError::DimensionMismatch("parameter matrices differ in shape".into()));
        }
        let classes = params.len() + 1;
        let mut x = vec![T::zero(); params.len()];
        let mut p = vec![T::zero(); classes];
        let mut probs = Vec::with_capacity(rows * cols * classes);
        for r in 0..rows {
            for c in 0..cols {
                for (xi, m) in x.iter_mut().zip(params) {
                    *xi = m.get(r, c);
                }
                logit_probs_into(&x, &mut p);
                probs.extend_from_slice(&p);
            }
        }
        Ok(Self {
            rows,
            cols,
            classes,
            probs,
        })
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
    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> &[T] {
        let i = (row * self.cols + col) * self.classes;
        &self.probs[i..i + self.classes]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.probs
    }
}

/// Solver settings. `lambda` is the nuclear-norm weight; `epsilon` and
/// `max_iters` are the duality-gap tolerance and outer-iteration budget.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig<T> {
    pub lambda: T,
    pub epsilon: T,
    pub max_iters: usize,
    pub seed: u64,
    /// Relative residual `‖gᵀu − σv‖ / σ` accepted by the top singular pair oracle.
    pub svd_tol: T,
    pub svd_max_iter: usize,
    /// Projected-gradient norm at which the atom line search stops.
    pub line_search_tol: T,
    pub line_search_max_iter: usize,
    /// Relative objective change at which the support correction stops.
    pub correction_tol: T,
    pub correction_max_iter: usize,
}

impl<T: Scalar> FitConfig<T> {
    pub fn new(lambda: T) -> Self {
        Self {
            lambda,
            epsilon: T::lit(1e-4),
            max_iters: 500,
            seed: 0,
            svd_tol: T::lit(1e-10),
            svd_max_iter: 1000,
            line_search_tol: T::lit(1e-10),
            line_search_max_iter: 50,
            correction_tol: T::lit(1e-13),
            correction_max_iter: 500,
        }
    }

    pub fn with_epsilon(mut self, epsilon: T) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) || !self.lambda.is_finite() {
            return Err(FamError::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if !(self.epsilon > T::zero()) {
            return Err(FamError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.max_iters == 0 {
            return Err(FamError::Config("max_iters must be at least 1".into()));
        }
        if !(self.svd_tol > T::zero()) || self.svd_max_iter == 0 {
            return Err(FamError::Config("invalid singular-pair tolerance".into()));
        }
        Ok(())
    }
}
