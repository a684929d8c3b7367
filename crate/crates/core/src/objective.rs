//! Smooth data-fit terms evaluated at the distinct observed entries.
//!
//! Both solvers work on predictions stored as an `entries × dim` row-major
//! buffer: `preds[e * dim + j]` is parameter class `j` at the `e`-th distinct
//! observed entry. Nothing here ever touches unobserved entries.

use std::collections::HashMap;

use crate::model::{Atom, ObservationSet};
use crate::scalar::Scalar;

/// A convex, twice-differentiable loss of the parameters at observed entries.
pub trait SmoothLoss<T: Scalar>: Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// Number of parameter classes.
    fn dim(&self) -> usize;
    /// Distinct observed entries `(row, col)`.
    fn entries(&self) -> &[(usize, usize)];
    fn value(&self, preds: &[T]) -> T;
    /// Gradient with respect to `preds`, same layout.
    fn gradient(&self, preds: &[T], grad: &mut [T]);
    /// `dim × dim` Hessian block at entry `e` (entries are decoupled).
    fn entry_hessian(&self, e: usize, pred: &[T], out: &mut [T]);
    /// Upper bound on the largest Hessian eigenvalue over all entries and all predictions.
    fn curvature_bound(&self) -> T;

    fn n_entries(&self) -> usize {
        self.entries().len()
    }
}

/// Groups samples by entry. Returns the distinct entries in first-seen order and,
/// for each sample, the index of its entry.
pub(crate) fn group_entries(obs: &ObservationSet) -> (Vec<(usize, usize)>, Vec<usize>) {
    let mut index: HashMap<(usize, usize), usize> = HashMap::with_capacity(obs.len());
    let mut entries = Vec::new();
    let mut which = Vec::with_capacity(obs.len());
    for s in obs.samples() {
        let key = (s.row, s.col);
        let e = *index.entry(key).or_insert_with(|| {
            entries.push(key);
            entries.len() - 1
        });
        which.push(e);
    }
    (entries, which)
}

/// Values of `left[row]·right[col]` at every entry.
pub(crate) fn atom_column<T: Scalar>(atom: &Atom<T>, entries: &[(usize, usize)]) -> Vec<T> {
    entries.iter().map(|&(r, c)| atom.basis_at(r, c)).collect()
}

pub(crate) fn rank_one_column<T: Scalar>(u: &[T], v: &[T], entries: &[(usize, usize)]) -> Vec<T> {
    entries.iter().map(|&(r, c)| u[r] * v[c]).collect()
}

/// Predictions of a per-class atom list at the loss entries.
pub(crate) fn predictions<T: Scalar>(atoms: &[Vec<Atom<T>>], entries: &[(usize, usize)]) -> Vec<T> {
    let dim = atoms.len();
    let mut preds = vec![T::zero(); entries.len() * dim];
    for (j, list) in atoms.iter().enumerate() {
        for a in list {
            let w = a.weight;
            for (e, &(r, c)) in entries.iter().enumerate() {
                let p = &mut preds[e * dim + j];
                *p = *p + w * a.left[r] * a.right[c];
            }
        }
    }
    preds
}

/// `⟨G_j, u vᵀ⟩` where `G_j` is class `j` of an entry-level gradient.
pub(crate) fn inner_with_rank_one<T: Scalar>(
    grad: &[T],
    dim: usize,
    class: usize,
    u: &[T],
    v: &[T],
    entries: &[(usize, usize)],
) -> T {
    entries
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (e, &(r, c))| acc + grad[e * dim + class] * u[r] * v[c])
}
