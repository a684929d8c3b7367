//! Accelerated proximal gradient with singular value soft-thresholding on dense
//! parameter matrices. Independent of the lifted solver; used to cross-check it.

use super::{FitReport, StopReason};
use crate::dense::DenseMatrix;
use crate::objective::SmoothLoss;
use crate::scalar::Scalar;

pub(crate) const REFERENCE_MAX_ITERS: usize = 200_000;
pub(crate) const REFERENCE_TOL: f64 = 1e-12;
/// Consecutive small relative changes required before declaring convergence.
const CALM_STREAK: usize = 10;

fn gather<T: Scalar, L: SmoothLoss<T>>(loss: &L, mats: &[DenseMatrix<T>]) -> Vec<T> {
    let k = mats.len();
    let mut x = vec![T::zero(); loss.n_entries() * k];
    for (e, &(r, c)) in loss.entries().iter().enumerate() {
        for (j, m) in mats.iter().enumerate() {
            x[e * k + j] = m.get(r, c);
        }
    }
    x
}

pub(crate) fn dense_objective_with<T: Scalar, L: SmoothLoss<T>>(loss: &L, mats: &[DenseMatrix<T>], lambda: T) -> T {
    let nuclear: T = mats.iter().map(|m| m.nuclear_norm()).sum();
    lambda * nuclear + loss.value(&gather(loss, mats))
}

pub(crate) fn reference_solve<T: Scalar, L: SmoothLoss<T>>(
    loss: &L,
    lambda: T,
    max_iters: usize,
    tol: T,
) -> (Vec<DenseMatrix<T>>, FitReport<T>) {
    let k = loss.dim();
    let (rows, cols) = (loss.rows(), loss.cols());
    let step = T::one() / loss.curvature_bound();
    let shift = lambda * step;
    let tiny = T::min_positive_value().sqrt();

    let mut x: Vec<DenseMatrix<T>> = vec![DenseMatrix::zeros(rows, cols); k];
    let mut y = x.clone();
    let mut f_x = loss.value(&gather(loss, &x));
    let mut t = T::one();
    let mut grad = vec![T::zero(); loss.n_entries() * k];
    let mut trace = vec![f_x];
    let mut ranks = vec![0usize];
    let mut calm = 0;
    let mut stop = StopReason::MaxIters;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        loss.gradient(&gather(loss, &y), &mut grad);
        let mut nuclear = T::zero();
        let mut rank = 0;
        let x_new: Vec<DenseMatrix<T>> = (0..k)
            .map(|j| {
                let mut z = y[j].clone();
                for (e, &(r, c)) in loss.entries().iter().enumerate() {
                    z.add_at(r, c, -step * grad[e * k + j]);
                }
                let svd = z.svd();
                nuclear = nuclear + svd.s.iter().map(|&s| (s - shift).max(T::zero())).sum::<T>();
                let (m, kept) = svd.soft_threshold(rows, cols, shift);
                rank += kept;
                m
            })
            .collect();
        let f_new = lambda * nuclear + loss.value(&gather(loss, &x_new));

        if f_new > f_x {
            if t == T::one() {
                // no descent from the current point: rounding floor reached
                stop = StopReason::ObjectiveConverged;
                break;
            }
            y = x.clone();
            t = T::one();
            continue;
        }
        let change = f_x - f_new;
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let momentum = (t - T::one()) / t_next;
        y = x_new
            .iter()
            .zip(&x)
            .map(|(a, b)| {
                DenseMatrix::from_fn(rows, cols, |r, c| {
                    let (ar, br) = (a.get(r, c), b.get(r, c));
                    ar + momentum * (ar - br)
                })
            })
            .collect();
        x = x_new;
        f_x = f_new;
        t = t_next;
        trace.push(f_x);
        ranks.push(rank);
        if change <= tol * f_x.abs().max(tiny) {
            calm += 1;
            if calm >= CALM_STREAK {
                stop = StopReason::ObjectiveConverged;
                break;
            }
        } else {
            calm = 0;
        }
    }

    let report = FitReport {
        iterations,
        objective_trace: trace,
        atom_counts: ranks,
        stop_reason: stop,
        converged: stop == StopReason::ObjectiveConverged,
        gap: T::nan(),
        gap_max: T::nan(),
    };
    (x, report)
}
