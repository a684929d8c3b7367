//! The outer loop: alternate between adding the most negatively aligned
//! rank-one atom per class and re-optimizing weights on the current support,
//! until the two duality-gap tests pass.

use rayon::prelude::*;

use super::correction::{correct, merge_duplicates, prune};
use super::line_search::line_search;
use super::{gradient_matrices, lifted_objective, FitReport, StopReason};
use crate::model::{Atom, FitConfig};
use crate::objective::{inner_with_rank_one, predictions, rank_one_column, SmoothLoss};
use crate::scalar::Scalar;
use crate::svd::{top_singular_pair, SingularTriple};

pub(crate) fn solve_lifted<T: Scalar, L: SmoothLoss<T>>(
    loss: &L,
    cfg: &FitConfig<T>,
    initial: Vec<Vec<Atom<T>>>,
) -> (Vec<Vec<Atom<T>>>, FitReport<T>) {
    let dim = loss.dim();
    let entries = loss.entries();
    let lambda = cfg.lambda;
    let eps = cfg.epsilon;
    let half_eps = eps * T::lit(0.5);

    let mut atoms = initial;
    let mut preds = predictions(&atoms, entries);
    let mut obj = lifted_objective(loss, lambda, &atoms, &preds);
    let mut trace = vec![obj];
    let mut counts = vec![support_size(&atoms)];
    let mut grad = vec![T::zero(); preds.len()];

    let mut k = 0;
    let mut stop = StopReason::MaxIters;
    let mut gap = T::nan();
    let mut gap_max = T::nan();

    while k < cfg.max_iters {
        loss.gradient(&preds, &mut grad);
        let neg = gradient_matrices(loss, &grad, -T::one());
        let tops: Vec<Option<SingularTriple<T>>> = neg
            .par_iter()
            .enumerate()
            .map(|(j, m)| {
                top_singular_pair(m, cfg.seed.wrapping_add(j as u64), cfg.svd_tol, cfg.svd_max_iter).ok()
            })
            .collect();
        let sigma_max = tops
            .iter()
            .flatten()
            .fold(T::zero(), |m, t| m.max(t.sigma));
        gap = lambda - sigma_max;

        if gap <= -half_eps {
            let dirs: Vec<Option<Vec<T>>> = tops
                .iter()
                .map(|t| t.as_ref().map(|t| rank_one_column(&t.u, &t.v, entries)))
                .collect();
            let beta = line_search(loss, lambda, &preds, &dirs, cfg.line_search_tol, cfg.line_search_max_iter);
            if beta.iter().all(|&b| b <= T::zero()) {
                stop = StopReason::Stalled;
                break;
            }
            for (j, (t, b)) in tops.into_iter().zip(beta).enumerate() {
                if let (Some(t), true) = (t, b > T::zero()) {
                    let d = dirs[j].as_ref().unwrap();
                    for e in 0..entries.len() {
                        preds[e * dim + j] = preds[e * dim + j] + b * d[e];
                    }
                    atoms[j].push(Atom {
                        weight: b,
                        left: t.u,
                        right: t.v,
                    });
                }
            }
            k += 1;
        } else {
            gap_max = support_gap(loss, lambda, &atoms, &grad);
            if gap_max <= eps {
                stop = StopReason::DualityGapMet;
                break;
            }
            let before = obj;
            let count_before = support_size(&atoms);
            merge_duplicates(&mut atoms);
            correct(loss, lambda, &mut atoms, cfg.correction_tol, cfg.correction_max_iter, half_eps);
            let removed = prune(&mut atoms);
            preds = predictions(&atoms, entries);
            k += 1;
            let after = lifted_objective(loss, lambda, &atoms, &preds);
            if after >= before && removed == 0 && support_size(&atoms) == count_before {
                obj = after;
                trace.push(obj);
                counts.push(support_size(&atoms));
                stop = StopReason::Stalled;
                break;
            }
        }
        obj = lifted_objective(loss, lambda, &atoms, &preds);
        trace.push(obj);
        counts.push(support_size(&atoms));
    }

    let report = FitReport {
        iterations: k,
        objective_trace: trace,
        atom_counts: counts,
        stop_reason: stop,
        converged: stop == StopReason::DualityGapMet,
        gap,
        gap_max,
    };
    (atoms, report)
}

fn support_size<T>(atoms: &[Vec<Atom<T>>]) -> usize {
    atoms.iter().map(Vec::len).sum()
}

/// `max |λ + ⟨∇Φʲ, u vᵀ⟩|` over the support; zero if the support is empty.
pub(crate) fn support_gap<T: Scalar, L: SmoothLoss<T>>(loss: &L, lambda: T, atoms: &[Vec<Atom<T>>], grad: &[T]) -> T {
    let dim = loss.dim();
    atoms
        .iter()
        .enumerate()
        .flat_map(|(j, list)| list.iter().map(move |a| (j, a)))
        .fold(T::zero(), |m, (j, a)| {
            m.max((lambda + inner_with_rank_one(grad, dim, j, &a.left, &a.right, loss.entries())).abs())
        })
}
