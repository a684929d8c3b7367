//! Support-restricted re-optimization of atom weights (accelerated projected
//! gradient on the nonnegative orthant), duplicate merging and pruning.

use super::line_search::projected_newton;
use crate::model::Atom;
use crate::objective::{atom_column, SmoothLoss};
use crate::scalar::{dot, Scalar};

/// Weights at or below this value are removed after a correction.
pub(crate) const PRUNE_BELOW: f64 = 1e-12;
const DUPLICATE_COS: f64 = 1.0 - 1e-10;
const KKT_CHECK_EVERY: usize = 5;
/// Largest `entries × support²` for which the Newton polish is attempted.
const NEWTON_BUDGET: usize = 400_000_000;
const NEWTON_MAX_ITER: usize = 30;

/// Merges atoms of the same class whose left and right vectors coincide up to sign.
pub(crate) fn merge_duplicates<T: Scalar>(atoms: &mut [Vec<Atom<T>>]) {
    let threshold = T::lit(DUPLICATE_COS);
    for list in atoms.iter_mut() {
        let mut merged: Vec<Atom<T>> = Vec::with_capacity(list.len());
        'next: for atom in list.drain(..) {
            for m in merged.iter_mut() {
                let cu = dot(&m.left, &atom.left);
                let cv = dot(&m.right, &atom.right);
                if cu.abs() > threshold && cv.abs() > threshold {
                    let sign = if cu * cv > T::zero() { T::one() } else { -T::one() };
                    let w = m.weight + sign * atom.weight;
                    if w < T::zero() {
                        m.left.iter_mut().for_each(|x| *x = -*x);
                        m.weight = -w;
                    } else {
                        m.weight = w;
                    }
                    continue 'next;
                }
            }
            merged.push(atom);
        }
        *list = merged;
    }
}

pub(crate) fn prune<T: Scalar>(atoms: &mut [Vec<Atom<T>>]) -> usize {
    let floor = T::lit(PRUNE_BELOW);
    let mut removed = 0;
    for list in atoms.iter_mut() {
        let before = list.len();
        list.retain(|a| a.weight > floor);
        removed += before - list.len();
    }
    removed
}

struct Support<T> {
    class: Vec<usize>,
    cols: Vec<Vec<T>>,
}

impl<T: Scalar> Support<T> {
    fn preds(&self, w: &[T], dim: usize, n_e: usize) -> Vec<T> {
        let mut x = vec![T::zero(); n_e * dim];
        for ((col, &j), &wa) in self.cols.iter().zip(&self.class).zip(w) {
            if wa == T::zero() {
                continue;
            }
            for (e, &b) in col.iter().enumerate() {
                x[e * dim + j] = x[e * dim + j] + wa * b;
            }
        }
        x
    }

    fn kkt_residual<L: SmoothLoss<T>>(&self, loss: &L, lambda: T, w: &[T]) -> T {
        let dim = loss.dim();
        let mut lg = vec![T::zero(); loss.n_entries() * dim];
        loss.gradient(&self.preds(w, dim, loss.n_entries()), &mut lg);
        let mut g = vec![T::zero(); w.len()];
        self.weight_gradient(lambda, &lg, dim, &mut g);
        w.iter()
            .zip(&g)
            .fold(T::zero(), |m, (&wa, &ga)| m.max(if wa > T::zero() { ga.abs() } else { (-ga).max(T::zero()) }))
    }

    fn weight_gradient(&self, lambda: T, lgrad: &[T], dim: usize, out: &mut [T]) {
        for ((o, col), &j) in out.iter_mut().zip(&self.cols).zip(&self.class) {
            *o = lambda
                + col
                    .iter()
                    .enumerate()
                    .fold(T::zero(), |acc, (e, &b)| acc + lgrad[e * dim + j] * b);
        }
    }
}

/// Minimizes `λ Σ w_a + Φ(Σ w_a B_a)` over `w ≥ 0` with the atoms' vectors fixed.
///
/// Stops when the relative objective change drops to `rel_tol`, after
/// `max_iter` iterations, or when every weight satisfies the first-order
/// conditions to within `kkt_tol` (disabled when `kkt_tol` is zero). If the
/// first-order conditions still fail, a projected Newton polish follows on
/// small enough supports. The objective never increases beyond rounding.
pub(crate) fn correct<T: Scalar, L: SmoothLoss<T>>(
    loss: &L,
    lambda: T,
    atoms: &mut [Vec<Atom<T>>],
    rel_tol: T,
    max_iter: usize,
    kkt_tol: T,
) {
    let dim = loss.dim();
    let n_e = loss.n_entries();
    let entries = loss.entries();
    let mut support = Support {
        class: Vec::new(),
        cols: Vec::new(),
    };
    let mut w: Vec<T> = Vec::new();
    for (j, list) in atoms.iter().enumerate() {
        for a in list {
            support.class.push(j);
            support.cols.push(atom_column(a, entries));
            w.push(a.weight);
        }
    }
    let n_a = w.len();
    if n_a == 0 {
        return;
    }

    let value = |x: &[T], w: &[T]| lambda * w.iter().copied().sum::<T>() + loss.value(x);
    let tiny = T::min_positive_value().sqrt();

    let col_sq: T = support.cols.iter().map(|c| dot(c, c)).sum();
    let mut lip = (loss.curvature_bound() * col_sq / T::from_usize_lossy(n_a)).max(tiny);

    let mut lgrad = vec![T::zero(); n_e * dim];
    let mut g = vec![T::zero(); n_a];
    let mut f_w = value(&support.preds(&w, dim, n_e), &w);
    let mut y = w.clone();
    let mut t = T::one();
    let mut at_w = true;

    for it in 0..max_iter {
        let x_y = support.preds(&y, dim, n_e);
        let f_y = if at_w { f_w } else { value(&x_y, &y) };
        loss.gradient(&x_y, &mut lgrad);
        support.weight_gradient(lambda, &lgrad, dim, &mut g);

        if kkt_tol > T::zero() && it % KKT_CHECK_EVERY == 0 {
            let mut gw = g.clone();
            if !at_w {
                let mut lg = vec![T::zero(); n_e * dim];
                loss.gradient(&support.preds(&w, dim, n_e), &mut lg);
                support.weight_gradient(lambda, &lg, dim, &mut gw);
            }
            let worst = w
                .iter()
                .zip(&gw)
                .fold(T::zero(), |m, (&wa, &ga)| m.max(if wa > T::zero() { ga.abs() } else { (-ga).max(T::zero()) }));
            if worst <= kkt_tol {
                break;
            }
        }

        // backtracking on the local Lipschitz estimate
        let (w_new, f_new) = loop {
            let cand: Vec<T> = y.iter().zip(&g).map(|(&ya, &ga)| (ya - ga / lip).max(T::zero())).collect();
            let f_cand = value(&support.preds(&cand, dim, n_e), &cand);
            let mut lin = T::zero();
            let mut sq = T::zero();
            for ((&c, &ya), &ga) in cand.iter().zip(&y).zip(&g) {
                let d = c - ya;
                lin = lin + ga * d;
                sq = sq + d * d;
            }
            let bound = f_y + lin + lip * sq * T::lit(0.5);
            if f_cand <= bound + T::epsilon() * f_y.abs() || lip > T::max_value() / T::lit(4.0) {
                break (cand, f_cand);
            }
            lip = lip + lip;
        };

        if f_new > f_w {
            if at_w {
                // no descent even from the current iterate
                break;
            }
            y = w.clone();
            t = T::one();
            at_w = true;
            continue;
        }
        let change = f_w - f_new;
        let w_prev = std::mem::replace(&mut w, w_new);
        f_w = f_new;
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let momentum = (t - T::one()) / t_next;
        y = w
            .iter()
            .zip(&w_prev)
            .map(|(&a, &b)| (a + momentum * (a - b)).max(T::zero()))
            .collect();
        at_w = momentum == T::zero();
        t = t_next;
        lip = (lip * T::lit(0.9)).max(tiny);
        if change <= rel_tol * f_w.abs().max(tiny) {
            break;
        }
    }

    if kkt_tol > T::zero()
        && n_e.saturating_mul(n_a * n_a) <= NEWTON_BUDGET
        && support.kkt_residual(loss, lambda, &w) > kkt_tol
    {
        let dirs: Vec<&[T]> = support.cols.iter().map(Vec::as_slice).collect();
        let zero = vec![T::zero(); n_e * dim];
        let polished = projected_newton(loss, lambda, &zero, &support.class, &dirs, w.clone(), kkt_tol, NEWTON_MAX_ITER);
        let f_pol = value(&support.preds(&polished, dim, n_e), &polished);
        if f_pol <= f_w + T::epsilon() * T::lit(8.0) * f_w.abs() {
            w = polished;
        }
    }

    let mut idx = 0;
    for list in atoms.iter_mut() {
        for a in list.iter_mut() {
            a.weight = w[idx];
            idx += 1;
        }
    }
}
