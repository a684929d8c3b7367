//! Weights for newly proposed atoms: `min_{b ≥ 0} λ Σ b_j + Φ(X + Σ b_j d_j)`
//! by projected Newton with Armijo backtracking.

use crate::objective::SmoothLoss;
use crate::scalar::Scalar;

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 60;

/// `dirs[j]` is the candidate direction of class `j` at the loss entries, or
/// `None` if that class receives no candidate. Returns the step per class.
pub(crate) fn line_search<T: Scalar, L: SmoothLoss<T>>(
    loss: &L,
    lambda: T,
    preds: &[T],
    dirs: &[Option<Vec<T>>],
    tol: T,
    max_iter: usize,
) -> Vec<T> {
    let k = loss.dim();
    let active: Vec<usize> = (0..k).filter(|&j| dirs[j].is_some()).collect();
    let mut b = vec![T::zero(); k];
    if active.is_empty() {
        return b;
    }
    let cols: Vec<&[T]> = active.iter().map(|&j| dirs[j].as_deref().unwrap()).collect();
    let steps = projected_newton(
        loss,
        lambda,
        preds,
        &active,
        &cols,
        vec![T::zero(); active.len()],
        tol,
        max_iter,
    );
    for (&j, s) in active.iter().zip(steps) {
        b[j] = s;
    }
    b
}

/// Minimizes `λ Σ b_a + Φ(base + Σ b_a d_a)` over `b ≥ 0` from `start`, where
/// direction `d_a` moves class `class[a]`. Stops once every component of the
/// projected gradient is at most `tol` in magnitude.
pub(crate) fn projected_newton<T: Scalar, L: SmoothLoss<T>>(
    loss: &L,
    lambda: T,
    base: &[T],
    class: &[usize],
    dirs: &[&[T]],
    start: Vec<T>,
    tol: T,
    max_iter: usize,
) -> Vec<T> {
    let k = loss.dim();
    let n_e = loss.n_entries();
    let n_a = dirs.len();
    let shifted = |b: &[T]| -> Vec<T> {
        let mut x = base.to_vec();
        for ((d, &j), &ba) in dirs.iter().zip(class).zip(b) {
            if ba != T::zero() {
                for e in 0..n_e {
                    x[e * k + j] = x[e * k + j] + ba * d[e];
                }
            }
        }
        x
    };
    let value = |x: &[T], b: &[T]| -> T { lambda * b.iter().copied().sum::<T>() + loss.value(x) };

    let mut b = start;
    let mut x = shifted(&b);
    let mut f = value(&x, &b);
    let mut lgrad = vec![T::zero(); n_e * k];
    let mut hess_e = vec![T::zero(); k * k];
    let armijo = T::lit(ARMIJO);
    let noise = T::epsilon() * T::lit(8.0);

    for _ in 0..max_iter {
        loss.gradient(&x, &mut lgrad);
        let grad: Vec<T> = dirs
            .iter()
            .zip(class)
            .map(|(d, &j)| lambda + (0..n_e).fold(T::zero(), |acc, e| acc + lgrad[e * k + j] * d[e]))
            .collect();
        let pg_max = (0..n_a).fold(T::zero(), |m, a| {
            m.max(if b[a] > T::zero() { grad[a].abs() } else { (-grad[a]).max(T::zero()) })
        });
        if pg_max <= tol {
            break;
        }
        let free: Vec<usize> = (0..n_a).filter(|&a| b[a] > T::zero() || grad[a] < T::zero()).collect();
        let nf = free.len();

        let mut h = vec![T::zero(); nf * nf];
        for e in 0..n_e {
            if free.iter().all(|&a| dirs[a][e] == T::zero()) {
                continue;
            }
            loss.entry_hessian(e, &x[e * k..(e + 1) * k], &mut hess_e);
            for (r, &a) in free.iter().enumerate() {
                let da = dirs[a][e];
                if da == T::zero() {
                    continue;
                }
                for (c, &a2) in free.iter().enumerate().skip(r) {
                    let dc = dirs[a2][e];
                    h[r * nf + c] = h[r * nf + c] + da * dc * hess_e[class[a] * k + class[a2]];
                }
            }
        }
        for r in 0..nf {
            for c in 0..r {
                h[r * nf + c] = h[c * nf + r];
            }
        }
        let neg_grad: Vec<T> = free.iter().map(|&a| -grad[a]).collect();
        let (mut step, newton_ok) = match damped_newton_step(&h, &neg_grad, nf) {
            Some(s) if s.iter().zip(&free).map(|(&v, &a)| v * grad[a]).sum::<T>() < T::zero() => (s, true),
            _ => (neg_grad.clone(), false),
        };
        if !newton_ok {
            step = neg_grad;
        }

        let mut t = T::one();
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let mut b_new = b.clone();
            for (s, &a) in step.iter().zip(&free) {
                b_new[a] = (b[a] + t * *s).max(T::zero());
            }
            let x_new = shifted(&b_new);
            let f_new = value(&x_new, &b_new);
            let decrease: T = (0..n_a).map(|a| grad[a] * (b_new[a] - b[a])).sum();
            // full Newton steps whose change is lost in rounding are kept so
            // the gradient can still be driven down near the optimum
            let within_noise = newton_ok && t == T::one() && f_new <= f + noise * f.abs();
            if f_new <= f + armijo * decrease || within_noise {
                accepted = Some((b_new, x_new, f_new));
                break;
            }
            t = t * T::lit(0.5);
        }
        match accepted {
            Some((b_new, x_new, f_new)) => {
                let moved = b_new != b;
                b = b_new;
                x = x_new;
                f = f_new;
                if !moved {
                    break;
                }
            }
            None => break,
        }
    }
    b
}

/// Solves `(H + μI) s = r`, starting from `μ = 0` and raising the shift until
/// the factorization succeeds. `None` if even a large shift fails.
fn damped_newton_step<T: Scalar>(h: &[T], r: &[T], n: usize) -> Option<Vec<T>> {
    let trace = (0..n).fold(T::zero(), |acc, i| acc + h[i * n + i].abs());
    let mut shift = T::zero();
    for _ in 0..8 {
        let mut a = h.to_vec();
        for i in 0..n {
            a[i * n + i] = a[i * n + i] + shift;
        }
        let mut s = r.to_vec();
        if solve_spd(&mut a, &mut s, n) {
            return Some(s);
        }
        shift = if shift == T::zero() {
            (trace / T::from_usize_lossy(n.max(1))).max(T::min_positive_value()) * T::lit(1e-10)
        } else {
            shift * T::lit(100.0)
        };
    }
    None
}

/// Solves `A x = b` in place for a small symmetric positive definite `A`
/// (row-major, `n × n`) by Cholesky. Returns false if `A` is not numerically SPD.
pub(crate) fn solve_spd<T: Scalar>(a: &mut [T], b: &mut [T], n: usize) -> bool {
    let scale = (0..n).fold(T::zero(), |m, i| m.max(a[i * n + i].abs()));
    if !(scale > T::zero()) {
        return false;
    }
    let floor = scale * T::epsilon() * T::lit(16.0);
    for j in 0..n {
        let mut d = a[j * n + j];
        for p in 0..j {
            d = d - a[j * n + p] * a[j * n + p];
        }
        if !(d > floor) {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for p in 0..j {
                s = s - a[i * n + p] * a[j * n + p];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s = s - a[i * n + p] * b[p];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in (i + 1)..n {
            s = s - a[p * n + i] * b[p];
        }
        b[i] = s / a[i * n + i];
    }
    true
}
