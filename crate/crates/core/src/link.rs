//! Multinomial logit link, the associated negative log-likelihood and its
//! gradient, and the binary-link constants `M_γ`, `L_γ`, `K_γ`.

use crate::error::{FamError, Result};
use crate::model::{AtomicModel, ObservationSet};
use crate::objective::{group_entries, predictions, SmoothLoss};
use crate::scalar::Scalar;
use crate::svd::SparseMatrix;

/// Class probabilities `(f¹(x), …, f^{p-1}(x), 1 − Σ fʲ(x))` for `x ∈ R^{p-1}`.
pub fn logit_probs<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(FamError::InvalidArgument("NaN in logit input".into()));
    }
    let mut out = vec![T::zero(); x.len() + 1];
    logit_probs_into(x, &mut out);
    Ok(out)
}

/// Unchecked variant writing into `out` (length `x.len() + 1`).
#[inline]
pub(crate) fn logit_probs_into<T: Scalar>(x: &[T], out: &mut [T]) {
    let k = x.len();
    let m = x.iter().fold(T::zero(), |m, &v| m.max(v));
    let mut s = T::zero();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        s = s + *o;
    }
    out[k] = (-m).exp();
    s = s + out[k];
    for o in out.iter_mut() {
        *o = *o / s;
    }
}

/// `log(1 + Σ exp(x_j))`, stabilized.
#[inline]
pub(crate) fn log_partition<T: Scalar>(x: &[T]) -> T {
    let m = x.iter().fold(T::zero(), |m, &v| m.max(v));
    let s = x.iter().fold((-m).exp(), |s, &v| s + (v - m).exp());
    m + s.ln()
}

/// Multinomial logit negative log-likelihood aggregated per distinct entry.
#[derive(Debug, Clone)]
pub struct MultinomialLoss<T> {
    rows: usize,
    cols: usize,
    classes: usize,
    entries: Vec<(usize, usize)>,
    /// `entries × classes` label counts.
    counts: Vec<T>,
    totals: Vec<T>,
    inv_n: T,
    max_total: T,
}

impl<T: Scalar> MultinomialLoss<T> {
    pub fn new(obs: &ObservationSet) -> Result<Self> {
        obs.require_nonempty()?;
        let p = obs.classes();
        let (entries, which) = group_entries(obs);
        let mut counts = vec![T::zero(); entries.len() * p];
        let mut totals = vec![T::zero(); entries.len()];
        for (s, &e) in obs.samples().iter().zip(&which) {
            let c = &mut counts[e * p + s.label as usize - 1];
            *c = *c + T::one();
            totals[e] = totals[e] + T::one();
        }
        let max_total = totals.iter().fold(T::zero(), |m, &t| m.max(t));
        Ok(Self {
            rows: obs.rows(),
            cols: obs.cols(),
            classes: p,
            entries,
            counts,
            totals,
            inv_n: T::one() / T::from_usize_lossy(obs.len()),
            max_total,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

impl<T: Scalar> SmoothLoss<T> for MultinomialLoss<T> {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn dim(&self) -> usize {
        self.classes - 1
    }

    fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    fn value(&self, preds: &[T]) -> T {
        let k = self.classes - 1;
        let mut acc = T::zero();
        for e in 0..self.entries.len() {
            let x = &preds[e * k..(e + 1) * k];
            let counts = &self.counts[e * self.classes..(e + 1) * self.classes];
            let mut term = self.totals[e] * log_partition(x);
            for (&c, &xj) in counts.iter().zip(x) {
                term = term - c * xj;
            }
            acc = acc + term;
        }
        acc * self.inv_n
    }

    fn gradient(&self, preds: &[T], grad: &mut [T]) {
        let k = self.classes - 1;
        let mut f = vec![T::zero(); self.classes];
        for e in 0..self.entries.len() {
            logit_probs_into(&preds[e * k..(e + 1) * k], &mut f);
            let counts = &self.counts[e * self.classes..];
            for j in 0..k {
                grad[e * k + j] = (self.totals[e] * f[j] - counts[j]) * self.inv_n;
            }
        }
    }

    fn entry_hessian(&self, e: usize, pred: &[T], out: &mut [T]) {
        let k = self.classes - 1;
        let mut f = vec![T::zero(); self.classes];
        logit_probs_into(pred, &mut f);
        let w = self.totals[e] * self.inv_n;
        for a in 0..k {
            for b in 0..k {
                let d = if a == b { f[a] } else { T::zero() };
                out[a * k + b] = w * (d - f[a] * f[b]);
            }
        }
    }

    fn curvature_bound(&self) -> T {
        // λ_max(diag(f) − ffᵀ) ≤ 1/2 for any probability vector f
        self.max_total * self.inv_n * T::lit(0.5)
    }
}

fn check_compatible<T: Scalar>(model: &AtomicModel<T>, obs: &ObservationSet) -> Result<()> {
    if model.rows() != obs.rows() || model.cols() != obs.cols() || model.classes() != obs.classes() {
        return Err(FamError::DimensionMismatch(format!(
            "model {}x{} with {} classes vs observations {}x{} with {} classes",
            model.rows(),
            model.cols(),
            model.classes(),
            obs.rows(),
            obs.cols(),
            obs.classes()
        )));
    }
    Ok(())
}

/// Normalized negative log-likelihood of `obs` under `model`, evaluated only
/// at observed entries.
pub fn negative_log_likelihood<T: Scalar>(model: &AtomicModel<T>, obs: &ObservationSet) -> Result<T> {
    check_compatible(model, obs)?;
    let loss = MultinomialLoss::new(obs)?;
    let preds = predictions(model.all_atoms(), loss.entries());
    Ok(loss.value(&preds))
}

/// Gradient of [`negative_log_likelihood`] with respect to each parameter
/// matrix; supported on the distinct observed entries.
pub fn sparse_gradient<T: Scalar>(model: &AtomicModel<T>, obs: &ObservationSet) -> Result<Vec<SparseMatrix<T>>> {
    check_compatible(model, obs)?;
    let loss = MultinomialLoss::new(obs)?;
    let preds = predictions(model.all_atoms(), loss.entries());
    let mut grad = vec![T::zero(); preds.len()];
    loss.gradient(&preds, &mut grad);
    Ok(crate::solver::gradient_matrices(&loss, &grad, T::one()))
}

/// Link-dependent constants of the binary logit over `|x| ≤ γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkConstants<T> {
    pub gamma: T,
    /// `sup 2|log f(x)|`
    pub m_gamma: T,
    /// `max(sup |f'|/f, sup |f'|/(1−f))`
    pub l_gamma: T,
    /// `inf f'² / (8 f (1−f))`
    pub k_gamma: T,
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Closed-form constants for the binary logit (`p = 2` only).
///
/// With `f' = f(1−f)` every supremum/infimum is attained at `|x| = γ`:
/// `M = 2 log(1 + e^γ)`, `L = f(γ)`, `K = f(γ)(1 − f(γ))/8`.
pub fn link_constants<T: Scalar>(gamma: T, classes: usize) -> Result<LinkConstants<T>> {
    if classes != 2 {
        return Err(FamError::Unsupported(format!(
            "link constants are defined for the binary model only, got {classes} classes"
        )));
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return Err(FamError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let f = sigmoid(gamma);
    let two = T::lit(2.0);
    Ok(LinkConstants {
        gamma,
        m_gamma: two * (gamma + (-gamma).exp().ln_1p()),
        l_gamma: f,
        k_gamma: f * (T::one() - f) / T::lit(8.0),
    })
}

/// The same constants by brute-force search over `points` equispaced values of
/// `[−γ, γ]` (endpoints included), straight from their definitions.
pub fn link_constants_by_grid<T: Scalar>(gamma: T, points: usize) -> Result<LinkConstants<T>> {
    if !(gamma > T::zero()) || points < 2 {
        return Err(FamError::InvalidArgument("need gamma > 0 and at least two grid points".into()));
    }
    let mut m = T::zero();
    let mut l = T::zero();
    let mut k = T::infinity();
    let step = (gamma + gamma) / T::from_usize_lossy(points - 1);
    for i in 0..points {
        let x = if i + 1 == points { gamma } else { -gamma + step * T::from_usize_lossy(i) };
        let f = sigmoid(x);
        let g = sigmoid(-x); // 1 − f without cancellation
        let df = f * g;
        m = m.max(T::lit(2.0) * f.ln().abs());
        l = l.max(df / f).max(df / g);
        k = k.min(df * df / (T::lit(8.0) * f * g));
    }
    Ok(LinkConstants {
        gamma,
        m_gamma: m,
        l_gamma: l,
        k_gamma: k,
    })
}
