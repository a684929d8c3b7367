//! Lifted coordinate gradient descent over nonnegative atomic measures, and a
//! dense proximal-gradient reference solver for desk-scale cross-checks.

mod correction;
mod lifted;
mod line_search;
mod reference;

use std::fmt;

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::link::MultinomialLoss;
use crate::model::{Atom, AtomicModel, FitConfig, ObservationSet};
use crate::objective::{predictions, SmoothLoss};
use crate::scalar::Scalar;
use crate::svd::SparseMatrix;

pub(crate) use lifted::solve_lifted;
pub(crate) use reference::{reference_solve, REFERENCE_MAX_ITERS, REFERENCE_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Both duality-gap tests of the outer loop passed.
    DualityGapMet,
    MaxIters,
    /// An outer step could not change the iterate.
    Stalled,
    /// Relative objective change fell below tolerance (reference solver only).
    ObjectiveConverged,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::DualityGapMet => "duality_gap_met",
            StopReason::MaxIters => "max_iters",
            StopReason::Stalled => "stalled",
            StopReason::ObjectiveConverged => "objective_converged",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T> {
    pub iterations: usize,
    /// Objective after each outer iteration; the first value is the initial objective.
    pub objective_trace: Vec<T>,
    /// Support size (or rank, for the reference solver) alongside `objective_trace`.
    pub atom_counts: Vec<usize>,
    pub stop_reason: StopReason,
    pub converged: bool,
    /// `λ + min_j ⟨∇Φ, uʲ(vʲ)ᵀ⟩` at the last oracle call.
    pub gap: T,
    /// `max |λ + ⟨∇Φ, u vᵀ⟩|` over the support at the last check (zero for an empty support).
    pub gap_max: T,
}

impl<T: Scalar> FitReport<T> {
    pub fn final_objective(&self) -> T {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// Sparse matrices `scale · ∇Φʲ` supported on the loss entries.
pub(crate) fn gradient_matrices<T: Scalar, L: SmoothLoss<T>>(loss: &L, grad: &[T], scale: T) -> Vec<SparseMatrix<T>> {
    let k = loss.dim();
    (0..k)
        .map(|j| {
            let entries = loss
                .entries()
                .iter()
                .enumerate()
                .map(|(e, &(r, c))| (r, c, scale * grad[e * k + j]))
                .collect();
            SparseMatrix::from_unique(loss.rows(), loss.cols(), entries)
        })
        .collect()
}

pub(crate) fn lifted_objective<T: Scalar, L: SmoothLoss<T>>(loss: &L, lambda: T, atoms: &[Vec<Atom<T>>], preds: &[T]) -> T {
    let mass: T = atoms.iter().flatten().map(|a| a.weight).sum();
    lambda * mass + loss.value(preds)
}

fn check_model(model: &AtomicModel<impl Scalar>, obs: &ObservationSet) -> Result<()> {
    if model.rows() != obs.rows() || model.cols() != obs.cols() || model.classes() != obs.classes() {
        return Err(FamError::DimensionMismatch(
            "model and observations disagree on shape or classes".into(),
        ));
    }
    Ok(())
}

/// Fits the nuclear-norm penalized multinomial logit estimator, starting from
/// the zero model.
pub fn fit<T: Scalar>(obs: &ObservationSet, cfg: &FitConfig<T>) -> Result<(AtomicModel<T>, FitReport<T>)> {
    cfg.validate()?;
    obs.require_nonempty()?;
    let loss = MultinomialLoss::new(obs)?;
    let (atoms, report) = solve_lifted(&loss, cfg, vec![Vec::new(); obs.classes() - 1]);
    let model = AtomicModel::from_atoms(obs.rows(), obs.cols(), obs.classes(), atoms)?;
    Ok((model, report))
}

/// Same as [`fit`] but starting from the atoms of `initial`, e.g. the solution
/// at a nearby `λ`.
pub fn fit_from<T: Scalar>(
    obs: &ObservationSet,
    cfg: &FitConfig<T>,
    initial: &AtomicModel<T>,
) -> Result<(AtomicModel<T>, FitReport<T>)> {
    cfg.validate()?;
    obs.require_nonempty()?;
    check_model(initial, obs)?;
    let loss = MultinomialLoss::new(obs)?;
    let (atoms, report) = solve_lifted(&loss, cfg, initial.clone().into_atoms());
    let model = AtomicModel::from_atoms(obs.rows(), obs.cols(), obs.classes(), atoms)?;
    Ok((model, report))
}

/// `λ ‖θ‖₁ + Φ(W_θ)` for the logit loss.
pub fn objective<T: Scalar>(model: &AtomicModel<T>, obs: &ObservationSet, lambda: T) -> Result<T> {
    check_model(model, obs)?;
    let loss = MultinomialLoss::new(obs)?;
    let preds = predictions(model.all_atoms(), loss.entries());
    Ok(lifted_objective(&loss, lambda, model.all_atoms(), &preds))
}

/// Adds one candidate atom per parameter class with the nonnegative weights
/// minimizing the objective along those directions. Zero-weight candidates are dropped.
pub fn atom_step<T: Scalar>(
    model: &AtomicModel<T>,
    obs: &ObservationSet,
    lambda: T,
    new_atoms: &[(Vec<T>, Vec<T>)],
) -> Result<AtomicModel<T>> {
    check_model(model, obs)?;
    if new_atoms.len() != model.param_classes() {
        return Err(FamError::DimensionMismatch(format!(
            "{} candidate atoms for {} parameter classes",
            new_atoms.len(),
            model.param_classes()
        )));
    }
    let candidates = new_atoms
        .iter()
        .map(|(u, v)| Atom::new(T::one(), u.clone(), v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let cfg = FitConfig::new(lambda);
    let loss = MultinomialLoss::new(obs)?;
    let mut atoms = model.clone().into_atoms();
    let preds = predictions(&atoms, loss.entries());
    let dirs: Vec<Option<Vec<T>>> = candidates
        .iter()
        .map(|a| Some(crate::objective::atom_column(a, loss.entries())))
        .collect();
    let beta = line_search::line_search(&loss, lambda, &preds, &dirs, cfg.line_search_tol, cfg.line_search_max_iter);
    for ((list, mut atom), b) in atoms.iter_mut().zip(candidates).zip(beta) {
        if b > T::zero() {
            atom.weight = b;
            list.push(atom);
        }
    }
    AtomicModel::from_atoms(model.rows(), model.cols(), model.classes(), atoms)
}

/// Re-optimizes all atom weights over the current support, merging duplicated
/// atoms first and pruning weights below `1e-12` afterwards.
pub fn correction_step<T: Scalar>(model: &AtomicModel<T>, obs: &ObservationSet, lambda: T) -> Result<AtomicModel<T>> {
    check_model(model, obs)?;
    let cfg = FitConfig::new(lambda);
    cfg.validate()?;
    let loss = MultinomialLoss::new(obs)?;
    let mut atoms = model.clone().into_atoms();
    correction::merge_duplicates(&mut atoms);
    correction::correct(&loss, lambda, &mut atoms, cfg.correction_tol, cfg.correction_max_iter, T::zero());
    correction::prune(&mut atoms);
    AtomicModel::from_atoms(model.rows(), model.cols(), model.classes(), atoms)
}

/// Rewrites each class as its SVD atoms so that the l1 mass equals the sum of
/// nuclear norms. Materializes dense matrices; desk scale only.
pub fn canonicalize<T: Scalar>(model: &AtomicModel<T>) -> Result<AtomicModel<T>> {
    let tiny = T::epsilon() * T::lit(16.0);
    let atoms = model
        .densify()
        .iter()
        .map(|m| {
            let svd = m.svd();
            let s1 = svd.s.first().copied().unwrap_or_else(T::zero);
            (0..svd.s.len())
                .filter(|&k| svd.s[k] > tiny * s1 && svd.s[k] > T::zero())
                .map(|k| Atom::from_vectors(svd.s[k], svd.u[k].clone(), svd.v[k].clone()))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    AtomicModel::from_atoms(model.rows(), model.cols(), model.classes(), atoms)
}

/// Largest cells count accepted by the dense reference solvers.
pub const REFERENCE_MAX_CELLS: usize = 10_000;

pub(crate) fn check_reference_size(obs: &ObservationSet) -> Result<()> {
    if obs.rows() * obs.cols() > REFERENCE_MAX_CELLS {
        return Err(FamError::InvalidArgument(format!(
            "reference solver limited to {REFERENCE_MAX_CELLS} cells, got {}x{}",
            obs.rows(),
            obs.cols()
        )));
    }
    Ok(())
}

/// Dense proximal-gradient solution of `λ Σ_j ‖Xʲ‖_* + Φ(X)` for the logit loss.
pub fn reference_fit<T: Scalar>(obs: &ObservationSet, cfg: &FitConfig<T>) -> Result<(Vec<DenseMatrix<T>>, FitReport<T>)> {
    cfg.validate()?;
    obs.require_nonempty()?;
    check_reference_size(obs)?;
    let loss = MultinomialLoss::new(obs)?;
    Ok(reference_solve(&loss, cfg.lambda, REFERENCE_MAX_ITERS, T::lit(REFERENCE_TOL)))
}

/// `λ Σ_j ‖Xʲ‖_* + Φ(X)` for dense logit parameters.
pub fn dense_objective<T: Scalar>(params: &[DenseMatrix<T>], obs: &ObservationSet, lambda: T) -> Result<T> {
    if params.len() + 1 != obs.classes() || params.iter().any(|m| m.rows() != obs.rows() || m.cols() != obs.cols()) {
        return Err(FamError::DimensionMismatch("parameters do not match observations".into()));
    }
    let loss = MultinomialLoss::new(obs)?;
    Ok(reference::dense_objective_with(&loss, params, lambda))
}
