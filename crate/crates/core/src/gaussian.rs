//! Gaussian completion baseline: squared-loss nuclear-norm completion solved by
//! the same lifted solver, a residual variance estimate, and class
//! probabilities from normal CDF mass between neighbouring label levels.

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::model::{Atom, FitConfig, ObservationSet, ProbabilityField};
use crate::objective::{group_entries, predictions, SmoothLoss};
use crate::scalar::Scalar;
use crate::solver::{check_reference_size, lifted_objective, reference_solve, solve_lifted, FitReport};
use crate::solver::{REFERENCE_MAX_ITERS, REFERENCE_TOL};

/// Smallest residual standard deviation a fitted model reports.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Real value assigned to each label (`levels[j - 1]` for label `j`).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEncoding<T> {
    levels: Vec<T>,
}

impl<T: Scalar> LabelEncoding<T> {
    pub fn new(levels: Vec<T>) -> Result<Self> {
        if levels.len() < 2 {
            return Err(FamError::InvalidArgument("need at least two label levels".into()));
        }
        if levels.iter().any(|l| !l.is_finite()) {
            return Err(FamError::InvalidArgument("label levels must be finite".into()));
        }
        for (i, a) in levels.iter().enumerate() {
            if levels[i + 1..].iter().any(|b| b == a) {
                return Err(FamError::InvalidArgument(format!("duplicate label level {a}")));
            }
        }
        Ok(Self { levels })
    }

    /// Label `j` encoded as the real number `j`.
    pub fn identity(classes: usize) -> Self {
        Self {
            levels: (1..=classes).map(T::from_usize_lossy).collect(),
        }
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn value(&self, label: u32) -> T {
        self.levels[label as usize - 1]
    }
}

/// Squared loss `(1/2n) Σ_i (y_i − X_{ω_i})²` aggregated per entry.
#[derive(Debug, Clone)]
pub struct SquaredLoss<T> {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize)>,
    count: Vec<T>,
    sum_y: Vec<T>,
    sum_y2: Vec<T>,
    inv_n: T,
    max_count: T,
}

impl<T: Scalar> SquaredLoss<T> {
    pub fn new(obs: &ObservationSet, encoding: &LabelEncoding<T>) -> Result<Self> {
        obs.require_nonempty()?;
        if encoding.levels.len() != obs.classes() {
            return Err(FamError::DimensionMismatch(format!(
                "{} label levels for {} classes",
                encoding.levels.len(),
                obs.classes()
            )));
        }
        let (entries, which) = group_entries(obs);
        let mut count = vec![T::zero(); entries.len()];
        let mut sum_y = vec![T::zero(); entries.len()];
        let mut sum_y2 = vec![T::zero(); entries.len()];
        for (s, &e) in obs.samples().iter().zip(&which) {
            let y = encoding.value(s.label);
            count[e] = count[e] + T::one();
            sum_y[e] = sum_y[e] + y;
            sum_y2[e] = sum_y2[e] + y * y;
        }
        let max_count = count.iter().fold(T::zero(), |m, &c| m.max(c));
        Ok(Self {
            rows: obs.rows(),
            cols: obs.cols(),
            entries,
            count,
            sum_y,
            sum_y2,
            inv_n: T::one() / T::from_usize_lossy(obs.len()),
            max_count,
        })
    }

    /// Mean squared training residual `(1/n) Σ_i (y_i − X_{ω_i})²`.
    pub fn mean_squared_residual(&self, preds: &[T]) -> T {
        let two = T::lit(2.0);
        (self.value(preds) * two).max(T::zero())
    }
}

impl<T: Scalar> SmoothLoss<T> for SquaredLoss<T> {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn dim(&self) -> usize {
        1
    }

    fn entries(&self) -> &[(usize, usize)] {
        &self.entries
    }

    fn value(&self, preds: &[T]) -> T {
        let two = T::lit(2.0);
        let mut acc = T::zero();
        for e in 0..self.entries.len() {
            let x = preds[e];
            acc = acc + self.count[e] * x * x - two * x * self.sum_y[e] + self.sum_y2[e];
        }
        acc * self.inv_n * T::lit(0.5)
    }

    fn gradient(&self, preds: &[T], grad: &mut [T]) {
        for e in 0..self.entries.len() {
            grad[e] = (self.count[e] * preds[e] - self.sum_y[e]) * self.inv_n;
        }
    }

    fn entry_hessian(&self, e: usize, _pred: &[T], out: &mut [T]) {
        out[0] = self.count[e] * self.inv_n;
    }

    fn curvature_bound(&self) -> T {
        self.max_count * self.inv_n
    }
}

/// Fitted Gaussian completion model: mean matrix `X̂ᴺ` as atoms, residual
/// standard deviation `σ̂`, and the label levels used for fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel<T> {
    rows: usize,
    cols: usize,
    levels: Vec<T>,
    atoms: Vec<Atom<T>>,
    sigma_hat: T,
}

impl<T: Scalar> GaussianModel<T> {
    pub fn new(rows: usize, cols: usize, encoding: LabelEncoding<T>, atoms: Vec<Atom<T>>, sigma_hat: T) -> Result<Self> {
        if !(sigma_hat > T::zero()) || !sigma_hat.is_finite() {
            return Err(FamError::InvalidArgument(format!("sigma_hat must be positive, got {sigma_hat}")));
        }
        if atoms.iter().any(|a| a.left.len() != rows || a.right.len() != cols) {
            return Err(FamError::DimensionMismatch("atom shape differs from model shape".into()));
        }
        Ok(Self {
            rows,
            cols,
            levels: encoding.levels,
            atoms,
            sigma_hat,
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
        self.levels.len()
    }

    pub fn levels(&self) -> &[T] {
        &self.levels
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    pub fn sigma_hat(&self) -> T {
        self.sigma_hat
    }

    pub fn l1_mass(&self) -> T {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    #[inline]
    pub(crate) fn mean_at(&self, row: usize, col: usize) -> T {
        self.atoms.iter().map(|a| a.weight * a.basis_at(row, col)).sum()
    }

    pub fn mean(&self, row: usize, col: usize) -> Result<T> {
        if row >= self.rows || col >= self.cols {
            return Err(FamError::IndexOutOfBounds {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(self.mean_at(row, col))
    }

    pub fn densify(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for a in &self.atoms {
            m.add_rank_one(a.weight, &a.left, &a.right);
        }
        m
    }

    pub fn probability_field(&self) -> ProbabilityField<T> {
        let binning = Binning::new(&self.levels);
        let p = self.classes();
        let mut probs = Vec::with_capacity(self.rows * self.cols * p);
        let mut buf = vec![T::zero(); p];
        for r in 0..self.rows {
            for c in 0..self.cols {
                binning.probs(self.mean_at(r, c), self.sigma_hat, &mut buf);
                probs.extend_from_slice(&buf);
            }
        }
        ProbabilityField::new(self.rows, self.cols, p, probs).expect("binned normal mass is a distribution")
    }
}

/// Label bins on the real line: label `j` owns the interval between the
/// midpoints to its neighbouring levels (unbounded at the extremes).
struct Binning<T> {
    /// per label, (lower, upper) bound; `None` stands for ∓∞
    bounds: Vec<(Option<T>, Option<T>)>,
}

impl<T: Scalar> Binning<T> {
    fn new(levels: &[T]) -> Self {
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| levels[a].partial_cmp(&levels[b]).expect("finite levels"));
        let half = T::lit(0.5);
        let mut bounds = vec![(None, None); levels.len()];
        for (pos, &label) in order.iter().enumerate() {
            let lower = (pos > 0).then(|| (levels[order[pos - 1]] + levels[label]) * half);
            let upper = (pos + 1 < order.len()).then(|| (levels[label] + levels[order[pos + 1]]) * half);
            bounds[label] = (lower, upper);
        }
        Self { bounds }
    }

    fn probs(&self, mean: T, sigma: T, out: &mut [T]) {
        for (o, &(lo, hi)) in out.iter_mut().zip(&self.bounds) {
            let zl = lo.map(|b| ((b - mean) / sigma).as_f64());
            let zh = hi.map(|b| ((b - mean) / sigma).as_f64());
            *o = T::lit(normal_mass(zl, zh));
        }
    }
}

/// `P(lo < Z ≤ hi)` for standard normal `Z`, using whichever tail keeps precision.
fn normal_mass(lo: Option<f64>, hi: Option<f64>) -> f64 {
    let lower_tail = |z: f64| 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2);
    let upper_tail = |z: f64| 0.5 * libm::erfc(z / std::f64::consts::SQRT_2);
    match (lo, hi) {
        (None, None) => 1.0,
        (None, Some(h)) => lower_tail(h),
        (Some(l), None) => upper_tail(l),
        (Some(l), Some(h)) => {
            if l >= 0.0 {
                (upper_tail(l) - upper_tail(h)).max(0.0)
            } else {
                (lower_tail(h) - lower_tail(l)).max(0.0)
            }
        }
    }
}

/// Class probabilities at `pairs` under the fitted Gaussian model.
pub fn gaussian_class_probs<T: Scalar>(model: &GaussianModel<T>, pairs: &[(usize, usize)]) -> Result<Vec<Vec<T>>> {
    let binning = Binning::new(&model.levels);
    pairs
        .iter()
        .map(|&(r, c)| {
            let mean = model.mean(r, c)?;
            let mut out = vec![T::zero(); model.classes()];
            binning.probs(mean, model.sigma_hat, &mut out);
            Ok(out)
        })
        .collect()
}

/// Fits the Gaussian baseline with labels encoded as `j ↦ j`.
pub fn fit_gaussian<T: Scalar>(obs: &ObservationSet, cfg: &FitConfig<T>) -> Result<(GaussianModel<T>, FitReport<T>)> {
    fit_gaussian_encoded(obs, &LabelEncoding::identity(obs.classes()), cfg)
}

pub fn fit_gaussian_encoded<T: Scalar>(
    obs: &ObservationSet,
    encoding: &LabelEncoding<T>,
    cfg: &FitConfig<T>,
) -> Result<(GaussianModel<T>, FitReport<T>)> {
    fit_gaussian_inner(obs, encoding, cfg, Vec::new())
}

/// Same as [`fit_gaussian_encoded`] but starting from the mean matrix of `initial`.
pub fn fit_gaussian_from<T: Scalar>(
    obs: &ObservationSet,
    encoding: &LabelEncoding<T>,
    cfg: &FitConfig<T>,
    initial: &GaussianModel<T>,
) -> Result<(GaussianModel<T>, FitReport<T>)> {
    if initial.rows != obs.rows() || initial.cols != obs.cols() {
        return Err(FamError::DimensionMismatch("initial model shape differs from observations".into()));
    }
    fit_gaussian_inner(obs, encoding, cfg, initial.atoms.clone())
}

fn fit_gaussian_inner<T: Scalar>(
    obs: &ObservationSet,
    encoding: &LabelEncoding<T>,
    cfg: &FitConfig<T>,
    initial: Vec<Atom<T>>,
) -> Result<(GaussianModel<T>, FitReport<T>)> {
    cfg.validate()?;
    let loss = SquaredLoss::new(obs, encoding)?;
    let (mut atoms, report) = solve_lifted(&loss, cfg, vec![initial]);
    let atoms = atoms.pop().unwrap_or_default();
    let preds = predictions(std::slice::from_ref(&atoms), loss.entries());
    let sigma = loss.mean_squared_residual(&preds).sqrt().max(T::lit(SIGMA_FLOOR));
    let model = GaussianModel::new(obs.rows(), obs.cols(), encoding.clone(), atoms, sigma)?;
    Ok((model, report))
}

/// `λ ‖θ‖₁ + (1/2n) Σ (y_i − X_{ω_i})²` for a fitted model.
pub fn gaussian_objective<T: Scalar>(model: &GaussianModel<T>, obs: &ObservationSet, lambda: T) -> Result<T> {
    let loss = SquaredLoss::new(obs, &LabelEncoding::new(model.levels.clone())?)?;
    let atoms = [model.atoms.clone()];
    let preds = predictions(&atoms, loss.entries());
    Ok(lifted_objective(&loss, lambda, &atoms, &preds))
}

/// Dense proximal-gradient oracle for the squared-loss problem; returns the
/// mean matrix.
pub fn reference_fit_gaussian<T: Scalar>(
    obs: &ObservationSet,
    encoding: &LabelEncoding<T>,
    cfg: &FitConfig<T>,
) -> Result<(DenseMatrix<T>, FitReport<T>)> {
    cfg.validate()?;
    check_reference_size(obs)?;
    let loss = SquaredLoss::new(obs, encoding)?;
    let (mut mats, report) = reference_solve(&loss, cfg.lambda, REFERENCE_MAX_ITERS, T::lit(REFERENCE_TOL));
    Ok((mats.pop().expect("one class"), report))
}

/// `λ ‖X‖_* + (1/2n) Σ (y_i − X_{ω_i})²` for a dense mean matrix.
pub fn gaussian_dense_objective<T: Scalar>(
    mean: &DenseMatrix<T>,
    obs: &ObservationSet,
    encoding: &LabelEncoding<T>,
    lambda: T,
) -> Result<T> {
    let loss = SquaredLoss::new(obs, encoding)?;
    let preds: Vec<T> = loss.entries().iter().map(|&(r, c)| mean.get(r, c)).collect();
    Ok(lambda * mean.nuclear_norm() + loss.value(&preds))
}
