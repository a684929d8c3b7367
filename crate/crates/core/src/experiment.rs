//! Regularization grids, k-fold cross-validation, and the simulation pipeline
//! behind the reproduction experiments.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::gaussian::{fit_gaussian_encoded, fit_gaussian_from, GaussianModel, LabelEncoding, SquaredLoss};
use crate::io::write_atomic;
use crate::link::{logit_probs, MultinomialLoss};
use crate::metrics::{hellinger_sq, kl_divergence, prediction_error, PROB_CLAMP};
use crate::model::{AtomicModel, FitConfig, ObservationSet, ProbabilityField};
use crate::objective::SmoothLoss;
use crate::scalar::Scalar;
use crate::simulate::{make_ground_truth, sample_observations, SamplingDistribution};
use crate::solver::{fit, fit_from, gradient_matrices, FitReport};
use crate::svd::top_singular_pair;

/// Estimator family.
#[derive(Debug, Clone, PartialEq)]
pub enum Method<T> {
    Logit,
    Gaussian(LabelEncoding<T>),
}

impl<T: Scalar> Method<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Logit => "logit",
            Method::Gaussian(_) => "gaussian",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel<T> {
    Logit(AtomicModel<T>),
    Gaussian(GaussianModel<T>),
}

impl<T: Scalar> FittedModel<T> {
    pub fn probability_field(&self) -> ProbabilityField<T> {
        match self {
            FittedModel::Logit(m) => m.probability_field(),
            FittedModel::Gaussian(m) => m.probability_field(),
        }
    }

    pub fn atom_count(&self) -> usize {
        match self {
            FittedModel::Logit(m) => m.atom_count(),
            FittedModel::Gaussian(m) => m.atoms().len(),
        }
    }
}

pub fn fit_method<T: Scalar>(
    obs: &ObservationSet,
    method: &Method<T>,
    cfg: &FitConfig<T>,
) -> Result<(FittedModel<T>, FitReport<T>)> {
    match method {
        Method::Logit => fit(obs, cfg).map(|(m, r)| (FittedModel::Logit(m), r)),
        Method::Gaussian(enc) => fit_gaussian_encoded(obs, enc, cfg).map(|(m, r)| (FittedModel::Gaussian(m), r)),
    }
}

/// Fits `method`, warm-started from `initial` when given.
pub fn fit_method_from<T: Scalar>(
    obs: &ObservationSet,
    method: &Method<T>,
    cfg: &FitConfig<T>,
    initial: Option<&FittedModel<T>>,
) -> Result<(FittedModel<T>, FitReport<T>)> {
    match (method, initial) {
        (_, None) => fit_method(obs, method, cfg),
        (Method::Logit, Some(FittedModel::Logit(m))) => fit_from(obs, cfg, m).map(|(m, r)| (FittedModel::Logit(m), r)),
        (Method::Gaussian(enc), Some(FittedModel::Gaussian(m))) => {
            fit_gaussian_from(obs, enc, cfg, m).map(|(m, r)| (FittedModel::Gaussian(m), r))
        }
        _ => Err(FamError::InvalidArgument("initial model does not match the method".into())),
    }
}

fn zero_gradient_norm<T: Scalar, L: SmoothLoss<T>>(loss: &L, cfg: &FitConfig<T>) -> T {
    let preds = vec![T::zero(); loss.n_entries() * loss.dim()];
    let mut grad = preds.clone();
    loss.gradient(&preds, &mut grad);
    gradient_matrices(loss, &grad, T::one())
        .iter()
        .enumerate()
        .filter_map(|(j, g)| top_singular_pair(g, cfg.seed.wrapping_add(j as u64), cfg.svd_tol, cfg.svd_max_iter).ok())
        .fold(T::zero(), |m, t| m.max(t.sigma))
}

/// Largest per-class spectral norm of the loss gradient at the zero model:
/// the smallest `λ` whose solution is zero.
pub fn lambda_max<T: Scalar>(obs: &ObservationSet, method: &Method<T>, cfg: &FitConfig<T>) -> Result<T> {
    match method {
        Method::Logit => Ok(zero_gradient_norm(&MultinomialLoss::new(obs)?, cfg)),
        Method::Gaussian(enc) => Ok(zero_gradient_norm(&SquaredLoss::new(obs, enc)?, cfg)),
    }
}

/// Number of grid points for `n` samples: `⌈0.8 ln n⌉`, at least one.
pub fn grid_size(n: usize) -> usize {
    ((0.8 * (n.max(1) as f64).ln()).ceil() as usize).max(1)
}

/// Geometric grid from `lambda_max` down to `lambda_max / 1000` with `grid_size(n)` points.
pub fn lambda_grid<T: Scalar>(lambda_max: T, n: usize) -> Vec<T> {
    let k = grid_size(n);
    if k == 1 {
        return vec![lambda_max];
    }
    let ratio = T::lit(1e-3);
    (0..k)
        .map(|i| lambda_max * ratio.powf(T::from_usize_lossy(i) / T::from_usize_lossy(k - 1)))
        .collect()
}

/// Seeded partition of `0..n` into `k` folds whose sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > n {
        return Err(FamError::InvalidArgument(format!("cannot split {n} samples into {k} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (i, s) in idx.into_iter().enumerate() {
        folds[i % k].push(s);
    }
    Ok(folds)
}

/// Mean `−log P(label)` over `obs`, probabilities floored at the metric clamp.
pub fn validation_loss<T: Scalar>(model: &FittedModel<T>, obs: &ObservationSet) -> Result<T> {
    obs.require_nonempty()?;
    let pairs: Vec<(usize, usize)> = obs.samples().iter().map(|s| (s.row, s.col)).collect();
    let probs = match model {
        FittedModel::Logit(m) => m
            .evaluate_entries(&pairs)?
            .iter()
            .map(|x| logit_probs(x))
            .collect::<Result<Vec<_>>>()?,
        FittedModel::Gaussian(m) => crate::gaussian::gaussian_class_probs(m, &pairs)?,
    };
    let floor = T::lit(PROB_CLAMP);
    let total: T = obs
        .samples()
        .iter()
        .zip(&probs)
        .map(|(s, p)| -p[s.label as usize - 1].max(floor).ln())
        .sum();
    Ok(total / T::from_usize_lossy(obs.len()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow<T> {
    pub lambda: T,
    pub mean_val_loss: T,
    pub sd: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult<T> {
    pub rows: Vec<CvRow<T>>,
    pub best_lambda: T,
}

impl<T: Scalar> CvResult<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,mean_val_loss,sd\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.lambda, r.mean_val_loss, r.sd));
        }
        out
    }
}

/// k-fold cross-validation over `grid`; every (fold, λ) fit uses `base` with
/// its `lambda` replaced. Picks the grid value with the smallest mean
/// validation loss (the larger λ on ties).
pub fn cross_validate<T: Scalar>(
    obs: &ObservationSet,
    method: &Method<T>,
    grid: &[T],
    folds: usize,
    base: &FitConfig<T>,
) -> Result<CvResult<T>> {
    if grid.is_empty() {
        return Err(FamError::InvalidArgument("empty lambda grid".into()));
    }
    let parts = kfold(obs.len(), folds, base.seed)?;
    let splits: Vec<(ObservationSet, ObservationSet)> = (0..folds)
        .map(|f| {
            let train: Vec<usize> = parts
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            (obs.select(&train), obs.select(&parts[f]))
        })
        .collect();
    // each fold walks the grid from large to small λ, warm-starting every fit
    // from the previous solution
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| grid[b].partial_cmp(&grid[a]).unwrap_or(std::cmp::Ordering::Equal));
    let per_fold: Vec<Vec<T>> = splits
        .par_iter()
        .map(|(train, val)| {
            let mut out = vec![T::zero(); grid.len()];
            let mut prev: Option<FittedModel<T>> = None;
            for &l in &order {
                let mut cfg = base.clone();
                cfg.lambda = grid[l];
                let (model, _) = fit_method_from(train, method, &cfg, prev.as_ref())?;
                out[l] = validation_loss(&model, val)?;
                prev = Some(model);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let losses: Vec<T> = (0..grid.len())
        .flat_map(|l| per_fold.iter().map(move |f| f[l]))
        .collect();

    let k = T::from_usize_lossy(folds);
    let rows: Vec<CvRow<T>> = grid
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let vals = &losses[l * folds..(l + 1) * folds];
            let mean = vals.iter().copied().sum::<T>() / k;
            let var = vals.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / (k - T::one());
            CvRow {
                lambda,
                mean_val_loss: mean,
                sd: var.sqrt(),
            }
        })
        .collect();
    let mut best = 0;
    for (i, r) in rows.iter().enumerate() {
        let b = &rows[best];
        if r.mean_val_loss < b.mean_val_loss || (r.mean_val_loss == b.mean_val_loss && r.lambda > b.lambda) {
            best = i;
        }
    }
    Ok(CvResult {
        best_lambda: rows[best].lambda,
        rows,
    })
}

/// Builds the default grid for `obs` and cross-validates over it.
pub fn cross_validate_default<T: Scalar>(
    obs: &ObservationSet,
    method: &Method<T>,
    folds: usize,
    base: &FitConfig<T>,
) -> Result<CvResult<T>> {
    let lmax = lambda_max(obs, method, base)?;
    if !(lmax > T::zero()) {
        return Err(FamError::InvalidArgument("zero gradient at the zero model".into()));
    }
    cross_validate(obs, method, &lambda_grid(lmax, obs.len()), folds, base)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Fig1,
    Table2,
    Table3,
}

impl std::str::FromStr for ExperimentKind {
    type Err = FamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Self::Fig1),
            "table2" => Ok(Self::Table2),
            "table3" => Ok(Self::Table3),
            other => Err(FamError::InvalidArgument(format!("unknown experiment '{other}'"))),
        }
    }
}

pub const BASE_ROWS: usize = 900;
pub const BASE_COLS: usize = 1350;
pub const TABLE_N: [usize; 4] = [10_000, 50_000, 100_000, 500_000];
pub const FIG1_FRACTIONS: [f64; 4] = [0.05, 0.1, 0.2, 0.4];

/// `x · scale` rounded to the nearest integer, halves rounding down, at least 1.
pub fn scale_dim(x: usize, scale: f64) -> usize {
    ((x as f64 * scale - 0.5 - 1e-9).ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproduceConfig {
    pub kind: ExperimentKind,
    pub scale: f64,
    pub seeds: usize,
    pub gamma_scale: f64,
    pub rank: usize,
    /// Training sizes; `None` uses the experiment defaults at this scale.
    pub n_values: Option<Vec<usize>>,
    /// Class counts; `None` uses the experiment defaults.
    pub classes: Option<Vec<usize>>,
    pub folds: usize,
    pub epsilon: f64,
    pub max_iters: usize,
    pub test_size: usize,
}

impl ReproduceConfig {
    pub fn new(kind: ExperimentKind, scale: f64) -> Self {
        Self {
            kind,
            scale,
            seeds: 5,
            gamma_scale: 1.0,
            rank: 5,
            n_values: None,
            classes: None,
            folds: 5,
            epsilon: 1e-4,
            max_iters: 500,
            test_size: 20_000,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (scale_dim(BASE_ROWS, self.scale), scale_dim(BASE_COLS, self.scale))
    }

    pub fn class_list(&self) -> Vec<usize> {
        self.classes.clone().unwrap_or_else(|| match self.kind {
            ExperimentKind::Fig1 => vec![2, 5],
            ExperimentKind::Table2 => vec![2],
            ExperimentKind::Table3 => vec![5],
        })
    }

    pub fn n_list(&self) -> Vec<usize> {
        self.n_values.clone().unwrap_or_else(|| {
            let (m1, m2) = self.dims();
            match self.kind {
                ExperimentKind::Fig1 => FIG1_FRACTIONS
                    .iter()
                    .map(|f| ((f * (m1 * m2) as f64).round() as usize).max(1))
                    .collect(),
                _ => TABLE_N.iter().map(|&n| scale_dim(n, self.scale)).collect(),
            }
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || self.seeds == 0 || self.test_size == 0 {
            return Err(FamError::Config("scale, seeds and test size must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of one (method, classes, n, seed) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub method: &'static str,
    pub classes: usize,
    pub n: usize,
    pub seed: u64,
    pub lambda: f64,
    pub kl: f64,
    pub hellinger_sq: f64,
    pub prediction_error: f64,
    pub iterations: usize,
    pub atoms: usize,
}

/// Simulated truth, training sample and independent test sample for one cell.
pub struct SimulatedData {
    pub truth: Vec<DenseMatrix<f64>>,
    pub train: ObservationSet,
    pub test: ObservationSet,
}

pub fn simulate_cell(cfg: &ReproduceConfig, classes: usize, n: usize, seed: u64) -> Result<SimulatedData> {
    let (m1, m2) = cfg.dims();
    let truth = make_ground_truth(m1, m2, classes, cfg.rank, cfg.gamma_scale, seed.wrapping_mul(7919) + classes as u64)?;
    let dist = SamplingDistribution::uniform(m1, m2)?;
    let stream = seed.wrapping_mul(1_000_003).wrapping_add((classes as u64) << 40);
    let train = sample_observations(&truth, &dist, n, stream.wrapping_add(n as u64))?;
    let test = sample_observations(&truth, &dist, cfg.test_size, stream.wrapping_sub(1))?;
    Ok(SimulatedData { truth, train, test })
}

/// Cross-validates, refits on the whole training sample and evaluates.
pub fn run_cell(cfg: &ReproduceConfig, method: &Method<f64>, data: &SimulatedData, seed: u64) -> Result<CellResult> {
    let base = FitConfig::new(1.0)
        .with_epsilon(cfg.epsilon)
        .with_max_iters(cfg.max_iters)
        .with_seed(seed);
    let cv = cross_validate_default(&data.train, method, cfg.folds, &base)?;
    let mut fit_cfg = base.clone();
    fit_cfg.lambda = cv.best_lambda;
    let (model, report) = fit_method(&data.train, method, &fit_cfg)?;
    let est = model.probability_field();
    let truth = ProbabilityField::from_params(&data.truth)?;
    Ok(CellResult {
        method: method.name(),
        classes: data.train.classes(),
        n: data.train.len(),
        seed,
        lambda: cv.best_lambda,
        kl: kl_divergence(&truth, &est)?,
        hellinger_sq: hellinger_sq(&truth, &est)?,
        prediction_error: prediction_error(&est, &data.test)?,
        iterations: report.iterations,
        atoms: model.atom_count(),
    })
}

/// Every (method, classes, n, seed) cell, in a fixed order.
pub fn run_reproduce(cfg: &ReproduceConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &p in &cfg.class_list() {
        for &n in &cfg.n_list() {
            for s in 0..cfg.seeds as u64 {
                cells.push((p, n, s));
            }
        }
    }
    let nested: Vec<Vec<CellResult>> = cells
        .par_iter()
        .map(|&(p, n, s)| {
            let data = simulate_cell(cfg, p, n, s)?;
            let methods = [Method::Logit, Method::Gaussian(LabelEncoding::identity(p))];
            methods.iter().map(|m| run_cell(cfg, m, &data, s)).collect()
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<CellResult> = nested.into_iter().flatten().collect();
    out.sort_by(|a, b| (a.method, a.classes, a.n, a.seed).cmp(&(b.method, b.classes, b.n, b.seed)));
    Ok(out)
}

/// Per-(method, classes, n) means over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow {
    pub method: &'static str,
    pub classes: usize,
    pub n: usize,
    pub seeds: usize,
    pub kl: f64,
    pub kl_per_class: f64,
    pub hellinger_sq: f64,
    pub prediction_error: f64,
}

pub fn average(results: &[CellResult]) -> Vec<AveragedRow> {
    let mut rows: Vec<AveragedRow> = Vec::new();
    for r in results {
        let key = (r.method, r.classes, r.n);
        match rows.iter_mut().find(|a| (a.method, a.classes, a.n) == key) {
            Some(a) => {
                a.seeds += 1;
                a.kl += r.kl;
                a.hellinger_sq += r.hellinger_sq;
                a.prediction_error += r.prediction_error;
            }
            None => rows.push(AveragedRow {
                method: r.method,
                classes: r.classes,
                n: r.n,
                seeds: 1,
                kl: r.kl,
                kl_per_class: 0.0,
                hellinger_sq: r.hellinger_sq,
                prediction_error: r.prediction_error,
            }),
        }
    }
    for a in &mut rows {
        let k = a.seeds as f64;
        a.kl /= k;
        a.hellinger_sq /= k;
        a.prediction_error /= k;
        a.kl_per_class = a.kl / a.classes as f64;
    }
    rows
}

pub fn per_seed_csv(results: &[CellResult]) -> String {
    let mut out = String::from("method,classes,n,seed,lambda,kl,hellinger_sq,prediction_error,iterations,atoms\n");
    for r in results {
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e},{},{},{}\n",
            r.method, r.classes, r.n, r.seed, r.lambda, r.kl, r.hellinger_sq, r.prediction_error, r.iterations, r.atoms
        ));
    }
    out
}

pub fn averaged_csv(rows: &[AveragedRow]) -> String {
    let mut out = String::from("method,classes,n,seeds,kl,kl_per_class,hellinger_sq,prediction_error\n");
    for a in rows {
        out.push_str(&format!(
            "{},{},{},{},{:e},{:e},{:e},{}\n",
            a.method, a.classes, a.n, a.seeds, a.kl, a.kl_per_class, a.hellinger_sq, a.prediction_error
        ));
    }
    out
}

/// Writes `<name>_per_seed.csv` and `<name>_averaged.csv` into `dir`.
pub fn write_reproduce_outputs(dir: &Path, name: &str, results: &[CellResult]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_atomic(dir.join(format!("{name}_per_seed.csv")), &per_seed_csv(results))?;
    write_atomic(dir.join(format!("{name}_averaged.csv")), &averaged_csv(&average(results)))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(grid_size(100_000), 10);
        let g = lambda_grid(2.0f64, 100_000);
        assert_eq!(g.len(), 10);
        assert_eq!(g[0], 2.0);
        assert!((g[9] - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn folds_partition() {
        let f = kfold(23, 5, 3).unwrap();
        let mut all: Vec<usize> = f.concat();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|p| p.len() == 4 || p.len() == 5));
    }

    #[test]
    fn scaled_dims() {
        assert_eq!((scale_dim(900, 0.17), scale_dim(1350, 0.17)), (153, 229));
        assert_eq!((scale_dim(900, 1.0 / 6.0), scale_dim(1350, 1.0 / 6.0)), (150, 225));
    }
}
