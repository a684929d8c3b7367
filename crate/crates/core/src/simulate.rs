//! Synthetic ground truths and iid observation sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::link::logit_probs_into;
use crate::model::{ObservationSet, Sample};
use crate::scalar::{dot, normalize, Scalar};

/// Singular value profile used for rank-5 truths.
pub const DEFAULT_ALPHA: [f64; 5] = [2.0, 1.0, 0.5, 0.25, 0.1];

/// `α_k` for a rank-`rank` truth.
pub fn alpha_profile(rank: usize) -> Vec<f64> {
    if rank == DEFAULT_ALPHA.len() {
        DEFAULT_ALPHA.to_vec()
    } else {
        (0..rank).map(|k| 2f64.powi(1 - k as i32)).collect()
    }
}

fn orthonormal_gaussian<T: Scalar>(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<T> = (0..dim).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        // two passes of Gram-Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                for (x, &y) in v.iter_mut().zip(b) {
                    *x = *x - c * y;
                }
            }
        }
        if normalize(&mut v) > T::lit(1e-8) {
            basis.push(v);
        }
    }
    basis
}

/// `p − 1` matrices `Γ √(m₁m₂) Σ_k α_k u_k v_kᵀ` with orthonormal Gaussian factors.
pub fn make_ground_truth<T: Scalar>(
    m1: usize,
    m2: usize,
    classes: usize,
    rank: usize,
    gamma_scale: T,
    seed: u64,
) -> Result<Vec<DenseMatrix<T>>> {
    if m1 == 0 || m2 == 0 {
        return Err(FamError::InvalidArgument("dimensions must be positive".into()));
    }
    if classes < 2 {
        return Err(FamError::InvalidArgument(format!("need at least two classes, got {classes}")));
    }
    if rank > m1.min(m2) {
        return Err(FamError::InvalidArgument(format!(
            "rank {rank} exceeds min({m1}, {m2})"
        )));
    }
    if !gamma_scale.is_finite() {
        return Err(FamError::InvalidArgument("gamma scale must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = gamma_scale * T::from_usize_lossy(m1 * m2).sqrt();
    let alpha = alpha_profile(rank);
    Ok((0..classes - 1)
        .map(|_| {
            let us = orthonormal_gaussian::<T>(&mut rng, m1, rank);
            let vs = orthonormal_gaussian::<T>(&mut rng, m2, rank);
            let mut m = DenseMatrix::zeros(m1, m2);
            for ((u, v), &a) in us.iter().zip(&vs).zip(&alpha) {
                m.add_rank_one(scale * T::lit(a), u, v);
            }
            m
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingKind {
    Uniform,
    Product,
}

impl std::str::FromStr for SamplingKind {
    type Err = FamError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "product" => Ok(Self::Product),
            other => Err(FamError::InvalidArgument(format!("unknown sampling kind '{other}'"))),
        }
    }
}

/// Entry distribution `π_{k,l} = R_k C_l` with normalized row and column weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingDistribution {
    kind: SamplingKind,
    row_weights: Vec<f64>,
    col_weights: Vec<f64>,
    row_cdf: Vec<f64>,
    col_cdf: Vec<f64>,
}

fn normalized(w: &[f64]) -> Result<Vec<f64>> {
    if w.is_empty() || w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(FamError::InvalidArgument("weights must be positive and finite".into()));
    }
    let s: f64 = w.iter().sum();
    Ok(w.iter().map(|&x| x / s).collect())
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    let mut c: Vec<f64> = w
        .iter()
        .map(|&x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = c.last_mut() {
        *last = f64::INFINITY;
    }
    c
}

impl SamplingDistribution {
    pub fn uniform(m1: usize, m2: usize) -> Result<Self> {
        Self::build(SamplingKind::Uniform, &vec![1.0; m1], &vec![1.0; m2])
    }

    pub fn product(row_weights: &[f64], col_weights: &[f64]) -> Result<Self> {
        Self::build(SamplingKind::Product, row_weights, col_weights)
    }

    fn build(kind: SamplingKind, rows: &[f64], cols: &[f64]) -> Result<Self> {
        let row_weights = normalized(rows)?;
        let col_weights = normalized(cols)?;
        Ok(Self {
            kind,
            row_cdf: cumulative(&row_weights),
            col_cdf: cumulative(&col_weights),
            row_weights,
            col_weights,
        })
    }

    pub fn kind(&self) -> SamplingKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.row_weights.len()
    }

    pub fn cols(&self) -> usize {
        self.col_weights.len()
    }

    /// Row marginals `R_k`.
    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    /// Column marginals `C_l`.
    pub fn col_weights(&self) -> &[f64] {
        &self.col_weights
    }

    pub fn prob(&self, row: usize, col: usize) -> f64 {
        self.row_weights[row] * self.col_weights[col]
    }

    pub fn min_prob(&self) -> f64 {
        let r = self.row_weights.iter().copied().fold(f64::INFINITY, f64::min);
        let c = self.col_weights.iter().copied().fold(f64::INFINITY, f64::min);
        r * c
    }

    /// Smallest `μ` with `π_{k,l} ≥ 1/(μ m₁ m₂)` everywhere.
    pub fn mu(&self) -> f64 {
        1.0 / ((self.rows() * self.cols()) as f64 * self.min_prob())
    }

    /// Smallest `L_c` with every row and column marginal `≤ L_c / min(m₁, m₂)`.
    pub fn l_c(&self) -> f64 {
        let r = self.row_weights.iter().copied().fold(0.0, f64::max);
        let c = self.col_weights.iter().copied().fold(0.0, f64::max);
        r.max(c) * self.rows().min(self.cols()) as f64
    }

    fn draw_entry(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        match self.kind {
            SamplingKind::Uniform => (rng.random_range(0..self.rows()), rng.random_range(0..self.cols())),
            SamplingKind::Product => {
                let u: f64 = rng.random();
                let v: f64 = rng.random();
                (
                    self.row_cdf.partition_point(|&c| c <= u),
                    self.col_cdf.partition_point(|&c| c <= v),
                )
            }
        }
    }
}

/// Uniform sampling, or product sampling with row and column weights drawn
/// log-uniformly from `[1, skew]`.
pub fn make_sampling(kind: SamplingKind, m1: usize, m2: usize, skew: f64, seed: u64) -> Result<SamplingDistribution> {
    if m1 == 0 || m2 == 0 {
        return Err(FamError::InvalidArgument("dimensions must be positive".into()));
    }
    if !(skew >= 1.0) || !skew.is_finite() {
        return Err(FamError::InvalidArgument(format!("skew must be at least 1, got {skew}")));
    }
    match kind {
        SamplingKind::Uniform => SamplingDistribution::uniform(m1, m2),
        SamplingKind::Product => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ln = skew.ln();
            let mut draw = |m: usize| -> Vec<f64> { (0..m).map(|_| (rng.random::<f64>() * ln).exp()).collect() };
            let rows = draw(m1);
            let cols = draw(m2);
            SamplingDistribution::product(&rows, &cols)
        }
    }
}

/// `n` iid entries from `dist`, each labelled by the logit model of `truth`.
pub fn sample_observations<T: Scalar>(
    truth: &[DenseMatrix<T>],
    dist: &SamplingDistribution,
    n: usize,
    seed: u64,
) -> Result<ObservationSet> {
    let first = truth
        .first()
        .ok_or_else(|| FamError::InvalidArgument("no truth matrices".into()))?;
    let (m1, m2) = (first.rows(), first.cols());
    if truth.iter().any(|m| m.rows() != m1 || m.cols() != m2) || dist.rows() != m1 || dist.cols() != m2 {
        return Err(FamError::DimensionMismatch("truth and sampling shapes differ".into()));
    }
    if n == 0 {
        return Err(FamError::InvalidArgument("n must be at least 1".into()));
    }
    let classes = truth.len() + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![T::zero(); truth.len()];
    let mut probs = vec![T::zero(); classes];
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let (r, c) = dist.draw_entry(&mut rng);
        for (xi, m) in x.iter_mut().zip(truth) {
            *xi = m.get(r, c);
        }
        logit_probs_into(&x, &mut probs);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut label = classes;
        for (j, &p) in probs.iter().enumerate() {
            acc += p.as_f64();
            if u < acc {
                label = j + 1;
                break;
            }
        }
        samples.push(Sample::new(r, c, label as u32));
    }
    ObservationSet::new(m1, m2, classes, samples)
}
