//! Divergences between probability fields, parameter errors, test-set error
//! and the high-probability KL bound.

use std::fmt::Write as _;

use crate::dense::DenseMatrix;
use crate::error::{FamError, Result};
use crate::link::LinkConstants;
use crate::model::{ObservationSet, ProbabilityField};
use crate::scalar::Scalar;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;

fn same_shape<T: Scalar>(a: &ProbabilityField<T>, b: &ProbabilityField<T>) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() || a.classes() != b.classes() {
        return Err(FamError::DimensionMismatch(format!(
            "fields {}x{}x{} and {}x{}x{}",
            a.rows(),
            a.cols(),
            a.classes(),
            b.rows(),
            b.cols(),
            b.classes()
        )));
    }
    Ok(())
}

/// Entry-averaged `Σ_j truth_j log(truth_j / est_j)`.
pub fn kl_divergence<T: Scalar>(truth: &ProbabilityField<T>, est: &ProbabilityField<T>) -> Result<T> {
    same_shape(truth, est)?;
    let lo = T::lit(PROB_CLAMP);
    let hi = T::one() - lo;
    let clamp = |x: T| x.max(lo).min(hi);
    let p = truth.classes();
    let mut total = T::zero();
    for (t, e) in truth.as_slice().chunks(p).zip(est.as_slice().chunks(p)) {
        let entry: T = t
            .iter()
            .zip(e)
            .filter(|(&tj, _)| tj > T::zero())
            .map(|(&tj, &ej)| tj * (clamp(tj).ln() - clamp(ej).ln()))
            .sum();
        total = total + entry.max(T::zero());
    }
    Ok(total / T::from_usize_lossy(truth.rows() * truth.cols()))
}

/// Entry-averaged `Σ_j (√truth_j − √est_j)²`.
pub fn hellinger_sq<T: Scalar>(truth: &ProbabilityField<T>, est: &ProbabilityField<T>) -> Result<T> {
    same_shape(truth, est)?;
    let total: T = truth
        .as_slice()
        .iter()
        .zip(est.as_slice())
        .map(|(&a, &b)| {
            let d = a.sqrt() - b.sqrt();
            d * d
        })
        .sum();
    Ok(total / T::from_usize_lossy(truth.rows() * truth.cols()))
}

/// `Σ_j ‖truthʲ − estʲ‖²_F / (m₁ m₂)`.
pub fn frobenius_error<T: Scalar>(truth: &[DenseMatrix<T>], est: &[DenseMatrix<T>]) -> Result<T> {
    if truth.len() != est.len() {
        return Err(FamError::DimensionMismatch(format!(
            "{} truth matrices against {} estimates",
            truth.len(),
            est.len()
        )));
    }
    let first = truth
        .first()
        .ok_or_else(|| FamError::InvalidArgument("no parameter matrices".into()))?;
    let cells = T::from_usize_lossy(first.rows() * first.cols());
    let mut total = T::zero();
    for (a, b) in truth.iter().zip(est) {
        total = total + a.sub(b)?.frobenius_sq();
    }
    Ok(total / cells)
}

/// Label with the largest probability; ties go to the smaller label.
pub fn argmax_label<T: Scalar>(probs: &[T]) -> u32 {
    let mut best = 0;
    for (j, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = j;
        }
    }
    best as u32 + 1
}

/// Fraction of test samples whose label differs from the most probable label.
pub fn prediction_error<T: Scalar>(model_probs: &ProbabilityField<T>, test: &ObservationSet) -> Result<T> {
    if test.rows() != model_probs.rows() || test.cols() != model_probs.cols() {
        return Err(FamError::DimensionMismatch(format!(
            "test set is {}x{}, model is {}x{}",
            test.rows(),
            test.cols(),
            model_probs.rows(),
            model_probs.cols()
        )));
    }
    if test.is_empty() {
        return Err(FamError::InvalidArgument("empty test set".into()));
    }
    let wrong = test
        .samples()
        .iter()
        .filter(|s| argmax_label(model_probs.get(s.row, s.col)) != s.label)
        .count();
    Ok(T::from_usize_lossy(wrong) / T::from_usize_lossy(test.len()))
}

/// The two branches of the KL bound and the matching regularization level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem2Bound<T> {
    /// `μ² L² / K · max(m₁,m₂) · rank · log d / n`
    pub rank_term: T,
    /// `8 μ e M √(log d) / n`
    pub tail_term: T,
    pub value: T,
    /// `6 L √(2 L_c log d / (min(m₁,m₂) n))`
    pub lambda: T,
    /// whether `n ≥ 2 min(m₁,m₂) log d / (9 L_c)`
    pub sample_condition: bool,
}

/// KL bound with all unknown universal constants set to one (`d = m₁ + m₂`).
pub fn theorem2_bound<T: Scalar>(
    m1: usize,
    m2: usize,
    n: usize,
    rank: usize,
    constants: &LinkConstants<T>,
    mu: T,
    l_c: T,
) -> Result<Theorem2Bound<T>> {
    if m1 == 0 || m2 == 0 || n == 0 {
        return Err(FamError::InvalidArgument("dimensions and n must be positive".into()));
    }
    let log_d = T::from_usize_lossy(m1 + m2).ln();
    let big_m = T::from_usize_lossy(m1.max(m2));
    let small_m = T::from_usize_lossy(m1.min(m2));
    let nf = T::from_usize_lossy(n);
    let rank_term = mu * mu * constants.l_gamma * constants.l_gamma / constants.k_gamma * big_m
        * T::from_usize_lossy(rank)
        * log_d
        / nf;
    let e = T::one().exp();
    let tail_term = T::lit(8.0) * mu * e * constants.m_gamma * log_d.sqrt() / nf;
    let lambda = T::lit(6.0) * constants.l_gamma * (T::lit(2.0) * l_c * log_d / (small_m * nf)).sqrt();
    Ok(Theorem2Bound {
        rank_term,
        tail_term,
        value: rank_term.max(tail_term),
        lambda,
        sample_condition: nf >= T::lit(2.0) * small_m * log_d / (T::lit(9.0) * l_c),
    })
}

/// Evaluation summary; fields are absent when the corresponding input was not given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport<T> {
    pub kl: Option<T>,
    pub hellinger_sq: Option<T>,
    pub frobenius_sq_normalized: Option<T>,
    pub prediction_error: Option<T>,
}

impl<T: Scalar> EvalReport<T> {
    fn pairs(&self) -> [(&'static str, Option<T>); 4] {
        [
            ("kl", self.kl),
            ("hellinger_sq", self.hellinger_sq),
            ("frobenius_sq_normalized", self.frobenius_sq_normalized),
            ("prediction_error", self.prediction_error),
        ]
    }

    /// `key=value` lines for the fields that are present.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            if let Some(v) = v {
                let _ = writeln!(out, "{k}={v}");
            }
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "kl,hellinger_sq,frobenius_sq_normalized,prediction_error"
    }

    /// One CSV row in `csv_header` order; absent fields are empty.
    pub fn to_csv_row(&self) -> String {
        self.pairs()
            .iter()
            .map(|(_, v)| v.map(|x| x.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join(",")
    }
}
