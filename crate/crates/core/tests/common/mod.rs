#![allow(dead_code)]

use fam_core::model::{Atom, AtomicModel};
use fam_core::{DenseMatrix, ObservationSet, ProbabilityField, Sample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v = gaussian_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn random_model(rng: &mut ChaCha8Rng, m1: usize, m2: usize, p: usize, atoms: usize, scale: f64) -> AtomicModel<f64> {
    let per_class = (0..p - 1)
        .map(|_| {
            (0..atoms)
                .map(|_| {
                    let w = scale * rng.random::<f64>();
                    Atom::new(w, unit_vec(rng, m1), unit_vec(rng, m2)).unwrap()
                })
                .collect()
        })
        .collect();
    AtomicModel::from_atoms(m1, m2, p, per_class).unwrap()
}

pub fn random_obs(rng: &mut ChaCha8Rng, m1: usize, m2: usize, p: usize, n: usize) -> ObservationSet {
    let samples = (0..n)
        .map(|_| {
            Sample::new(
                rng.random_range(0..m1),
                rng.random_range(0..m2),
                rng.random_range(1..=p as u32),
            )
        })
        .collect();
    ObservationSet::new(m1, m2, p, samples).unwrap()
}

pub fn random_dense(rng: &mut ChaCha8Rng, m1: usize, m2: usize, bound: f64) -> DenseMatrix {
    DenseMatrix::from_fn(m1, m2, |_, _| bound * (2.0 * rng.random::<f64>() - 1.0))
}

/// `(1/n) Σ −log P(label)` straight from the dense parameters, class `p` as reference.
pub fn naive_nll(params: &[DenseMatrix], obs: &ObservationSet) -> f64 {
    let p = obs.classes();
    let mut total = 0.0;
    for s in obs.samples() {
        let x: Vec<f64> = params.iter().map(|m| m.get(s.row, s.col)).collect();
        let denom = 1.0 + x.iter().map(|v| v.exp()).sum::<f64>();
        let num = if (s.label as usize) < p { x[s.label as usize - 1].exp() } else { 1.0 };
        total -= (num / denom).ln();
    }
    total / obs.len() as f64
}

pub fn to_nalgebra(m: &DenseMatrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c))
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DenseMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = to_nalgebra(m).singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

pub fn nuclear_norm(m: &DenseMatrix) -> f64 {
    singular_values(m).iter().sum()
}

pub fn random_field(rng: &mut ChaCha8Rng, m1: usize, m2: usize, p: usize) -> ProbabilityField {
    let mut probs = Vec::with_capacity(m1 * m2 * p);
    for _ in 0..m1 * m2 {
        let raw: Vec<f64> = (0..p).map(|_| rng.random::<f64>().powi(3) + 1e-9).collect();
        let s: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / s));
    }
    ProbabilityField::new(m1, m2, p, probs).unwrap()
}

/// Minimizer of a unimodal `f` on `[a, b]` by golden-section search.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Composite Simpson rule on `[a, b]` with `intervals` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}
