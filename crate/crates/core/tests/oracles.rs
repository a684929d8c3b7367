mod common;

use common::*;
use fam_core::gaussian::{gaussian_class_probs, GaussianModel, LabelEncoding};
use fam_core::model::{Atom, AtomicModel};
use fam_core::{
    frobenius_error, hellinger_sq, kl_divergence, negative_log_likelihood, sparse_gradient, top_singular_pair,
    DenseMatrix, ObservationSet, Sample, SparseMatrix,
};
use rand::Rng;

#[test]
fn densify_matches_elementwise_sum() {
    let mut r = rng(1);
    let model = random_model(&mut r, 7, 5, 2, 3, 2.0);
    let dense = &model.densify()[0];
    for row in 0..7 {
        for col in 0..5 {
            let expected: f64 = model
                .class_atoms(0)
                .iter()
                .map(|a| a.weight() * a.left()[row] * a.right()[col])
                .sum();
            assert!((dense.get(row, col) - expected).abs() < 1e-14);
        }
    }
}

#[test]
fn entry_evaluation_matches_dense() {
    let mut r = rng(2);
    let model = random_model(&mut r, 6, 4, 2, 5, 1.5);
    let dense = model.densify();
    let value = model.evaluate_entries(&[(2, 3)]).unwrap();
    assert!((value[0][0] - dense[0].get(2, 3)).abs() < 1e-14);
}

#[test]
fn nll_matches_per_sample_loop() {
    for seed in 0..6 {
        let mut r = rng(10 + seed);
        let p = [2, 3, 5][seed as usize % 3];
        let model = random_model(&mut r, 5, 6, p, 3, 3.0);
        let obs = random_obs(&mut r, 5, 6, p, 80);
        let fast = negative_log_likelihood(&model, &obs).unwrap();
        let slow = naive_nll(&model.densify(), &obs);
        assert!((fast - slow).abs() < 1e-12 * slow.abs().max(1.0), "{fast} vs {slow}");
    }
}

#[test]
fn zero_model_nll_is_log_classes() {
    let mut r = rng(3);
    let obs = random_obs(&mut r, 4, 4, 5, 30);
    let nll = negative_log_likelihood(&AtomicModel::<f64>::zeros(4, 4, 5), &obs).unwrap();
    assert!((nll - 5f64.ln()).abs() < 1e-14);
}

#[test]
fn gradient_matches_central_differences() {
    let h = 1e-5;
    for seed in 0..5 {
        let mut r = rng(20 + seed);
        let p = [2, 3, 5][seed as usize % 3];
        let model = random_model(&mut r, 4, 5, p, 2, 2.0);
        let obs = random_obs(&mut r, 4, 5, p, 40);
        let grad: Vec<DenseMatrix> = sparse_gradient(&model, &obs).unwrap().iter().map(|g| g.to_dense()).collect();
        let params = model.densify();
        for j in 0..p - 1 {
            for row in 0..4 {
                for col in 0..5 {
                    let mut plus = params.clone();
                    let mut minus = params.clone();
                    plus[j].add_at(row, col, h);
                    minus[j].add_at(row, col, -h);
                    let fd = (naive_nll(&plus, &obs) - naive_nll(&minus, &obs)) / (2.0 * h);
                    assert!((grad[j].get(row, col) - fd).abs() < 1e-8, "class {j} ({row},{col})");
                }
            }
        }
    }
}

fn random_sparse(r: &mut rand_chacha::ChaCha8Rng, m1: usize, m2: usize, density: f64) -> SparseMatrix {
    let mut entries = Vec::new();
    for i in 0..m1 {
        for j in 0..m2 {
            if r.random::<f64>() < density {
                entries.push((i, j, 2.0 * r.random::<f64>() - 1.0));
            }
        }
    }
    SparseMatrix::new(m1, m2, entries).unwrap()
}

#[test]
fn top_singular_value_matches_dense_svd() {
    let mut r = rng(4);
    for k in 0..10 {
        let g = random_sparse(&mut r, 50, 40, 0.2);
        let top = top_singular_pair(&g, k, 1e-12, 5000).unwrap();
        let s = singular_values(&g.to_dense());
        assert!(top.converged);
        assert!((top.sigma - s[0]).abs() <= 1e-8 * s[0], "{} vs {}", top.sigma, s[0]);
        let uv = g.bilinear(&top.u, &top.v);
        assert!((uv - top.sigma).abs() <= 1e-8 * s[0]);
    }
}

#[test]
fn top_singular_pair_is_deterministic_and_sign_normalized() {
    let mut r = rng(5);
    let g = random_sparse(&mut r, 30, 20, 0.3);
    let a = top_singular_pair(&g, 9, 1e-12, 5000).unwrap();
    let b = top_singular_pair(&g, 9, 1e-12, 5000).unwrap();
    assert_eq!(a, b);
    let first = a.u.iter().find(|x| **x != 0.0).unwrap();
    assert!(*first > 0.0);
    let c = top_singular_pair(&g, 10, 1e-12, 5000).unwrap();
    let align: f64 = a.u.iter().zip(&c.u).map(|(x, y)| x * y).sum();
    assert!(align > 1.0 - 1e-8);
}

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn gaussian_bins_match_quadrature() {
    let atom = Atom::new(3.0, vec![1.0], vec![1.0]).unwrap();
    let model = GaussianModel::new(1, 1, LabelEncoding::identity(5), vec![atom], 1.0).unwrap();
    let probs = gaussian_class_probs(&model, &[(0, 0)]).unwrap().remove(0);
    let edges = [-40.0, 1.5, 2.5, 3.5, 4.5, 46.0];
    for k in 0..5 {
        let q = simpson(|x| normal_pdf(x, 3.0, 1.0), edges[k], edges[k + 1], 200_000);
        assert!((probs[k] - q).abs() < 1e-10, "bin {k}: {} vs {q}", probs[k]);
    }
}

#[test]
fn gaussian_bins_with_custom_levels_match_quadrature() {
    let levels = vec![-1.0, 0.5, 4.0];
    let atom = Atom::new(0.8, vec![-1.0], vec![1.0]).unwrap();
    let model = GaussianModel::new(1, 1, LabelEncoding::new(levels).unwrap(), vec![atom], 0.6).unwrap();
    let probs = gaussian_class_probs(&model, &[(0, 0)]).unwrap().remove(0);
    let edges = [-40.0, -0.25, 2.25, 40.0];
    for k in 0..3 {
        let q = simpson(|x| normal_pdf(x, -0.8, 0.6), edges[k], edges[k + 1], 200_000);
        assert!((probs[k] - q).abs() < 1e-10);
    }
}

#[test]
fn divergences_match_naive_loops() {
    let mut r = rng(6);
    for p in [2, 3, 5] {
        let a = random_field(&mut r, 4, 3, p);
        let b = random_field(&mut r, 4, 3, p);
        let (mut kl, mut h) = (0.0, 0.0);
        for row in 0..4 {
            for col in 0..3 {
                for (x, y) in a.get(row, col).iter().zip(b.get(row, col)) {
                    kl += x * (x / y).ln();
                    h += (x.sqrt() - y.sqrt()).powi(2);
                }
            }
        }
        assert!((kl_divergence(&a, &b).unwrap() - kl / 12.0).abs() < 1e-12);
        assert!((hellinger_sq(&a, &b).unwrap() - h / 12.0).abs() < 1e-12);
    }
}

#[test]
fn frobenius_matches_elementwise_sum() {
    let mut r = rng(7);
    let a: Vec<_> = (0..3).map(|_| random_dense(&mut r, 5, 4, 2.0)).collect();
    let b: Vec<_> = (0..3).map(|_| random_dense(&mut r, 5, 4, 2.0)).collect();
    let mut total = 0.0;
    for (x, y) in a.iter().zip(&b) {
        for row in 0..5 {
            for col in 0..4 {
                total += (x.get(row, col) - y.get(row, col)).powi(2);
            }
        }
    }
    assert!((frobenius_error(&a, &b).unwrap() - total / 20.0).abs() < 1e-12);
}

#[test]
fn in_house_svd_agrees_with_nalgebra() {
    let mut r = rng(8);
    let m = random_dense(&mut r, 9, 6, 1.0);
    let ours = m.svd().s;
    let reference = singular_values(&m);
    for (a, b) in ours.iter().zip(&reference) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((m.nuclear_norm() - nuclear_norm(&m)).abs() < 1e-11);
}

#[test]
fn single_entry_observation_set() {
    let obs = ObservationSet::new(1, 1, 2, vec![Sample::new(0, 0, 1)]).unwrap();
    let g = sparse_gradient(&AtomicModel::<f64>::zeros(1, 1, 2), &obs).unwrap();
    assert!((g[0].to_dense().get(0, 0) + 0.5).abs() < 1e-15);
}
