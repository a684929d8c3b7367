mod common;

use fam_core::simulate::{make_ground_truth, make_sampling, sample_observations, SamplingDistribution, SamplingKind};
use fam_core::ProbabilityField;

#[test]
fn uniform_sampling_passes_chi_square() {
    let truth = make_ground_truth(10, 10, 2, 2, 1.0f64, 3).unwrap();
    let dist = SamplingDistribution::uniform(10, 10).unwrap();
    let n = 100_000;
    let obs = sample_observations(&truth, &dist, n, 42).unwrap();
    let mut counts = [0usize; 100];
    for s in obs.samples() {
        counts[s.row * 10 + s.col] += 1;
    }
    let expected = n as f64 / 100.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99 degrees of freedom, upper 1% point
    assert!(chi2 < 134.642, "chi2 = {chi2}");
}

#[test]
fn product_sampling_matches_its_weights() {
    let dist = make_sampling(SamplingKind::Product, 4, 3, 10.0, 5).unwrap();
    let total: f64 = (0..4).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| dist.prob(r, c)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let truth = make_ground_truth(4, 3, 2, 1, 0.0f64, 0).unwrap();
    let n = 200_000;
    let obs = sample_observations(&truth, &dist, n, 8).unwrap();
    let mut counts = [0usize; 12];
    for s in obs.samples() {
        counts[s.row * 3 + s.col] += 1;
    }
    for r in 0..4 {
        for c in 0..3 {
            let freq = counts[r * 3 + c] as f64 / n as f64;
            let p = dist.prob(r, c);
            assert!((freq - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt(), "({r},{c})");
        }
    }
}

fn mean_max_abs(m1: usize, m2: usize) -> f64 {
    (0..20)
        .map(|seed| make_ground_truth(m1, m2, 2, 5, 1.0f64, seed).unwrap()[0].max_abs())
        .sum::<f64>()
        / 20.0
}

#[test]
fn entry_scale_is_stable_across_dimensions() {
    let small = mean_max_abs(100, 150);
    let large = mean_max_abs(300, 450);
    assert!((large / small - 1.0).abs() < 0.25, "{small} vs {large}");
}

#[test]
fn labels_follow_truth_probabilities() {
    let truth = make_ground_truth(2, 2, 3, 1, 0.5f64, 4).unwrap();
    let field = ProbabilityField::from_params(&truth).unwrap();
    let dist = SamplingDistribution::uniform(2, 2).unwrap();
    let obs = sample_observations(&truth, &dist, 400_000, 9).unwrap();
    let mut counts = [[0usize; 3]; 4];
    let mut cell = [0usize; 4];
    for s in obs.samples() {
        counts[s.row * 2 + s.col][s.label as usize - 1] += 1;
        cell[s.row * 2 + s.col] += 1;
    }
    for r in 0..2 {
        for c in 0..2 {
            let k = r * 2 + c;
            for (l, &p) in field.get(r, c).iter().enumerate() {
                let freq = counts[k][l] as f64 / cell[k] as f64;
                let sd = (p * (1.0 - p) / cell[k] as f64).sqrt();
                assert!((freq - p).abs() < 5.0 * sd, "({r},{c}) label {}: {freq} vs {p}", l + 1);
            }
        }
    }
}

#[test]
fn truth_has_the_requested_singular_values() {
    let (m1, m2) = (30, 40);
    let truth = make_ground_truth(m1, m2, 2, 5, 2.0f64, 6).unwrap();
    let s = common::singular_values(&truth[0]);
    let scale = 2.0 * ((m1 * m2) as f64).sqrt();
    for (k, a) in [2.0, 1.0, 0.5, 0.25, 0.1].iter().enumerate() {
        assert!((s[k] - scale * a).abs() < 1e-9 * scale);
    }
    assert!(s[5] < 1e-9 * scale);
}

#[test]
fn sampling_is_seeded() {
    let truth = make_ground_truth(5, 6, 3, 2, 1.0f64, 1).unwrap();
    let dist = SamplingDistribution::uniform(5, 6).unwrap();
    let a = sample_observations(&truth, &dist, 500, 3).unwrap();
    let b = sample_observations(&truth, &dist, 500, 3).unwrap();
    let c = sample_observations(&truth, &dist, 500, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}
