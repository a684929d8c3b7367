mod common;

use common::*;
use fam_core::io::{
    format_gaussian_model, format_model, format_observations, parse_model, parse_observations, remap_labels, split,
    LabelMap, ObservationFormat, ReadOptions, SplitSpec, StoredModel,
};
use fam_core::model::Atom;
use fam_core::{
    hellinger_sq, kl_divergence, link_constants, logit_probs, ObservationSet, ProbabilityField, Sample,
};
use proptest::prelude::*;

fn observations() -> impl Strategy<Value = ObservationSet> {
    (1usize..8, 1usize..8, 2usize..6).prop_flat_map(|(m1, m2, p)| {
        prop::collection::vec((0..m1, 0..m2, 1..=p as u32), 1..60).prop_map(move |raw| {
            let samples = raw.into_iter().map(|(r, c, l)| Sample::new(r, c, l)).collect();
            ObservationSet::new(m1, m2, p, samples).unwrap()
        })
    })
}

fn sorted_triples(obs: &ObservationSet) -> Vec<(usize, usize, u32)> {
    let mut v: Vec<_> = obs.samples().iter().map(|s| (s.row, s.col, s.label)).collect();
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_dominates_hellinger(seed in any::<u64>(), p in 2usize..6, m1 in 1usize..6, m2 in 1usize..6) {
        let mut r = rng(seed);
        let a = random_field(&mut r, m1, m2, p);
        let b = random_field(&mut r, m1, m2, p);
        let kl = kl_divergence(&a, &b).unwrap();
        let h = hellinger_sq(&a, &b).unwrap();
        prop_assert!(h >= 0.0 && kl >= 0.0);
        prop_assert!(h <= kl + 1e-9, "h={h} kl={kl}");
        prop_assert!(kl_divergence(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn logit_probs_form_a_distribution(x in prop::collection::vec(-50.0f64..50.0, 1..6)) {
        let p = logit_probs(&x).unwrap();
        prop_assert_eq!(p.len(), x.len() + 1);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binary_curvature_bound_holds(x in -2.0f64..2.0, y in -2.0f64..2.0) {
        let k = link_constants(2.0, 2).unwrap().k_gamma;
        let fx = logit_probs(&[x]).unwrap();
        let fy = logit_probs(&[y]).unwrap();
        let h: f64 = fx.iter().zip(&fy).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum();
        prop_assert!(k * (x - y).powi(2) <= h + 1e-12);
    }

    #[test]
    fn observation_csv_round_trips(obs in observations()) {
        let text = format_observations(&obs);
        let opts = ReadOptions { rows: Some(obs.rows()), cols: Some(obs.cols()), classes: Some(obs.classes()) };
        let back = parse_observations(&text, ObservationFormat::Csv, opts).unwrap();
        prop_assert_eq!(back, obs);
    }

    #[test]
    fn split_partitions_the_samples(obs in observations(), seed in any::<u64>(), t in 0.05f64..0.9, v in 0.05f64..0.9) {
        let spec = SplitSpec { test_fraction: t, validation_fraction_of_rest: v, seed };
        let (train, val, test) = split(&obs, &spec).unwrap();
        prop_assert_eq!(train.len() + val.len() + test.len(), obs.len());
        let mut union: Vec<_> = [&train, &val, &test].iter().flat_map(|o| sorted_triples(o)).collect();
        union.sort_unstable();
        prop_assert_eq!(union, sorted_triples(&obs));
        let again = split(&obs, &spec).unwrap();
        prop_assert_eq!(again, (train, val, test));
    }

    #[test]
    fn bijective_remap_inverts(obs in observations(), seed in any::<u64>()) {
        let p = obs.classes();
        let mut perm: Vec<u32> = (1..=p as u32).collect();
        let mut r = rng(seed);
        use rand::seq::SliceRandom;
        perm.shuffle(&mut r);
        let map = LabelMap::new(perm, p).unwrap();
        let there = remap_labels(&obs, &map).unwrap();
        let back = remap_labels(&there, &map.inverse().unwrap()).unwrap();
        prop_assert_eq!(back, obs);
    }

    #[test]
    fn logit_model_file_round_trips(seed in any::<u64>(), m1 in 1usize..6, m2 in 1usize..6, p in 2usize..5, atoms in 0usize..4) {
        let mut r = rng(seed);
        let model = random_model(&mut r, m1, m2, p, atoms, 5.0);
        let lambda = 1e-3 * (1.0 + seed as f64 / u64::MAX as f64);
        let parsed = parse_model::<f64>(&format_model(&model, lambda)).unwrap();
        prop_assert_eq!(parsed, StoredModel::Logit { model, lambda });
    }

    #[test]
    fn gaussian_model_file_round_trips(seed in any::<u64>(), m1 in 1usize..6, m2 in 1usize..6, atoms in 0usize..4) {
        let mut r = rng(seed);
        let list: Vec<_> = (0..atoms)
            .map(|_| Atom::new(r.random::<f64>(), unit_vec(&mut r, m1), unit_vec(&mut r, m2)).unwrap())
            .collect();
        let enc = fam_core::LabelEncoding::new(vec![-1.0, 0.25, 3.0]).unwrap();
        let model = fam_core::GaussianModel::new(m1, m2, enc, list, 0.7).unwrap();
        let parsed = parse_model::<f64>(&format_gaussian_model(&model, 0.5)).unwrap();
        prop_assert_eq!(parsed, StoredModel::Gaussian { model, lambda: 0.5 });
    }
}

use rand::Rng;

#[test]
fn truncated_files_are_rejected_at_every_cut() {
    let mut r = rng(1);
    let model = random_model(&mut r, 3, 2, 3, 2, 1.0);
    let text = format_model(&model, 0.1);
    let lines: Vec<&str> = text.lines().collect();
    for keep in 0..lines.len() {
        let cut = lines[..keep].join("\n");
        assert!(parse_model::<f64>(&cut).is_err(), "accepted {keep} lines");
    }
}

#[test]
fn probability_fields_from_params_are_normalized() {
    let mut r = rng(2);
    let params: Vec<_> = (0..3).map(|_| random_dense(&mut r, 4, 5, 30.0)).collect();
    let field = ProbabilityField::from_params(&params).unwrap();
    for row in 0..4 {
        for col in 0..5 {
            let s: f64 = field.get(row, col).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
