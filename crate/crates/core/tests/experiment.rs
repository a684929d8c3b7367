mod common;

use common::*;
use fam_core::experiment::{
    average, cross_validate, grid_size, lambda_grid, lambda_max, per_seed_csv, run_reproduce, scale_dim,
    ExperimentKind, Method, ReproduceConfig,
};
use fam_core::FitConfig;

#[test]
fn grid_size_follows_log_rule() {
    assert_eq!(grid_size(100_000), 10);
    assert_eq!(grid_size(1), 1);
    assert_eq!(grid_size(1500), 6);
}

#[test]
fn grid_spans_three_decades() {
    let g = lambda_grid(2.0f64, 10_000);
    assert_eq!(g.len(), grid_size(10_000));
    assert_eq!(g[0], 2.0);
    assert!((g[g.len() - 1] - 2e-3).abs() < 1e-15);
    let ratio = g[1] / g[0];
    for w in g.windows(2) {
        assert!((w[1] / w[0] - ratio).abs() < 1e-12);
    }
}

#[test]
fn cv_selects_the_grid_minimizer() {
    let mut r = rng(3);
    let obs = random_obs(&mut r, 8, 10, 2, 400);
    let base = FitConfig::new(1.0);
    let lmax = lambda_max(&obs, &Method::Logit, &base).unwrap();
    let grid = lambda_grid(lmax, obs.len());
    let cv = cross_validate(&obs, &Method::Logit, &grid, 4, &base).unwrap();
    assert_eq!(cv.rows.len(), grid.len());
    assert!(grid.contains(&cv.best_lambda));
    let best = cv.rows.iter().find(|row| row.lambda == cv.best_lambda).unwrap();
    assert!(cv.rows.iter().all(|row| row.mean_val_loss >= best.mean_val_loss));
}

#[test]
fn dimensions_round_half_down() {
    assert_eq!(scale_dim(900, 0.17), 153);
    assert_eq!(scale_dim(1350, 0.17), 229);
    assert_eq!(scale_dim(900, 1.0 / 6.0), 150);
    assert_eq!(scale_dim(1350, 1.0 / 6.0), 225);
    assert_eq!(scale_dim(5, 0.5), 2);
    assert_eq!(scale_dim(7, 0.5), 3);
}

fn tiny(kind: ExperimentKind) -> ReproduceConfig {
    let mut cfg = ReproduceConfig::new(kind, 0.02);
    cfg.seeds = 2;
    cfg.n_values = Some(vec![300, 600]);
    cfg.folds = 2;
    cfg.test_size = 200;
    cfg
}

#[test]
fn reproduce_is_deterministic() {
    let cfg = tiny(ExperimentKind::Table2);
    let a = run_reproduce(&cfg).unwrap();
    let b = run_reproduce(&cfg).unwrap();
    assert_eq!(per_seed_csv(&a), per_seed_csv(&b));
    assert_eq!(a.len(), 2 * 2 * 2);
}

#[test]
fn averages_cover_every_cell() {
    let mut cfg = tiny(ExperimentKind::Fig1);
    cfg.n_values = None;
    assert_eq!(cfg.dims(), (18, 27));
    assert_eq!(cfg.n_list(), vec![24, 49, 97, 194]);
    cfg.n_values = Some(vec![200]);
    let results = run_reproduce(&cfg).unwrap();
    let rows = average(&results);
    assert_eq!(rows.len(), 2 * 2);
    for row in &rows {
        assert_eq!(row.seeds, 2);
        assert!((row.kl_per_class * row.classes as f64 - row.kl).abs() < 1e-15);
        assert!(row.hellinger_sq <= row.kl + 1e-12);
    }
}
