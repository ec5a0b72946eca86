//! Small Monte Carlo checks of statistical behaviour. Thresholds are
//! deliberately loose; each checks a direction, not a rate.

use nalgebra::DMatrix;
use sparsevar::benchmarks::{naive_benchmarks, select_order_ic, varx_forecast_eval, Criterion};
use sparsevar::penalties::build_partition;
use sparsevar::refit::{oracle_gls, relaxed_ls, RestrictionMap};
use sparsevar::simulate::{simulate_var, sparse_phi, GaussianStream};
use sparsevar::solvers::{fit_path, SolverOptions};
use sparsevar::tuning::{estimate_fixed, lambda_grid};
use sparsevar::{HorizonMode, LagRegression, ModelSpec, PenaltyKind, SeriesMatrix};

fn white_noise(k: usize, t: usize, seed: u64) -> SeriesMatrix {
    let mut g = GaussianStream::new(seed);
    SeriesMatrix::new(DMatrix::from_fn(t, k, |_, _| g.normal()), k).unwrap()
}

fn random_walk(k: usize, t: usize, seed: u64) -> SeriesMatrix {
    let mut g = GaussianStream::new(seed);
    let mut v = DMatrix::zeros(t, k);
    for r in 1..t {
        for j in 0..k {
            v[(r, j)] = v[(r - 1, j)] + g.normal();
        }
    }
    SeriesMatrix::new(v, k).unwrap()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn bic_picks_no_lags_for_white_noise() {
    let hits = (0..20)
        .filter(|&s| select_order_ic(&white_noise(3, 500, s), 4, 0, Criterion::Bic).unwrap().p == 0)
        .count();
    assert!(hits >= 18, "{hits}/20");
}

#[test]
fn bic_forecasts_white_noise_at_least_as_well_as_aic() {
    let mut wins = 0;
    for s in 0..20 {
        let data = white_noise(3, 160, 100 + s);
        let bic = mean(&varx_forecast_eval(&data, 4, 0, 100..160, Criterion::Bic, 1).unwrap());
        let aic = mean(&varx_forecast_eval(&data, 4, 0, 100..160, Criterion::Aic, 1).unwrap());
        wins += (bic <= aic) as usize;
    }
    assert!(wins > 10, "{wins}/20");
}

#[test]
fn naive_benchmarks_rank_as_expected() {
    let (mut rw_wins, mut mean_wins) = (0, 0);
    for s in 0..20 {
        let walk = naive_benchmarks(&random_walk(2, 400, 200 + s), 200..400, 1).unwrap();
        rw_wins += (walk.rw_msfe() < walk.mean_msfe()) as usize;
        let noise = naive_benchmarks(&white_noise(2, 400, 300 + s), 200..400, 1).unwrap();
        mean_wins += (noise.mean_msfe() < noise.rw_msfe()) as usize;
    }
    assert!(rw_wins >= 18, "random walk: {rw_wins}/20");
    assert!(mean_wins >= 18, "white noise: {mean_wins}/20");
}

#[test]
fn oracle_gls_is_more_efficient_than_least_squares() {
    let k = 4;
    let sigma = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { 0.8 });
    let phi = sparse_phi(k, 2, 0.15, 0.6, 77).unwrap();
    let mut rows: Vec<Vec<usize>> = vec![vec![0]; k];
    for (i, row) in rows.iter_mut().enumerate() {
        row.extend((0..2 * k).filter(|&c| phi[(i, c)] != 0.0).map(|c| c + 1));
    }
    let map = RestrictionMap::new(rows, 2 * k + 1).unwrap();
    let mut truth = DMatrix::zeros(k, 2 * k + 1);
    truth.columns_mut(1, 2 * k).copy_from(&phi);
    let mut wins = 0;
    for rep in 0..50 {
        let data = simulate_var(&phi, &sigma, 200, 200, 400 + rep).unwrap();
        let reg = LagRegression::build(&data, 2, 0, HorizonMode::OneStep).unwrap();
        let gls = oracle_gls(&reg, &map, &sigma).unwrap();
        let ls = relaxed_ls(&reg, &map).unwrap();
        let mse = |b: &DMatrix<f64>| (b - &truth).norm_squared();
        wins += (mse(&gls.b) <= mse(&ls.b)) as usize;
    }
    assert!(wins >= 35, "{wins}/50");
}

#[test]
fn minnesota_shrinks_random_walk_toward_identity() {
    let data = random_walk(3, 300, 9);
    let mut spec = ModelSpec::new(2, PenaltyKind::Basic);
    spec.mn = true;
    spec.c = Some(vec![1.0; 3]);
    spec.own_lambdas = Some(vec![1e9]);
    let coef = estimate_fixed(&data, &spec, &SolverOptions::default()).unwrap().remove(0);
    let phi1 = coef.phi(1);
    assert!((phi1 - DMatrix::<f64>::identity(3, 3)).amax() <= 0.05);
    assert!(coef.phi(2).amax() == 0.0);
}

#[test]
fn sparsity_is_mostly_monotone_along_the_path() {
    let mut pairs = 0;
    let mut monotone = 0;
    for seed in 0..5 {
        let phi = sparse_phi(4, 3, 0.3, 0.8, 500 + seed).unwrap();
        let data = simulate_var(&phi, &DMatrix::identity(4, 4), 120, 200, 600 + seed).unwrap();
        let spec = ModelSpec::new(3, PenaltyKind::Basic);
        let grid = lambda_grid(&data, &spec, 0.0).unwrap();
        let fine = sparsevar::tuning::LambdaGrid::geometric(grid.lambda_max, 1000.0, 30);
        let reg = LagRegression::from_spec(&data, &spec).unwrap();
        let part = build_partition(PenaltyKind::Basic, reg.shape, 0.0).unwrap();
        let path = fit_path(&reg, &part, &fine.values, 0.0, &SolverOptions::default()).unwrap();
        let counts: Vec<usize> = path
            .iter()
            .map(|f| f.coefficients.penalized().iter().filter(|v| **v != 0.0).count())
            .collect();
        assert_eq!(counts[0], 0);
        for w in counts.windows(2) {
            pairs += 1;
            monotone += (w[1] >= w[0]) as usize;
        }
    }
    assert!(monotone as f64 >= 0.95 * pairs as f64, "{monotone}/{pairs}");
}
