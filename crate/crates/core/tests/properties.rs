use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sparsevar::analysis::generate_irf;
use sparsevar::penalties::build_partition;
use sparsevar::simulate::{rescale_radius, simulate_var, spectral_radius, to_companion};
use sparsevar::solvers::{fit_penalized, Problem, SolverOptions};
use sparsevar::tuning::{one_se_select, LambdaGrid};
use sparsevar::{
    standardize, CoefficientSet, HorizonMode, LagRegression, LagShape, PenaltyKind, SeriesMatrix,
};

fn shape_for(kind: PenaltyKind) -> LagShape {
    match kind {
        PenaltyKind::EndogenousFirst => LagShape::new(2, 1, 2, 2),
        k if k.supports_varx() => LagShape::new(2, 1, 2, 1),
        _ => LagShape::new(2, 0, 3, 0),
    }
}

fn kinds() -> impl Strategy<Value = PenaltyKind> {
    proptest::sample::select(PenaltyKind::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn penalty_is_absolutely_homogeneous(
        kind in kinds(),
        vals in proptest::collection::vec(-2.0f64..2.0, 12),
        c in -3.0f64..3.0,
        alpha in 0.0f64..1.0,
    ) {
        let shape = shape_for(kind);
        let part = build_partition(kind, shape, 0.5).unwrap();
        let q = shape.n_predictors();
        let theta = DMatrix::from_fn(2, q, |i, j| vals[i * q + j]);
        let base = part.penalty(&theta, alpha);
        prop_assert!(base >= 0.0);
        let scaled = part.penalty(&(&theta * c), alpha);
        prop_assert!((scaled - c.abs() * base).abs() <= 1e-10 * (1.0 + base));
    }

    #[test]
    fn standardize_round_trip(
        vals in proptest::collection::vec(-50.0f64..50.0, 30),
    ) {
        let raw = SeriesMatrix::new(DMatrix::from_row_slice(10, 3, &vals), 2).unwrap();
        prop_assume!(raw.values().column_iter().all(|c| c.variance() > 1e-6));
        let (z, scaling) = standardize(&raw).unwrap();
        for col in z.values().column_iter() {
            prop_assert!(col.mean().abs() < 1e-10);
            prop_assert!((col.variance() - 1.0).abs() < 1e-10);
        }
        let back = scaling.invert(&z).unwrap();
        prop_assert!((back.values() - raw.values()).amax() < 1e-10);
    }

    #[test]
    fn radius_rescaling_hits_target(
        vals in proptest::collection::vec(-1.0f64..1.0, 12),
        target in 0.05f64..0.95,
    ) {
        let phi = DMatrix::from_row_slice(2, 6, &vals);
        prop_assume!(spectral_radius(&to_companion(&phi, 3).unwrap()).unwrap() > 1e-3);
        let scaled = rescale_radius(&phi, 3, target).unwrap();
        let r = spectral_radius(&to_companion(&scaled, 3).unwrap()).unwrap();
        prop_assert!((r - target).abs() < 1e-8);
    }

    #[test]
    fn one_se_choice_is_within_band_and_sparser(
        msfe in proptest::collection::vec(0.1f64..5.0, 1..20),
        se_scale in 0.0f64..1.0,
    ) {
        let se: Vec<f64> = msfe.iter().map(|m| m * se_scale * 0.1).collect();
        let best = msfe
            .iter()
            .enumerate()
            .fold(0, |b, (i, m)| if *m < msfe[b] { i } else { b });
        let pick = one_se_select(&msfe, &se);
        prop_assert!(pick <= best);
        prop_assert!(msfe[pick] <= msfe[best] + se[best]);
        prop_assert!(msfe[..pick].iter().all(|m| *m > msfe[best] + se[best]));
    }

    #[test]
    fn geometric_grid_shape(lmax in 1e-3f64..1e3, depth in 1.5f64..1e4, n in 2usize..40) {
        let g = LambdaGrid::geometric(lmax, depth, n);
        prop_assert_eq!(g.values.len(), n);
        prop_assert_eq!(g.values[0], lmax);
        prop_assert!((g.values[n - 1] - lmax / depth).abs() <= 1e-10 * lmax);
        prop_assert!(g.values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn irf_is_linear_in_shock_size(
        vals in proptest::collection::vec(-0.4f64..0.4, 8),
        size in -5.0f64..5.0,
    ) {
        let mut coef = CoefficientSet::zeros(LagShape::new(2, 0, 2, 0), PenaltyKind::Basic);
        coef.b.columns_mut(1, 4).copy_from(&DMatrix::from_row_slice(2, 4, &vals[..8]));
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let unit = generate_irf(&coef, &sigma, 1, 1.0, 6, false).unwrap();
        let sized = generate_irf(&coef, &sigma, 1, size, 6, false).unwrap();
        prop_assert!((sized - unit * size).amax() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// A fit never does worse than zero or than the least-squares start.
    #[test]
    fn fits_beat_trivial_candidates(
        kind in kinds(),
        seed in 0u64..1000,
        frac in 0.01f64..0.9,
    ) {
        let shape = shape_for(kind);
        let n = shape.k + shape.m;
        let phi = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { 0.1 });
        let sim = simulate_var(&phi, &DMatrix::identity(n, n), 50, 100, seed).unwrap();
        let data = SeriesMatrix::new(sim.values().clone(), shape.k).unwrap();
        let reg = LagRegression::build(&data, shape.p, shape.s, HorizonMode::OneStep).unwrap();
        let part = build_partition(kind, shape, 0.5).unwrap();
        let problem = Problem::new(&reg);
        let lambda = frac * part.zero_bound(&problem.gradient_at_zero(), 0.5).max(1e-3);
        let fit = fit_penalized(&reg, &part, lambda, 0.5, &SolverOptions::default()).unwrap();
        let theta = fit.coefficients.penalized().into_owned();
        let zero = DMatrix::zeros(theta.nrows(), theta.ncols());
        let at_zero = problem.objective(&zero, &part, lambda, 0.5);
        prop_assert!(fit.objective <= at_zero * (1.0 + 1e-9));
        prop_assert!((fit.objective - problem.objective(&theta, &part, lambda, 0.5)).abs() <= 1e-9 * at_zero);
        // intercept recovers the centering
        let (ybar, zbar) = reg.means();
        let nu: DVector<f64> = ybar - &theta * zbar;
        prop_assert!((fit.coefficients.intercept() - nu).amax() < 1e-12);
    }
}
