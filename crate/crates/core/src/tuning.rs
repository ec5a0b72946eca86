//! Penalty grids and rolling-origin cross-validation.
//!
//! Row indices are 0-based. With split points `T1 < T2`, the validation
//! targets are rows `T1..T2` and the evaluation targets are rows `T2..T`.
//! The forecast for target row `τ` is made from origin `τ − h` using only
//! rows `0..=τ − h` (expanding window).

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::analysis::{direct, recurse};
use crate::benchmarks::{mean, naive_benchmarks, varx_forecast_eval, Criterion};
use crate::error::{Result, VarError};
use crate::model::{
    minnesota_shift, minnesota_unshift, CoefficientSet, LagRegression, LagShape, ModelSpec,
    SeriesMatrix,
};
use crate::penalties::{build_partition, GroupPartition};
use crate::solvers::{solve, Problem, SolverOptions};

/// Relative tolerance of the `λ_max` bisection.
pub const LAMBDA_MAX_REL_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSource {
    TheoreticalThenBisected,
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    /// Strictly decreasing.
    pub values: Vec<f64>,
    pub depth: f64,
    pub lambda_max: f64,
    pub source: GridSource,
}

impl LambdaGrid {
    /// `λ_i = λ_max · depth^{−(i−1)/(n−1)}`, `i = 1..n`.
    pub fn geometric(lambda_max: f64, depth: f64, n: usize) -> Self {
        let values = if n == 1 {
            vec![lambda_max]
        } else {
            (0..n)
                .map(|i| lambda_max * depth.powf(-(i as f64) / (n - 1) as f64))
                .collect()
        };
        Self {
            values,
            depth,
            lambda_max,
            source: GridSource::TheoreticalThenBisected,
        }
    }

    pub fn user(mut values: Vec<f64>) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        values.dedup();
        let lambda_max = values[0];
        let depth = lambda_max / values[values.len() - 1];
        Self {
            values,
            depth,
            lambda_max,
            source: GridSource::UserSupplied,
        }
    }
}

/// Closed-form starting value for `λ_max`: exact for L1 and disjoint
/// group structures, an upper bound for nested and sparse-group ones.
pub fn theoretical_lambda_max(problem: &Problem, partition: &GroupPartition, alpha: f64) -> f64 {
    partition.zero_bound(&problem.gradient_at_zero(), alpha)
}

/// Bisection between 0 and `coarse` for the smallest `λ` with an all-zero
/// fit. Returns the upper end of the final bracket, so the fit at the
/// returned value is all-zero and the fit at `λ − eps` is not.
///
/// Whether a cold-started fit stays at zero is decided by a single proximal
/// step from the origin: zero is optimal exactly when it is a fixed point.
pub fn bisect_lambda_max(
    problem: &Problem,
    partition: &GroupPartition,
    alpha: f64,
    coarse: f64,
    eps: f64,
) -> f64 {
    let grad = problem.gradient_at_zero();
    let zero = |lam: f64| partition.zero_is_optimal(&grad, lam, alpha);
    let mut high = coarse;
    if high <= 0.0 {
        return 0.0;
    }
    while !zero(high) {
        high *= 2.0;
    }
    let mut low = 0.0;
    while high - low > eps {
        let mid = 0.5 * (low + high);
        if mid <= low || mid >= high {
            break;
        }
        if zero(mid) {
            high = mid;
        } else {
            low = mid;
        }
    }
    high
}

fn prepare(
    data: &SeriesMatrix,
    spec: &ModelSpec,
) -> Result<(LagRegression, Option<Vec<f64>>)> {
    let reg = LagRegression::from_spec(data, spec)?;
    let c = spec.minnesota_targets(data.k());
    let reg = match &c {
        Some(c) => minnesota_shift(&reg, c)?,
        None => reg,
    };
    Ok((reg, c))
}

fn mixing_partition(spec: &ModelSpec, shape: LagShape, mix: f64) -> Result<GroupPartition> {
    build_partition(spec.penalty, shape, mix)
}

/// Penalty grid computed on `data` for one mixing value.
pub fn lambda_grid(data: &SeriesMatrix, spec: &ModelSpec, mix: f64) -> Result<LambdaGrid> {
    if let Some(own) = &spec.own_lambdas {
        return Ok(LambdaGrid::user(own.clone()));
    }
    let (reg, _) = prepare(data, spec)?;
    let part = mixing_partition(spec, reg.shape, mix)?;
    let problem = Problem::new(&reg);
    // For Tapered the mixing value is γ and lives in the partition; the
    // solver ignores α there.
    let alpha = mix;
    let coarse = theoretical_lambda_max(&problem, &part, alpha);
    if coarse <= 0.0 {
        return Err(VarError::InsufficientData(
            "responses are uncorrelated with every predictor; no penalty grid exists".into(),
        ));
    }
    let lmax = bisect_lambda_max(&problem, &part, alpha, coarse, coarse * LAMBDA_MAX_REL_EPS);
    Ok(LambdaGrid::geometric(lmax, spec.depth, spec.n_lambda))
}

/// The grids and index ranges a cross-validation run will use.
#[derive(Debug, Clone, PartialEq)]
pub struct CvPlan {
    /// One grid per mixing value (`α`, or `γ` for Tapered).
    pub grids: Vec<(f64, LambdaGrid)>,
    pub cv_targets: Range<usize>,
    pub oos_targets: Range<usize>,
    pub h: usize,
}

/// Validates the configuration and computes penalty grids from the rows
/// available at the first validation origin.
pub fn plan_cv(data: &SeriesMatrix, spec: &ModelSpec) -> Result<CvPlan> {
    spec.validate(data)?;
    let n = data.n_obs();
    let (t1, t2) = spec.split_points(n);
    let h = spec.h;
    if t1 < h {
        return Err(VarError::InsufficientData(format!(
            "T1 = {t1} leaves no forecast origin for h = {h}"
        )));
    }
    let first_origin = t1 - h;
    let head = data.head(first_origin + 1);
    let grids = spec
        .mixing_grid(data.k())
        .into_iter()
        .map(|mix| Ok((mix, lambda_grid(&head, spec, mix)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(CvPlan {
        grids,
        cv_targets: t1..t2,
        oos_targets: t2..n,
        h,
    })
}

/// Fits and forecasts of one `(α, λ)` cell over consecutive origins.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTrace {
    pub alpha_index: usize,
    pub lambda_index: usize,
    /// Coefficients fitted at each origin, in target order.
    pub fits: Vec<DMatrix<f64>>,
    pub forecasts: Vec<DVector<f64>>,
    pub nonconverged: usize,
}

/// Runs one cell over `targets`, warm-starting each origin from the
/// previous one.
fn run_cell(
    data: &SeriesMatrix,
    spec: &ModelSpec,
    mix: f64,
    lambda: f64,
    targets: Range<usize>,
    opts: &SolverOptions,
) -> Result<(Vec<DMatrix<f64>>, Vec<DVector<f64>>, usize)> {
    let h = spec.h;
    let shape = spec.shape(data);
    let partition = mixing_partition(spec, shape, mix)?;
    let alpha = mix;
    let iterated = spec.iterated(&shape);
    let mut fits = Vec::with_capacity(targets.len());
    let mut forecasts = Vec::with_capacity(targets.len());
    let mut nonconverged = 0;
    let mut warm: Option<CoefficientSet> = opts.warm_start.clone();
    for target in targets {
        let origin = target - h;
        let train = data.head(origin + 1);
        let (reg, c) = prepare(&train, spec)?;
        let problem = Problem::new(&reg);
        let local = SolverOptions {
            warm_start: warm.take(),
            ..opts.clone()
        };
        let fit = solve(&problem, &partition, lambda, alpha, &local)?;
        if !fit.converged {
            nonconverged += 1;
        }
        warm = Some(fit.coefficients.clone());
        let mut coef = fit.coefficients;
        if let Some(c) = &c {
            minnesota_unshift(&mut coef, c)?;
        }
        let yhat = if iterated {
            recurse(&coef.b, &shape, &train, origin, h, None)
                .row(h - 1)
                .transpose()
        } else {
            direct(&coef.b, &shape, &train, origin)
        };
        fits.push(coef.b);
        forecasts.push(yhat);
    }
    Ok((fits, forecasts, nonconverged))
}

/// Evaluates every `(α, λ)` cell of `plan` over `targets`. Cells run in
/// parallel; the output order is `α`-major, then `λ` in grid order.
pub fn cv_trace(
    data: &SeriesMatrix,
    spec: &ModelSpec,
    plan: &CvPlan,
    targets: Range<usize>,
    opts: &SolverOptions,
) -> Result<Vec<CellTrace>> {
    let cells: Vec<(usize, usize)> = plan
        .grids
        .iter()
        .enumerate()
        .flat_map(|(a, (_, g))| (0..g.values.len()).map(move |l| (a, l)))
        .collect();
    cells
        .into_par_iter()
        .map(|(a, l)| {
            let (mix, grid) = &plan.grids[a];
            let (fits, forecasts, nonconverged) =
                run_cell(data, spec, *mix, grid.values[l], targets.clone(), opts)?;
            Ok(CellTrace {
                alpha_index: a,
                lambda_index: l,
                fits,
                forecasts,
                nonconverged,
            })
        })
        .collect()
}

/// Cross-validation curve for one mixing value.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaGrid {
    pub alpha: f64,
    pub lambdas: Vec<f64>,
    pub msfe: Vec<f64>,
    pub se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkMsfe {
    pub mean: f64,
    pub random_walk: f64,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub optimal_lambda: f64,
    pub optimal_index: usize,
    /// `α` (sparse-group kinds) or `γ` (Tapered) at the optimum.
    pub optimal_alpha: f64,
    pub optimal_alpha_index: usize,
    /// Validation-window MSFE at the selected penalty.
    pub in_sample_msfe: f64,
    pub oos_msfe: f64,
    pub oos_errors: Vec<f64>,
    pub oos_forecasts: Vec<DVector<f64>>,
    pub grids: Vec<AlphaGrid>,
    pub benchmarks: BenchmarkMsfe,
    pub final_coefficients: CoefficientSet,
    pub cv_targets: Range<usize>,
    pub oos_targets: Range<usize>,
    /// Fits that hit the iteration limit anywhere in the run.
    pub nonconverged_fits: usize,
}

/// Largest `λ` (smallest index) whose MSFE is within one standard error
/// of the minimum.
pub fn one_se_select(msfe: &[f64], se: &[f64]) -> usize {
    let best = argmin(msfe);
    let threshold = msfe[best] + se[best];
    msfe.iter().position(|&m| m <= threshold).unwrap_or(best)
}

fn argmin(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x < xs[best] {
            best = i;
        }
    }
    best
}

fn standard_error(errs: &[f64]) -> f64 {
    let n = errs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(errs);
    let var = errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Rolling cross-validation over the penalty grid(s), followed by an
/// out-of-sample evaluation at the selected penalty and the benchmarks on
/// the same targets.
pub fn rolling_cv(data: &SeriesMatrix, spec: &ModelSpec, opts: &SolverOptions) -> Result<CvReport> {
    opts.validate()?;
    let plan = plan_cv(data, spec)?;
    let traces = cv_trace(data, spec, &plan, plan.cv_targets.clone(), opts)?;
    let mut nonconverged: usize = traces.iter().map(|t| t.nonconverged).sum();

    let mut grids: Vec<AlphaGrid> = plan
        .grids
        .iter()
        .map(|(a, g)| AlphaGrid {
            alpha: *a,
            lambdas: g.values.clone(),
            msfe: vec![0.0; g.values.len()],
            se: vec![0.0; g.values.len()],
        })
        .collect();
    for tr in &traces {
        let errs: Vec<f64> = tr
            .forecasts
            .iter()
            .zip(plan.cv_targets.clone())
            .map(|(f, t)| (f - data.y(t)).norm_squared())
            .collect();
        grids[tr.alpha_index].msfe[tr.lambda_index] = mean(&errs);
        grids[tr.alpha_index].se[tr.lambda_index] = standard_error(&errs);
    }

    let (mut best_a, mut best_l) = (0, argmin(&grids[0].msfe));
    for (a, g) in grids.iter().enumerate().skip(1) {
        let l = argmin(&g.msfe);
        if g.msfe[l] < grids[best_a].msfe[best_l] {
            best_a = a;
            best_l = l;
        }
    }
    if spec.one_se {
        best_l = one_se_select(&grids[best_a].msfe, &grids[best_a].se);
    }
    let alpha = grids[best_a].alpha;
    let lambda = grids[best_a].lambdas[best_l];

    let (_, oos_forecasts, nc) =
        run_cell(data, spec, alpha, lambda, plan.oos_targets.clone(), opts)?;
    nonconverged += nc;
    let oos_errors: Vec<f64> = oos_forecasts
        .iter()
        .zip(plan.oos_targets.clone())
        .map(|(f, t)| (f - data.y(t)).norm_squared())
        .collect();

    let naive = naive_benchmarks(data, plan.oos_targets.clone(), spec.h)?;
    let (aic, bic) = if spec.ic_benchmarks {
        let s_max = if data.m() > 0 { spec.s } else { 0 };
        let eval = |c| varx_forecast_eval(data, spec.p, s_max, plan.oos_targets.clone(), c, spec.h);
        (
            Some(mean(&eval(Criterion::Aic)?)),
            Some(mean(&eval(Criterion::Bic)?)),
        )
    } else {
        (None, None)
    };

    let mut fixed = spec.clone();
    fixed.own_lambdas = Some(vec![lambda]);
    fixed.alpha_grid = Some(vec![alpha]);
    let final_coefficients = estimate_fixed(data, &fixed, opts)?
        .pop()
        .expect("one penalty requested");

    Ok(CvReport {
        optimal_lambda: lambda,
        optimal_index: best_l,
        optimal_alpha: alpha,
        optimal_alpha_index: best_a,
        in_sample_msfe: grids[best_a].msfe[best_l],
        oos_msfe: mean(&oos_errors),
        oos_errors,
        oos_forecasts,
        grids,
        benchmarks: BenchmarkMsfe {
            mean: naive.mean_msfe(),
            random_walk: naive.rw_msfe(),
            aic,
            bic,
        },
        final_coefficients,
        cv_targets: plan.cv_targets,
        oos_targets: plan.oos_targets,
        nonconverged_fits: nonconverged,
    })
}

/// Full-sample fits at each of `spec.own_lambdas`, in the order given,
/// each from a cold start. Uses the first mixing value.
pub fn estimate_fixed(
    data: &SeriesMatrix,
    spec: &ModelSpec,
    opts: &SolverOptions,
) -> Result<Vec<CoefficientSet>> {
    let lambdas = spec
        .own_lambdas
        .as_ref()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| VarError::InvalidSpec("estimation needs at least one penalty value".into()))?;
    if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(VarError::InvalidSpec("penalty values must be positive".into()));
    }
    let mix = spec.mixing_grid(data.k())[0];
    let (reg, c) = prepare(data, spec)?;
    let partition = mixing_partition(spec, reg.shape, mix)?;
    let problem = Problem::new(&reg);
    let cold = SolverOptions {
        warm_start: None,
        ..opts.clone()
    };
    lambdas
        .iter()
        .map(|&lam| {
            let mut coef = solve(&problem, &partition, lam, mix, &cold)?.coefficients;
            if let Some(c) = &c {
                minnesota_unshift(&mut coef, c)?;
            }
            Ok(coef)
        })
        .collect()
}
