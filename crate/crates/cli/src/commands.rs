use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sparsevar::analysis::{export_diagnostics, forecast, generate_irf};
use sparsevar::benchmarks::{select_order_ic, Criterion};
use sparsevar::refit::{
    ifgls, relaxed_ls, restriction_from_fit, weighted_relaxed_ls, DEFAULT_EPS2, DEFAULT_MAX_ITER,
};
use sparsevar::simulate::{simulate_var, DEFAULT_BURN_IN};
use sparsevar::solvers::SolverOptions;
use sparsevar::tuning::{estimate_fixed, rolling_cv};
use sparsevar::{
    standardize, CoefficientSet, HorizonMode, LagRegression, ModelSpec, PenaltyKind, RefitMode,
    Scaling, SeriesMatrix,
};

use crate::error::{CliError, CliResult};
use crate::files::{
    coefficients_csv, matrix_csv, matrix_from_rows, read_table, rows_of, series_from_table,
    to_json, write_text, AlphaCurve, BenchmarkBlock, Config, CurvePoint, ModelFile, Report,
    SimSpec, FORMAT_VERSION,
};
use crate::svg;

struct Prepared {
    series: SeriesMatrix,
    scaling: Option<Scaling>,
    spec: ModelSpec,
    opts: SolverOptions,
    config: Config,
}

fn prepare(data: &Path, config: &Path) -> CliResult<Prepared> {
    let config = Config::load(config)?;
    let raw = series_from_table(read_table(data)?, config.k)?;
    let (series, scaling) = if config.standardize {
        let (s, sc) = standardize(&raw)?;
        (s, Some(sc))
    } else {
        (raw, None)
    };
    let opts = SolverOptions {
        tol: config.tol,
        max_iter: config.max_iter,
        ..SolverOptions::default()
    };
    let spec = config.spec();
    spec.validate(&series)?;
    Ok(Prepared {
        series,
        scaling,
        spec,
        opts,
        config,
    })
}

fn labels(series: &SeriesMatrix) -> Vec<String> {
    match series.labels() {
        Some(l) => l.to_vec(),
        None => (1..=series.values().ncols()).map(|i| format!("y{i}")).collect(),
    }
}

fn create_dir(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::data(format!("cannot create {}: {e}", out.display())))
}

/// Residual covariance `UU'/teff` of `coef` on the estimation design.
fn residual_cov(series: &SeriesMatrix, spec: &ModelSpec, coef: &CoefficientSet) -> CliResult<DMatrix<f64>> {
    let reg = LagRegression::from_spec(series, spec)?;
    let resid = &reg.y - &coef.b * &reg.z;
    Ok(&resid * resid.transpose() / reg.teff as f64)
}

/// Refits the support of a Basic VAR fit; returns the new coefficients and
/// the innovation covariance with denominator `T − pk`.
fn refit_support(
    series: &SeriesMatrix,
    coef: &CoefficientSet,
    method: RefitMode,
    eps1: f64,
) -> CliResult<(CoefficientSet, DMatrix<f64>)> {
    if coef.structure != PenaltyKind::Basic {
        return Err(CliError::usage(format!(
            "refitting is only offered for the Basic structure, model uses {}",
            coef.structure
        )));
    }
    if coef.shape.is_varx() {
        return Err(CliError::usage("refitting requires a VAR model without exogenous series"));
    }
    let reg = LagRegression::build(series, coef.shape.p, 0, HorizonMode::OneStep)?;
    let map = restriction_from_fit(coef, eps1)?;
    let k = coef.shape.k;
    let dof = reg.teff as isize - (coef.shape.p * k) as isize;
    if dof <= 0 {
        return Err(CliError::data("too few observations to estimate the innovation covariance"));
    }
    let resid_cov = |c: &CoefficientSet| {
        let u = &reg.y - &c.b * &reg.z;
        &u * u.transpose() / dof as f64
    };
    let (mut out, sigma) = match method {
        RefitMode::None => return Ok((coef.clone(), resid_cov(coef))),
        RefitMode::Rls => {
            let c = relaxed_ls(&reg, &map)?;
            let s = resid_cov(&c);
            (c, s)
        }
        RefitMode::Wls => {
            let var: Vec<f64> = (0..k)
                .map(|j| {
                    let col = series.values().column(j);
                    let mu = col.mean();
                    col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / col.len() as f64
                })
                .collect();
            let c = weighted_relaxed_ls(&reg, &map, &var)?;
            let s = resid_cov(&c);
            (c, s)
        }
        RefitMode::Ifgls => {
            let fit = ifgls(&reg, &map, &DMatrix::identity(k, k), DEFAULT_EPS2, DEFAULT_MAX_ITER)?;
            if !fit.converged {
                eprintln!(
                    "warning: covariance iteration stopped after {} passes without settling",
                    fit.iterations
                );
            }
            (fit.coefficients, fit.sigma)
        }
    };
    out.structure = coef.structure;
    out.lambda = coef.lambda;
    out.alpha = coef.alpha;
    Ok((out, sigma))
}

fn model_file(
    series: &SeriesMatrix,
    coef: &CoefficientSet,
    sigma: &DMatrix<f64>,
    scaling: Option<Scaling>,
    refit: RefitMode,
) -> ModelFile {
    let shape = coef.shape;
    let keep = shape.max_lag().max(1).min(series.n_obs());
    let tail = series.values().rows(series.n_obs() - keep, keep).into_owned();
    ModelFile {
        format_version: FORMAT_VERSION,
        structure: coef.structure,
        k: shape.k,
        m: shape.m,
        p: shape.p,
        s: shape.s,
        lambda: coef.lambda,
        alpha: coef.alpha,
        labels: labels(series),
        coefficients: rows_of(&coef.b),
        sigma_u: rows_of(sigma),
        scaling,
        history: rows_of(&tail),
        refit,
    }
}

pub fn cv(data: &Path, config: &Path, out: &Path) -> CliResult<()> {
    let Prepared {
        series,
        scaling,
        spec,
        opts,
        config,
    } = prepare(data, config)?;
    let report = rolling_cv(&series, &spec, &opts)?;
    let diag = export_diagnostics(&report);
    let names = labels(&series);

    let mut coef = report.final_coefficients.clone();
    let mut sigma = residual_cov(&series, &spec, &coef)?;
    if config.refit != RefitMode::None {
        (coef, sigma) = refit_support(&series, &coef, config.refit, 0.0)?;
    }

    let doc = Report {
        format_version: FORMAT_VERSION,
        penalty: spec.penalty,
        optimal_lambda: report.optimal_lambda,
        optimal_alpha: report.optimal_alpha,
        optimal_index: report.optimal_index,
        grid_position: diag.grid_position,
        in_sample_msfe: report.in_sample_msfe,
        oos_msfe: report.oos_msfe,
        benchmarks: BenchmarkBlock {
            mean: report.benchmarks.mean,
            random_walk: report.benchmarks.random_walk,
            aic: report.benchmarks.aic,
            bic: report.benchmarks.bic,
        },
        cv_targets: [report.cv_targets.start, report.cv_targets.end],
        oos_targets: [report.oos_targets.start, report.oos_targets.end],
        nonconverged_fits: report.nonconverged_fits,
        refit: config.refit,
        curves: report
            .grids
            .iter()
            .map(|g| AlphaCurve {
                alpha: g.alpha,
                points: g
                    .lambdas
                    .iter()
                    .zip(&g.msfe)
                    .zip(&g.se)
                    .map(|((l, m), s)| CurvePoint {
                        lambda: *l,
                        msfe: *m,
                        se: *s,
                    })
                    .collect(),
            })
            .collect(),
    };
    if report.nonconverged_fits > 0 {
        eprintln!(
            "warning: {} fits reached the iteration limit",
            report.nonconverged_fits
        );
    }

    create_dir(out)?;
    write_text(&out.join("report.json"), &to_json(&doc))?;
    write_text(&out.join("coefficients.csv"), &coefficients_csv(&coef, &names))?;
    write_text(
        &out.join("model.json"),
        &to_json(&model_file(&series, &coef, &sigma, scaling, config.refit)),
    )?;
    let lag_width = coef.shape.k;
    write_text(
        &out.join("sparsity.svg"),
        &svg::sparsity_heatmap(&diag.sparsity_grid, &names[..coef.shape.k], lag_width),
    )?;
    write_text(
        &out.join("lambda_curve.svg"),
        &svg::lambda_curve(&diag.lambda_curve, report.optimal_index),
    )?;
    Ok(())
}

pub fn fit(data: &Path, config: &Path, lambdas: &[f64], out: &Path) -> CliResult<()> {
    let Prepared {
        series,
        scaling,
        mut spec,
        opts,
        ..
    } = prepare(data, config)?;
    spec.own_lambdas = Some(lambdas.to_vec());
    let fits = estimate_fixed(&series, &spec, &opts)?;
    let names = labels(&series);
    create_dir(out)?;
    for (i, coef) in fits.iter().enumerate() {
        let sigma = residual_cov(&series, &spec, coef)?;
        write_text(
            &out.join(format!("coefficients_{}.csv", i + 1)),
            &coefficients_csv(coef, &names),
        )?;
        write_text(
            &out.join(format!("model_{}.json", i + 1)),
            &to_json(&model_file(&series, coef, &sigma, scaling.clone(), RefitMode::None)),
        )?;
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn predict(model: &Path, n_ahead: usize, newx: Option<&Path>, out: Option<&Path>) -> CliResult<()> {
    if n_ahead == 0 {
        return Err(CliError::usage("--n-ahead must be at least 1"));
    }
    let mf = ModelFile::load(model)?;
    let coef = mf.coefficient_set()?;
    let history = mf.history_series()?;
    let future = match newx {
        Some(path) => {
            let mut x = read_table(path)?.values;
            if x.ncols() != mf.m {
                return Err(CliError::data(format!(
                    "{} has {} columns, the model has {} exogenous series",
                    path.display(),
                    x.ncols(),
                    mf.m
                )));
            }
            if let Some(sc) = &mf.scaling {
                for (j, mut col) in x.column_iter_mut().enumerate() {
                    let (mu, sd) = (sc.mean[mf.k + j], sc.sd[mf.k + j]);
                    col.apply(|v| *v = (*v - mu) / sd);
                }
            }
            Some(x)
        }
        None => None,
    };
    let mut fc = forecast(&coef, &history, n_ahead, future.as_ref())?;
    if let Some(sc) = &mf.scaling {
        fc = sc.invert_endogenous(&fc);
    }
    emit(out, &matrix_csv("h", &mf.labels[..mf.k], &fc, 1))
}

pub fn simulate(spec: &Path, seed: u64, t: usize, out: Option<&Path>) -> CliResult<()> {
    let sim = SimSpec::load(spec)?;
    let phi = matrix_from_rows(&sim.phi, "phi")?;
    let sigma = matrix_from_rows(&sim.sigma, "sigma")?;
    let k = phi.nrows();
    let names = sim
        .labels
        .clone()
        .unwrap_or_else(|| (1..=k).map(|i| format!("y{i}")).collect());
    if names.len() != k {
        return Err(CliError::usage(format!("{} labels for {k} series", names.len())));
    }
    let series = simulate_var(&phi, &sigma, t, sim.burn_in.unwrap_or(DEFAULT_BURN_IN), seed)?;
    emit(out, &matrix_csv("t", &names, series.values(), 1))
}

pub fn irf(
    model: &Path,
    shock: &str,
    size: f64,
    periods: usize,
    unit_diagonal: bool,
    out: Option<&Path>,
) -> CliResult<()> {
    let mf = ModelFile::load(model)?;
    let j = match mf.labels[..mf.k].iter().position(|l| l == shock) {
        Some(j) => j,
        None => shock
            .parse::<usize>()
            .ok()
            .filter(|&j| j < mf.k)
            .ok_or_else(|| {
                CliError::usage(format!(
                    "shock '{shock}' is neither a series label nor an index below {}",
                    mf.k
                ))
            })?,
    };
    let coef = mf.coefficient_set()?;
    let sigma = mf.sigma()?;
    let scaled_size = match &mf.scaling {
        Some(sc) => size / sc.sd[j],
        None => size,
    };
    let mut resp = generate_irf(&coef, &sigma, j, scaled_size, periods, unit_diagonal)?;
    if let Some(sc) = &mf.scaling {
        for (i, mut col) in resp.column_iter_mut().enumerate() {
            col *= sc.sd[i];
        }
    }
    emit(out, &matrix_csv("horizon", &mf.labels[..mf.k], &resp, 0))
}

#[derive(Debug, Serialize, Deserialize)]
struct BenchmarkOutput {
    format_version: u32,
    criterion: Criterion,
    p: usize,
    s: usize,
    /// Rows are endogenous lag orders `0..=pmax`, columns exogenous `0..=smax`.
    ic_table: Vec<Vec<f64>>,
    coefficients: Vec<Vec<f64>>,
    sigma_u: Vec<Vec<f64>>,
    rank_deficient: bool,
}

pub fn benchmark(
    data: &Path,
    k: Option<usize>,
    pmax: usize,
    smax: usize,
    criterion: Criterion,
    out: Option<&Path>,
) -> CliResult<()> {
    let series = series_from_table(read_table(data)?, k)?;
    let smax = if series.m() == 0 { 0 } else { smax };
    let sel = select_order_ic(&series, pmax, smax, criterion)?;
    let doc = BenchmarkOutput {
        format_version: FORMAT_VERSION,
        criterion,
        p: sel.p,
        s: sel.s,
        ic_table: rows_of(&sel.table),
        coefficients: rows_of(&sel.fit.b),
        sigma_u: rows_of(&sel.fit.sigma_u),
        rank_deficient: sel.fit.rank_deficient,
    };
    emit(out, &to_json(&doc))
}

pub fn refit(model: &Path, data: &Path, method: RefitMode, eps1: f64, out: Option<&Path>) -> CliResult<()> {
    let mf = ModelFile::load(model)?;
    let raw = series_from_table(read_table(data)?, Some(mf.k))?;
    if raw.values().ncols() != mf.k + mf.m {
        return Err(CliError::data(format!(
            "data has {} columns, the model expects {}",
            raw.values().ncols(),
            mf.k + mf.m
        )));
    }
    let series = match &mf.scaling {
        Some(sc) => sc.apply(&raw)?,
        None => raw,
    };
    let coef = mf.coefficient_set()?;
    let (new, sigma) = refit_support(&series, &coef, method, eps1)?;
    let mut doc = model_file(&series, &new, &sigma, mf.scaling.clone(), method);
    doc.labels = mf.labels.clone();
    emit(out, &to_json(&doc))
}

/// Parses `0.5,0.1` style lists.
pub fn parse_lambdas(s: &str) -> CliResult<Vec<f64>> {
    let vals = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| CliError::usage(format!("cannot parse penalty list '{s}'")))?;
    if vals.is_empty() || vals.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(CliError::usage("penalties must be positive numbers"));
    }
    Ok(vals)
}
