//! Least-squares VAR/VARX benchmarks: QR fitting, AIC/BIC order selection,
//! rolling evaluation and the sample-mean and random-walk baselines.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{direct, recurse};
use crate::error::{Result, VarError};
use crate::linalg::{logdet_psd, lstsq_qr};
use crate::model::{CoefficientSet, HorizonMode, LagRegression, LagShape, PenaltyKind, SeriesMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    /// `k × (kp + ms + 1)`, same layout as [`CoefficientSet::b`].
    pub b: DMatrix<f64>,
    pub sigma_u: DMatrix<f64>,
    pub shape: LagShape,
    pub rank_deficient: bool,
}

impl LeastSquaresFit {
    pub fn to_coefficients(&self) -> CoefficientSet {
        CoefficientSet {
            b: self.b.clone(),
            lambda: 0.0,
            alpha: 0.0,
            shape: self.shape,
            structure: PenaltyKind::Basic,
        }
    }
}

/// Unrestricted least squares `B̂ = (R11⁻¹ R12)'`, `Σ̂ = R22'R22 / teff`
/// from one QR factorization of `[Z', Y']`.
pub fn varx_fit_qr(reg: &LagRegression) -> Result<LeastSquaresFit> {
    fit_columns(reg, &(0..reg.shape.n_cols()).collect::<Vec<_>>(), reg.shape)
}

/// Fits on a subset of the rows of `Z` and scatters into `shape`'s layout.
/// `cols` must list the intercept and the retained predictors in the order
/// they appear in `shape`.
fn fit_columns(reg: &LagRegression, cols: &[usize], shape: LagShape) -> Result<LeastSquaresFit> {
    let x = DMatrix::from_fn(reg.teff, cols.len(), |t, j| reg.z[(cols[j], t)]);
    let y = reg.y.transpose();
    let sol = lstsq_qr(&x, &y)?;
    let b = sol.coef.transpose();
    debug_assert_eq!(b.ncols(), shape.n_cols());
    Ok(LeastSquaresFit {
        b,
        sigma_u: sol.rss / reg.teff as f64,
        shape,
        rank_deficient: sol.rank_deficient,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl std::str::FromStr for Criterion {
    type Err = VarError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            _ => Err(VarError::InvalidSpec(format!("unknown criterion `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcSelection {
    pub p: usize,
    pub s: usize,
    pub fit: LeastSquaresFit,
    /// `IC[i, j]` for `i = 0..=p_max`, `j = 0..=s_max`.
    pub table: DMatrix<f64>,
}

/// Information-criterion order selection over `0..=p_max × 0..=s_max`.
///
/// Every candidate is fitted on the same sample, trimmed to the largest lag
/// order, and scored as `log|Σ̂| + c_T · k(ki + mj + 1) / (T − max(i, j))` with
/// `c_T = 2` (AIC) or `log(T − max(i, j))` (BIC).
pub fn select_order_ic(
    data: &SeriesMatrix,
    p_max: usize,
    s_max: usize,
    criterion: Criterion,
) -> Result<IcSelection> {
    select_order_ic_mode(data, p_max, s_max, criterion, HorizonMode::OneStep)
}

pub fn select_order_ic_mode(
    data: &SeriesMatrix,
    p_max: usize,
    s_max: usize,
    criterion: Criterion,
    mode: HorizonMode,
) -> Result<IcSelection> {
    let full = LagShape::new(data.k(), data.m(), p_max, s_max);
    let reg = LagRegression::build(data, full.p, full.s, mode)?;
    let (k, m) = (full.k, full.m);
    let n = data.n_obs() as f64;
    let mut table = DMatrix::from_element(full.p + 1, full.s + 1, f64::INFINITY);
    let mut best: Option<(f64, usize, usize, LeastSquaresFit)> = None;
    for i in 0..=full.p {
        for j in 0..=full.s {
            let shape = LagShape::new(k, m, i, j);
            let mut cols = vec![0];
            cols.extend((1..=i).flat_map(|l| (0..k).map(move |e| full.phi_col(l, e))));
            cols.extend((1..=j).flat_map(|l| (0..m).map(move |e| full.beta_col(l, e))));
            let fit = fit_columns(&reg, &cols, shape)?;
            let denom = n - i.max(j) as f64;
            let nparams = (k * (k * i + m * j + 1)) as f64;
            let c = match criterion {
                Criterion::Aic => 2.0,
                Criterion::Bic => denom.ln(),
            };
            let ic = logdet_psd(&fit.sigma_u) + c * nparams / denom;
            table[(i, j)] = ic;
            let better = match &best {
                None => true,
                Some((b, ..)) => ic < *b,
            };
            if better {
                best = Some((ic, i, j, fit));
            }
        }
    }
    let (_, p, s, fit) = best.expect("at least the intercept-only candidate");
    Ok(IcSelection { p, s, fit, table })
}

fn sq_err(a: &DVector<f64>, data: &SeriesMatrix, row: usize) -> f64 {
    (a - data.y(row)).norm_squared()
}

/// Rolling evaluation of the information-criterion benchmark.
///
/// For every target row in `targets`, the order is reselected and the model
/// refitted on rows up to `target − h`. VAR forecasts are iterated; VARX
/// forecasts come from a direct `h`-step design. Returns per-target squared
/// errors `‖ŷ − y‖²`.
pub fn varx_forecast_eval(
    data: &SeriesMatrix,
    p_max: usize,
    s_max: usize,
    targets: Range<usize>,
    criterion: Criterion,
    h: usize,
) -> Result<Vec<f64>> {
    check_targets(data, &targets, h)?;
    let varx = data.m() > 0 && s_max > 0;
    targets
        .into_par_iter()
        .map(|target| {
            let origin = target - h;
            let train = data.head(origin + 1);
            let mode = if varx {
                HorizonMode::Direct(h)
            } else {
                HorizonMode::OneStep
            };
            let sel = select_order_ic_mode(&train, p_max, s_max, criterion, mode)?;
            let yhat = if varx {
                direct(&sel.fit.b, &sel.fit.shape, &train, origin)
            } else {
                recurse(&sel.fit.b, &sel.fit.shape, &train, origin, h, None)
                    .row(h - 1)
                    .transpose()
            };
            Ok(sq_err(&yhat, data, target))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct NaiveErrors {
    pub mean: Vec<f64>,
    pub random_walk: Vec<f64>,
}

impl NaiveErrors {
    pub fn mean_msfe(&self) -> f64 {
        mean(&self.mean)
    }

    pub fn rw_msfe(&self) -> f64 {
        mean(&self.random_walk)
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Expanding-window sample mean and random-walk (`ŷ_{t+h} = y_t`) errors.
pub fn naive_benchmarks(data: &SeriesMatrix, targets: Range<usize>, h: usize) -> Result<NaiveErrors> {
    check_targets(data, &targets, h)?;
    let mut out = NaiveErrors {
        mean: Vec::with_capacity(targets.len()),
        random_walk: Vec::with_capacity(targets.len()),
    };
    let k = data.k();
    let mut sum = DVector::zeros(k);
    let mut counted = 0;
    for target in targets {
        let origin = target - h;
        while counted <= origin {
            sum += data.y(counted);
            counted += 1;
        }
        let avg = &sum / counted as f64;
        out.mean.push(sq_err(&avg, data, target));
        out.random_walk.push(sq_err(&data.y(origin), data, target));
    }
    Ok(out)
}

fn check_targets(data: &SeriesMatrix, targets: &Range<usize>, h: usize) -> Result<()> {
    if h == 0 {
        return Err(VarError::InvalidSpec("h must be at least 1".into()));
    }
    if targets.start < h || targets.end > data.n_obs() || targets.is_empty() {
        return Err(VarError::InsufficientData(format!(
            "evaluation targets {targets:?} with h = {h} do not fit {} observations",
            data.n_obs()
        )));
    }
    Ok(())
}
