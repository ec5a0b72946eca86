//! Forecasting, impulse responses and diagnostic exports.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarError};
use crate::linalg::cholesky_lower;
use crate::model::{lag_vector, lag_vector_in, CoefficientSet, LagShape, SeriesMatrix};
use crate::simulate::to_companion;
use crate::tuning::CvReport;

/// Iterated forecasts for horizons `1..=n_ahead` (rows) from the end of
/// `history`.
///
/// VARX models need future exogenous rows in `newx` (row `r` holds
/// `x_{T+1+r}`) whenever `n_ahead > 1`.
pub fn forecast(
    coef: &CoefficientSet,
    history: &SeriesMatrix,
    n_ahead: usize,
    newx: Option<&DMatrix<f64>>,
) -> Result<DMatrix<f64>> {
    let shape = coef.shape;
    if history.k() != shape.k || (shape.is_varx() && history.m() != shape.m) {
        return Err(VarError::DimensionMismatch(format!(
            "history has {} endogenous and {} exogenous columns; model expects {} and {}",
            history.k(),
            history.m(),
            shape.k,
            shape.m
        )));
    }
    let needed = shape.max_lag();
    if history.n_obs() < needed {
        return Err(VarError::InsufficientHistory {
            needed,
            got: history.n_obs(),
        });
    }
    if shape.is_varx() && n_ahead > 1 {
        let got = newx.map_or(0, |x| x.nrows());
        if got < n_ahead {
            return Err(VarError::MissingExogenousFutures {
                n_ahead,
                needed: n_ahead,
                got,
            });
        }
        if let Some(x) = newx {
            if x.ncols() != shape.m {
                return Err(VarError::DimensionMismatch(format!(
                    "new exogenous data has {} columns, expected {}",
                    x.ncols(),
                    shape.m
                )));
            }
        }
    }
    let futures = if shape.is_varx() { newx } else { None };
    Ok(recurse(&coef.b, &shape, history, history.n_obs() - 1, n_ahead, futures))
}

/// Runs the one-step recursion from data row `origin`, returning `steps × k`
/// forecasts. Only rows `origin + 1 − max_lag ..= origin` of `data` are read.
pub(crate) fn recurse(
    b: &DMatrix<f64>,
    shape: &LagShape,
    data: &SeriesMatrix,
    origin: usize,
    steps: usize,
    futures: Option<&DMatrix<f64>>,
) -> DMatrix<f64> {
    let lag = shape.max_lag().max(1);
    let width = data.values().ncols();
    let start = origin + 1 - lag.min(origin + 1);
    let base = origin + 1 - start;
    let mut window = DMatrix::from_element(base + steps, width, f64::NAN);
    window
        .rows_mut(0, base)
        .copy_from(&data.values().rows(start, base));
    if let Some(x) = futures {
        for r in 0..steps.min(x.nrows()) {
            for j in 0..shape.m {
                window[(base + r, shape.k + j)] = x[(r, j)];
            }
        }
    }
    let mut out = DMatrix::zeros(steps, shape.k);
    for step in 0..steps {
        let yhat = b * lag_vector_in(&window, base - 1 + step, shape);
        for j in 0..shape.k {
            window[(base + step, j)] = yhat[j];
            out[(step, j)] = yhat[j];
        }
    }
    out
}

/// Single forecast `B z_t` from the predictor column at data row `origin`.
pub(crate) fn direct(b: &DMatrix<f64>, shape: &LagShape, data: &SeriesMatrix, origin: usize) -> DVector<f64> {
    b * lag_vector(data, origin, shape)
}

/// Orthogonalized impulse responses, `n_periods × k`; row `i` is the
/// response at horizon `i` to a shock of `shock_size` in `shock_series`.
///
/// With `unit_diagonal` the Cholesky factor is rescaled to unit diagonal
/// (`W = C D⁻¹`), so the shock is measured in units of the series itself.
pub fn generate_irf(
    coef: &CoefficientSet,
    sigma_u: &DMatrix<f64>,
    shock_series: usize,
    shock_size: f64,
    n_periods: usize,
    unit_diagonal: bool,
) -> Result<DMatrix<f64>> {
    let shape = coef.shape;
    if shape.is_varx() {
        return Err(VarError::NonVarModel);
    }
    let k = shape.k;
    if shock_series >= k {
        return Err(VarError::DimensionMismatch(format!(
            "shock series {shock_series} out of range for k = {k}"
        )));
    }
    if sigma_u.shape() != (k, k) {
        return Err(VarError::DimensionMismatch("Σ must be k x k".into()));
    }
    let mut c = cholesky_lower(sigma_u)?;
    if unit_diagonal {
        for j in 0..k {
            let d = c[(j, j)];
            c.column_mut(j).scale_mut(1.0 / d);
        }
    }
    let a = to_companion(&coef.phi_all(), shape.p)?;
    let impulse = c.column(shock_series) * shock_size;
    let mut state = DVector::zeros(k * shape.p);
    state.rows_mut(0, k).copy_from(&impulse);
    let mut out = DMatrix::zeros(n_periods, k);
    for i in 0..n_periods {
        if i > 0 {
            state = &a * state;
        }
        out.row_mut(i).copy_from(&state.rows(0, k).transpose());
    }
    Ok(out)
}

/// MA coefficient matrices `Γ_i = J Aⁱ J'` for `i = 0..n`.
pub fn ma_coefficients(coef: &CoefficientSet, n: usize) -> Result<Vec<DMatrix<f64>>> {
    if coef.shape.is_varx() {
        return Err(VarError::NonVarModel);
    }
    let k = coef.shape.k;
    let a = to_companion(&coef.phi_all(), coef.shape.p)?;
    let mut power = DMatrix::identity(a.nrows(), a.nrows());
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(power.view((0, 0), (k, k)).into_owned());
        power = &a * power;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridPosition {
    Interior,
    /// Selected the smallest penalty; a deeper grid may help.
    AtMinBoundary,
    /// Selected the largest penalty.
    AtMaxBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    /// `[Φ̂, β̂]` without the intercept.
    pub sparsity_grid: DMatrix<f64>,
    /// `(λ_i, MSFE_i, SE_i)` for the selected `α`.
    pub lambda_curve: Vec<(f64, f64, f64)>,
    pub grid_position: GridPosition,
}

pub fn grid_position(index: usize, n: usize) -> GridPosition {
    if n > 1 && index + 1 == n {
        GridPosition::AtMinBoundary
    } else if index == 0 {
        GridPosition::AtMaxBoundary
    } else {
        GridPosition::Interior
    }
}

pub fn export_diagnostics(report: &CvReport) -> Diagnostics {
    let cell = &report.grids[report.optimal_alpha_index];
    let lambda_curve = cell
        .lambdas
        .iter()
        .zip(&cell.msfe)
        .zip(&cell.se)
        .map(|((l, m), s)| (*l, *m, *s))
        .collect::<Vec<_>>();
    Diagnostics {
        sparsity_grid: report.final_coefficients.penalized().into_owned(),
        grid_position: grid_position(report.optimal_index, lambda_curve.len()),
        lambda_curve,
    }
}
