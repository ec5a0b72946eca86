//! Domain types and the lagged regression design.
//!
//! A VARX(p, s) with `k` endogenous and `m` exogenous series is written in
//! compact form as `Y = B Z + U`, where column `t` of `Z` stacks an intercept,
//! `p` lags of the endogenous vector and `s` lags of the exogenous vector.
//! [`LagRegression`] builds `Y` and `Z` from a [`SeriesMatrix`];
//! [`CoefficientSet`] holds the `k × (kp + ms + 1)` matrix `B = [ν, Φ, β]`.

use nalgebra::{DMatrix, DMatrixView, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VarError};

/// Observed data, rows ascending in time. The first `k` columns are the
/// modeled (endogenous) series and the remaining `m` are exogenous.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesMatrix {
    values: DMatrix<f64>,
    k: usize,
    labels: Option<Vec<String>>,
}

impl SeriesMatrix {
    /// Wraps a `T × (k + m)` matrix; every entry must be finite.
    pub fn new(values: DMatrix<f64>, k: usize) -> Result<Self> {
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let nrows = values.nrows().max(1);
            return Err(VarError::NonFinite(format!(
                "row {} column {}",
                idx % nrows,
                idx / nrows
            )));
        }
        Self::new_unchecked(values, k)
    }

    /// Like [`SeriesMatrix::new`] but does not scan for non-finite entries.
    ///
    /// Lag designs built from the result still reject non-finite values in
    /// the rows they read, so this is useful when only a prefix of the rows
    /// is known to be valid (for example, data with sentinel-filled future
    /// rows).
    pub fn new_unchecked(values: DMatrix<f64>, k: usize) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(VarError::InsufficientData("series has no rows".into()));
        }
        if k == 0 || k > values.ncols() {
            return Err(VarError::DimensionMismatch(format!(
                "k = {k} endogenous columns requested from a matrix with {} columns",
                values.ncols()
            )));
        }
        Ok(Self {
            values,
            k,
            labels: None,
        })
    }

    /// Builds from row slices (`rows[t][col]`).
    pub fn from_rows(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(VarError::DimensionMismatch("ragged rows".into()));
        }
        let values = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        Self::new(values, k)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.values.ncols() {
            return Err(VarError::DimensionMismatch(format!(
                "{} labels for {} columns",
                labels.len(),
                self.values.ncols()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.values.ncols() - self.k
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn endogenous(&self) -> DMatrixView<'_, f64> {
        self.values.columns(0, self.k)
    }

    pub fn exogenous(&self) -> DMatrixView<'_, f64> {
        self.values.columns(self.k, self.m())
    }

    /// Endogenous observation at row `t` as a column vector.
    pub fn y(&self, t: usize) -> DVector<f64> {
        self.values.row(t).columns(0, self.k).transpose()
    }

    /// The first `rows` observations.
    pub fn head(&self, rows: usize) -> SeriesMatrix {
        SeriesMatrix {
            values: self.values.rows(0, rows.min(self.n_obs())).into_owned(),
            k: self.k,
            labels: self.labels.clone(),
        }
    }
}

/// Lag orders and series counts that fix the layout of `B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LagShape {
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub s: usize,
}

impl LagShape {
    pub fn new(k: usize, m: usize, p: usize, s: usize) -> Self {
        // exogenous lags are meaningless without exogenous series
        let s = if m == 0 { 0 } else { s };
        let m = if s == 0 { 0 } else { m };
        Self { k, m, p, s }
    }

    /// Number of penalized predictors, `kp + ms`.
    pub fn n_predictors(&self) -> usize {
        self.k * self.p + self.m * self.s
    }

    /// Columns of `B` including the intercept.
    pub fn n_cols(&self) -> usize {
        self.n_predictors() + 1
    }

    pub fn is_varx(&self) -> bool {
        self.m > 0 && self.s > 0
    }

    pub fn max_lag(&self) -> usize {
        self.p.max(self.s)
    }

    /// Column of `B` holding `Φ^(lag)[.., series]` (lag is 1-based).
    pub fn phi_col(&self, lag: usize, series: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.p && series < self.k);
        1 + (lag - 1) * self.k + series
    }

    /// Column of `B` holding `β^(lag)[.., series]` (lag is 1-based).
    pub fn beta_col(&self, lag: usize, series: usize) -> usize {
        debug_assert!(lag >= 1 && lag <= self.s && series < self.m);
        1 + self.k * self.p + (lag - 1) * self.m + series
    }
}

/// Penalty structures. Names follow the `struct` argument conventions
/// used by the original package.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyKind {
    Basic,
    Lag,
    OwnOther,
    SparseLag,
    #[serde(rename = "SparseOO")]
    SparseOwnOther,
    #[serde(rename = "EFX", alias = "EF")]
    EndogenousFirst,
    #[serde(rename = "HVARC")]
    HvarComponent,
    #[serde(rename = "HVAROO")]
    HvarOwnOther,
    #[serde(rename = "HVARELEM")]
    HvarElement,
    Tapered,
}

impl PenaltyKind {
    pub const ALL: [PenaltyKind; 10] = [
        PenaltyKind::Basic,
        PenaltyKind::Lag,
        PenaltyKind::OwnOther,
        PenaltyKind::SparseLag,
        PenaltyKind::SparseOwnOther,
        PenaltyKind::EndogenousFirst,
        PenaltyKind::HvarComponent,
        PenaltyKind::HvarOwnOther,
        PenaltyKind::HvarElement,
        PenaltyKind::Tapered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PenaltyKind::Basic => "Basic",
            PenaltyKind::Lag => "Lag",
            PenaltyKind::OwnOther => "OwnOther",
            PenaltyKind::SparseLag => "SparseLag",
            PenaltyKind::SparseOwnOther => "SparseOO",
            PenaltyKind::EndogenousFirst => "EFX",
            PenaltyKind::HvarComponent => "HVARC",
            PenaltyKind::HvarOwnOther => "HVAROO",
            PenaltyKind::HvarElement => "HVARELEM",
            PenaltyKind::Tapered => "Tapered",
        }
    }

    pub fn supports_var(self) -> bool {
        !matches!(self, PenaltyKind::EndogenousFirst)
    }

    pub fn supports_varx(self) -> bool {
        !matches!(
            self,
            PenaltyKind::HvarComponent
                | PenaltyKind::HvarOwnOther
                | PenaltyKind::HvarElement
                | PenaltyKind::Tapered
        )
    }

    /// Sparse-group kinds mix an L1 term in with weight `α`.
    pub fn is_sparse_group(self) -> bool {
        matches!(self, PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther)
    }

    pub fn check_applicable(self, shape: &LagShape) -> Result<()> {
        let ok = if shape.is_varx() {
            self.supports_varx()
        } else {
            self.supports_var()
        };
        if ok {
            Ok(())
        } else {
            Err(VarError::UnsupportedStructure {
                structure: self.name().to_string(),
                model: if shape.is_varx() { "VARX" } else { "VAR" },
            })
        }
    }
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PenaltyKind {
    type Err = VarError;

    fn from_str(s: &str) -> Result<Self> {
        PenaltyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .or_else(|| s.eq_ignore_ascii_case("EF").then_some(PenaltyKind::EndogenousFirst))
            .ok_or_else(|| VarError::InvalidSpec(format!("unknown penalty structure `{s}`")))
    }
}

/// Post-selection refit applied after a penalized fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefitMode {
    #[default]
    None,
    Rls,
    Wls,
    Ifgls,
}

/// Full model configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub p: usize,
    pub s: usize,
    pub penalty: PenaltyKind,
    /// Ratio between the largest and smallest grid value.
    pub depth: f64,
    pub n_lambda: usize,
    /// User supplied penalty values; replaces the generated grid.
    pub own_lambdas: Option<Vec<f64>>,
    pub h: usize,
    /// Iterated multi-step forecasts (VAR only); direct otherwise.
    pub recursive: bool,
    pub mn: bool,
    pub c: Option<Vec<f64>>,
    /// Candidate `α` values for sparse-group kinds, `γ` values for
    /// `Tapered`. `None` selects the defaults.
    pub alpha_grid: Option<Vec<f64>>,
    pub t1: Option<usize>,
    pub t2: Option<usize>,
    pub one_se: bool,
    pub ic_benchmarks: bool,
    pub refit: RefitMode,
}

impl ModelSpec {
    pub fn new(p: usize, penalty: PenaltyKind) -> Self {
        Self {
            p,
            s: 0,
            penalty,
            depth: 50.0,
            n_lambda: 10,
            own_lambdas: None,
            h: 1,
            recursive: false,
            mn: false,
            c: None,
            alpha_grid: None,
            t1: None,
            t2: None,
            one_se: false,
            ic_benchmarks: true,
            refit: RefitMode::None,
        }
    }

    pub fn shape(&self, data: &SeriesMatrix) -> LagShape {
        LagShape::new(data.k(), data.m(), self.p, self.s)
    }

    /// Cross-validation split points, defaulting to `⌊T/3⌋` and `⌊2T/3⌋`.
    pub fn split_points(&self, n_obs: usize) -> (usize, usize) {
        (
            self.t1.unwrap_or(n_obs / 3),
            self.t2.unwrap_or(2 * n_obs / 3),
        )
    }

    /// Candidate values of the secondary tuning parameter.
    pub fn mixing_grid(&self, k: usize) -> Vec<f64> {
        match (&self.alpha_grid, self.penalty) {
            (Some(g), _) => g.clone(),
            (None, PenaltyKind::Tapered) => (0..=10).map(|i| i as f64 / 10.0).collect(),
            (None, _) => vec![1.0 / (k as f64 + 1.0)],
        }
    }

    /// Whether multi-step forecasts are produced by iterating the one-step model.
    pub fn iterated(&self, shape: &LagShape) -> bool {
        self.h == 1 || (self.recursive && !shape.is_varx())
    }

    pub fn horizon_mode(&self, shape: &LagShape) -> HorizonMode {
        if self.iterated(shape) {
            HorizonMode::OneStep
        } else {
            HorizonMode::Direct(self.h)
        }
    }

    pub fn validate(&self, data: &SeriesMatrix) -> Result<()> {
        let shape = self.shape(data);
        let n = data.n_obs();
        if self.p == 0 {
            return Err(VarError::InvalidSpec("p must be at least 1".into()));
        }
        if self.h == 0 {
            return Err(VarError::InvalidSpec("h must be at least 1".into()));
        }
        if !(self.depth > 1.0) {
            return Err(VarError::InvalidSpec("grid depth must exceed 1".into()));
        }
        if self.n_lambda == 0 {
            return Err(VarError::InvalidSpec("n_lambda must be at least 1".into()));
        }
        if let Some(l) = &self.own_lambdas {
            if l.is_empty() || l.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                return Err(VarError::InvalidSpec(
                    "own lambdas must be a non-empty list of positive values".into(),
                ));
            }
        }
        let (t1, t2) = self.split_points(n);
        if !(1 <= t1 && t1 < t2 && t2 < n) {
            return Err(VarError::InvalidSpec(format!(
                "split points must satisfy 1 <= T1 < T2 < T (T1 = {t1}, T2 = {t2}, T = {n})"
            )));
        }
        for a in self.mixing_grid(data.k()) {
            if !(0.0..=1.0).contains(&a) {
                return Err(VarError::InvalidSpec(format!("alpha/gamma {a} outside [0, 1]")));
            }
        }
        self.penalty.check_applicable(&shape)?;
        if self.penalty == PenaltyKind::EndogenousFirst && shape.s != shape.p {
            return Err(VarError::InvalidSpec(
                "the endogenous-first structure requires s = p".into(),
            ));
        }
        match (&self.c, self.mn) {
            (Some(c), true) if c.len() != data.k() => {
                return Err(VarError::DimensionMismatch(format!(
                    "C has length {}, expected k = {}",
                    c.len(),
                    data.k()
                )))
            }
            (Some(c), false) if c.iter().any(|&v| v != 0.0) => {
                return Err(VarError::InvalidSpec(
                    "a nonzero C vector requires the Minnesota option".into(),
                ))
            }
            _ => {}
        }
        Ok(())
    }

    /// Random-walk targets, all zeros unless the Minnesota option is set.
    pub fn minnesota_targets(&self, k: usize) -> Option<Vec<f64>> {
        if !self.mn {
            return None;
        }
        Some(self.c.clone().unwrap_or_else(|| vec![1.0; k]))
    }
}

/// Alignment of predictors relative to the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizonMode {
    /// Predictors dated `t-1` and earlier; used for one-step and iterated forecasts.
    OneStep,
    /// Predictors dated `t-h` and earlier.
    Direct(usize),
}

impl HorizonMode {
    pub fn delta(self) -> usize {
        match self {
            HorizonMode::OneStep => 1,
            HorizonMode::Direct(h) => h.max(1),
        }
    }
}

/// Response block `Y` (`k × teff`) and lagged design `Z` (`(kp+ms+1) × teff`).
#[derive(Debug, Clone, PartialEq)]
pub struct LagRegression {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub teff: usize,
    /// Data row of the first target.
    pub offset: usize,
    pub delta: usize,
    pub shape: LagShape,
}

impl LagRegression {
    pub fn build(data: &SeriesMatrix, p: usize, s: usize, mode: HorizonMode) -> Result<Self> {
        let shape = LagShape::new(data.k(), data.m(), p, s);
        let delta = mode.delta();
        let offset = shape.max_lag() + delta - 1;
        let n = data.n_obs();
        if n <= offset {
            return Err(VarError::InsufficientData(format!(
                "{n} observations cannot support max lag {} with horizon offset {}",
                shape.max_lag(),
                delta - 1
            )));
        }
        let teff = n - offset;
        let mut y = DMatrix::zeros(shape.k, teff);
        let mut z = DMatrix::zeros(shape.n_cols(), teff);
        for col in 0..teff {
            let t = offset + col;
            y.set_column(col, &data.y(t));
            if shape.max_lag() == 0 {
                // intercept only; the origin may precede the sample
                z[(0, col)] = 1.0;
            } else {
                z.set_column(col, &lag_vector(data, t - delta, &shape));
            }
        }
        if let Some(bad) = y.iter().chain(z.iter()).position(|v| !v.is_finite()) {
            return Err(VarError::NonFinite(format!("lag design entry {bad}")));
        }
        Ok(Self {
            y,
            z,
            teff,
            offset,
            delta,
            shape,
        })
    }

    pub fn from_spec(data: &SeriesMatrix, spec: &ModelSpec) -> Result<Self> {
        let shape = spec.shape(data);
        Self::build(data, spec.p, spec.s, spec.horizon_mode(&shape))
    }

    /// Row means of `Y` and of the predictor rows of `Z` (intercept excluded).
    pub fn means(&self) -> (DVector<f64>, DVector<f64>) {
        let n = self.teff as f64;
        let ybar = self.y.column_sum() / n;
        let zbar = self.z.rows(1, self.shape.n_predictors()).column_sum() / n;
        (ybar, zbar)
    }
}

/// `[1, y_t', …, y_{t-p+1}', x_t', …, x_{t-s+1}']'`, the predictor column
/// formed from information available at data row `t`.
pub fn lag_vector(data: &SeriesMatrix, t: usize, shape: &LagShape) -> DVector<f64> {
    lag_vector_in(data.values(), t, shape)
}

pub(crate) fn lag_vector_in(vals: &DMatrix<f64>, t: usize, shape: &LagShape) -> DVector<f64> {
    let mut z = DVector::zeros(shape.n_cols());
    z[0] = 1.0;
    for lag in 1..=shape.p {
        let row = t + 1 - lag;
        for j in 0..shape.k {
            z[shape.phi_col(lag, j)] = vals[(row, j)];
        }
    }
    for lag in 1..=shape.s {
        let row = t + 1 - lag;
        for j in 0..shape.m {
            z[shape.beta_col(lag, j)] = vals[(row, shape.k + j)];
        }
    }
    z
}

/// Estimated `B = [ν, Φ^(1), …, Φ^(p), β^(1), …, β^(s)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub b: DMatrix<f64>,
    pub lambda: f64,
    /// `α` for sparse-group kinds, `γ` for `Tapered`.
    pub alpha: f64,
    pub shape: LagShape,
    pub structure: PenaltyKind,
}

impl CoefficientSet {
    pub fn zeros(shape: LagShape, structure: PenaltyKind) -> Self {
        Self {
            b: DMatrix::zeros(shape.k, shape.n_cols()),
            lambda: 0.0,
            alpha: 0.0,
            shape,
            structure,
        }
    }

    pub fn intercept(&self) -> DVector<f64> {
        self.b.column(0).into_owned()
    }

    /// `Φ^(lag)`, 1-based.
    pub fn phi(&self, lag: usize) -> DMatrix<f64> {
        self.b
            .columns(self.shape.phi_col(lag, 0), self.shape.k)
            .into_owned()
    }

    /// `[Φ^(1), …, Φ^(p)]` as a `k × kp` matrix.
    pub fn phi_all(&self) -> DMatrix<f64> {
        self.b.columns(1, self.shape.k * self.shape.p).into_owned()
    }

    /// `β^(lag)`, 1-based.
    pub fn beta(&self, lag: usize) -> DMatrix<f64> {
        self.b
            .columns(self.shape.beta_col(lag, 0), self.shape.m)
            .into_owned()
    }

    /// `[Φ, β]`, the penalized block.
    pub fn penalized(&self) -> DMatrixView<'_, f64> {
        self.b.columns(1, self.shape.n_predictors())
    }

    pub fn penalized_is_zero(&self) -> bool {
        self.penalized().iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.b.iter().all(|v| v.is_finite())
    }
}

/// Per-column location and scale used by [`standardize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaling {
    pub fn apply(&self, data: &SeriesMatrix) -> Result<SeriesMatrix> {
        self.check(data.values().ncols())?;
        let mut v = data.values().clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col.apply(|x| *x = (*x - self.mean[j]) / self.sd[j]);
        }
        rebuild(data, v)
    }

    pub fn invert(&self, data: &SeriesMatrix) -> Result<SeriesMatrix> {
        self.check(data.values().ncols())?;
        let mut v = data.values().clone();
        for (j, mut col) in v.column_iter_mut().enumerate() {
            col.apply(|x| *x = *x * self.sd[j] + self.mean[j]);
        }
        rebuild(data, v)
    }

    /// Maps standardized endogenous forecasts (rows = horizons) to raw units.
    pub fn invert_endogenous(&self, forecasts: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = forecasts.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.apply(|x| *x = *x * self.sd[j] + self.mean[j]);
        }
        out
    }

    fn check(&self, ncols: usize) -> Result<()> {
        if self.mean.len() != ncols || self.sd.len() != ncols {
            return Err(VarError::DimensionMismatch(format!(
                "scaling for {} columns applied to {ncols}",
                self.mean.len()
            )));
        }
        Ok(())
    }
}

fn rebuild(template: &SeriesMatrix, values: DMatrix<f64>) -> Result<SeriesMatrix> {
    let out = SeriesMatrix::new(values, template.k())?;
    match template.labels() {
        Some(l) => out.with_labels(l.to_vec()),
        None => Ok(out),
    }
}

/// Centers every column and scales it to unit variance, using the
/// population (divide by `T`) variance.
pub fn standardize(data: &SeriesMatrix) -> Result<(SeriesMatrix, Scaling)> {
    let n = data.n_obs() as f64;
    let mut mean = Vec::with_capacity(data.values().ncols());
    let mut sd = Vec::with_capacity(data.values().ncols());
    for (j, col) in data.values().column_iter().enumerate() {
        let mu = col.sum() / n;
        let var = col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
        if !(var > 0.0) {
            return Err(VarError::ZeroVariance { column: j });
        }
        mean.push(mu);
        sd.push(var.sqrt());
    }
    let scaling = Scaling { mean, sd };
    Ok((scaling.apply(data)?, scaling))
}

/// Subtracts `c_i` times the first endogenous lag from response row `i`, so
/// that a penalized fit shrinks `Φ^(1)` toward `diag(c)` rather than zero.
pub fn minnesota_shift(reg: &LagRegression, c: &[f64]) -> Result<LagRegression> {
    let k = reg.shape.k;
    if c.len() != k {
        return Err(VarError::DimensionMismatch(format!(
            "C has length {}, expected {k}",
            c.len()
        )));
    }
    if reg.shape.p == 0 {
        return Err(VarError::InvalidSpec("Minnesota shift requires p >= 1".into()));
    }
    let mut out = reg.clone();
    for (i, &ci) in c.iter().enumerate() {
        if ci == 0.0 {
            continue;
        }
        let lag_row = reg.z.row(reg.shape.phi_col(1, i)).into_owned();
        let mut row = out.y.row_mut(i);
        row -= lag_row * ci;
    }
    Ok(out)
}

/// Inverse of [`minnesota_shift`] on the estimated coefficients.
pub fn minnesota_unshift(coef: &mut CoefficientSet, c: &[f64]) -> Result<()> {
    let k = coef.shape.k;
    if c.len() != k {
        return Err(VarError::DimensionMismatch(format!(
            "C has length {}, expected {k}",
            c.len()
        )));
    }
    for (i, &ci) in c.iter().enumerate() {
        let col = coef.shape.phi_col(1, i);
        coef.b[(i, col)] += ci;
    }
    Ok(())
}
