//! On-disk formats. Every JSON document carries `format_version`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sparsevar::analysis::GridPosition;
use sparsevar::{CoefficientSet, LagShape, ModelSpec, PenaltyKind, RefitMode, Scaling, SeriesMatrix};

use crate::error::{CliError, CliResult};

pub const FORMAT_VERSION: u32 = 1;

fn current() -> u32 {
    FORMAT_VERSION
}

fn check_version(found: u32, what: &str) -> CliResult<()> {
    if found != FORMAT_VERSION {
        return Err(CliError::usage(format!(
            "{what} has format_version {found}, this build reads {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &str) -> CliResult<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("malformed {what} {}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

fn default_depth() -> f64 {
    50.0
}
fn default_n_lambda() -> usize {
    10
}
fn default_h() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_tol() -> f64 {
    1e-4
}
fn default_max_iter() -> usize {
    10_000
}

/// Model configuration; keys follow [`ModelSpec`] field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "current")]
    pub format_version: u32,
    /// Number of endogenous columns; the rest are exogenous. Defaults to all.
    #[serde(default)]
    pub k: Option<usize>,
    pub p: usize,
    #[serde(default)]
    pub s: usize,
    pub penalty: PenaltyKind,
    #[serde(default = "default_depth")]
    pub depth: f64,
    #[serde(default = "default_n_lambda")]
    pub n_lambda: usize,
    #[serde(default)]
    pub own_lambdas: Option<Vec<f64>>,
    #[serde(default = "default_h")]
    pub h: usize,
    #[serde(default)]
    pub recursive: bool,
    #[serde(default)]
    pub mn: bool,
    #[serde(default)]
    pub c: Option<Vec<f64>>,
    #[serde(default)]
    pub alpha_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub t1: Option<usize>,
    #[serde(default)]
    pub t2: Option<usize>,
    #[serde(default)]
    pub one_se: bool,
    #[serde(default = "default_true")]
    pub ic_benchmarks: bool,
    #[serde(default)]
    pub refit: RefitMode,
    /// Center and scale every column before fitting.
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let cfg: Self = read_json(path, "config")?;
        check_version(cfg.format_version, "config")?;
        Ok(cfg)
    }

    pub fn spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.p, self.penalty);
        spec.s = self.s;
        spec.depth = self.depth;
        spec.n_lambda = self.n_lambda;
        spec.own_lambdas = self.own_lambdas.clone();
        spec.h = self.h;
        spec.recursive = self.recursive;
        spec.mn = self.mn;
        spec.c = self.c.clone();
        spec.alpha_grid = self.alpha_grid.clone();
        spec.t1 = self.t1;
        spec.t2 = self.t2;
        spec.one_se = self.one_se;
        spec.ic_benchmarks = self.ic_benchmarks;
        spec.refit = self.refit;
        spec
    }
}

/// A series file: header row, optional leading time-index column, numeric
/// cells. The first column is treated as an index when its header is
/// empty or one of `t`, `time`, `date`, `index`, or when any of its cells
/// is not a number.
#[derive(Debug, Clone)]
pub struct Table {
    pub labels: Vec<String>,
    pub values: DMatrix<f64>,
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() || headers.is_empty() {
        return Err(CliError::data(format!("{} has no data rows", path.display())));
    }
    let named_index = matches!(
        headers[0].to_ascii_lowercase().as_str(),
        "" | "t" | "time" | "date" | "index"
    );
    let skip = usize::from(named_index || rows.iter().any(|r| r[0].parse::<f64>().is_err()));
    let ncols = headers.len() - skip;
    if ncols == 0 {
        return Err(CliError::data(format!("{} has no numeric columns", path.display())));
    }
    let mut values = DMatrix::zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for j in 0..ncols {
            let cell = &row[j + skip];
            values[(i, j)] = cell.parse::<f64>().map_err(|_| {
                CliError::data(format!(
                    "{} row {} column {}: '{cell}' is not a number",
                    path.display(),
                    i + 2,
                    headers[j + skip]
                ))
            })?;
        }
    }
    Ok(Table {
        labels: headers[skip..].to_vec(),
        values,
    })
}

pub fn series_from_table(table: Table, k: Option<usize>) -> CliResult<SeriesMatrix> {
    let total = table.values.ncols();
    let k = k.unwrap_or(total);
    if k == 0 || k > total {
        return Err(CliError::usage(format!(
            "k = {k} endogenous series requested, data has {total} columns"
        )));
    }
    Ok(SeriesMatrix::new(table.values, k)?.with_labels(table.labels)?)
}

/// CSV text with `index_name` first and one row per matrix row.
pub fn matrix_csv(index_name: &str, labels: &[String], m: &DMatrix<f64>, first_index: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![index_name.to_string()];
    header.extend(labels.iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (i, row) in m.row_iter().enumerate() {
        let mut rec = vec![(first_index + i).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Column names of `B`: intercept, then `<series>.l<lag>` for each lag
/// block, endogenous before exogenous.
pub fn coefficient_labels(shape: &LagShape, labels: &[String]) -> Vec<String> {
    let mut out = vec!["intercept".to_string()];
    for l in 1..=shape.p {
        out.extend(labels[..shape.k].iter().map(|n| format!("{n}.l{l}")));
    }
    for l in 1..=shape.s {
        out.extend(labels[shape.k..shape.k + shape.m].iter().map(|n| format!("{n}.l{l}")));
    }
    out
}

pub fn coefficients_csv(coef: &CoefficientSet, labels: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["response".to_string()];
    header.extend(coefficient_labels(&coef.shape, labels));
    w.write_record(&header).expect("in-memory write");
    for (i, row) in coef.b.row_iter().enumerate() {
        let mut rec = vec![labels[i].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let n = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != c) {
        return Err(CliError::usage(format!("{what} has ragged rows")));
    }
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

/// A fitted model ready for forecasting, impulse responses or refitting.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u32,
    pub structure: PenaltyKind,
    pub k: usize,
    pub m: usize,
    pub p: usize,
    pub s: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub labels: Vec<String>,
    /// Rows of `B = [ν, Φ, β]`, on the (possibly standardized) model scale.
    pub coefficients: Vec<Vec<f64>>,
    pub sigma_u: Vec<Vec<f64>>,
    pub scaling: Option<Scaling>,
    /// Last observations on the model scale, oldest first.
    pub history: Vec<Vec<f64>>,
    pub refit: RefitMode,
}

impl ModelFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let m: Self = read_json(path, "model")?;
        check_version(m.format_version, "model")?;
        let shape = m.shape();
        if m.coefficients.len() != m.k
            || m.coefficients.iter().any(|r| r.len() != shape.n_cols())
            || m.labels.len() != m.k + m.m
        {
            return Err(CliError::usage(format!(
                "model {} has inconsistent dimensions",
                path.display()
            )));
        }
        Ok(m)
    }

    pub fn shape(&self) -> LagShape {
        LagShape::new(self.k, self.m, self.p, self.s)
    }

    pub fn coefficient_set(&self) -> CliResult<CoefficientSet> {
        let mut c = CoefficientSet::zeros(self.shape(), self.structure);
        c.b = matrix_from_rows(&self.coefficients, "coefficients")?;
        c.lambda = self.lambda;
        c.alpha = self.alpha;
        Ok(c)
    }

    pub fn sigma(&self) -> CliResult<DMatrix<f64>> {
        let s = matrix_from_rows(&self.sigma_u, "sigma_u")?;
        if s.shape() != (self.k, self.k) {
            return Err(CliError::usage("sigma_u must be k x k"));
        }
        Ok(s)
    }

    pub fn history_series(&self) -> CliResult<SeriesMatrix> {
        let h = matrix_from_rows(&self.history, "history")?;
        if h.ncols() != self.k + self.m {
            return Err(CliError::usage("history width does not match the model"));
        }
        Ok(SeriesMatrix::new(h, self.k)?)
    }
}

/// Simulation input: `phi` is `k × kp` (`[Φ^(1) … Φ^(p)]`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(default = "current")]
    pub format_version: u32,
    pub phi: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub burn_in: Option<usize>,
}

impl SimSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        let s: Self = read_json(path, "simulation spec")?;
        check_version(s.format_version, "simulation spec")?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchmarkBlock {
    pub mean: f64,
    pub random_walk: f64,
    pub aic: Option<f64>,
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CurvePoint {
    pub lambda: f64,
    pub msfe: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlphaCurve {
    pub alpha: f64,
    pub points: Vec<CurvePoint>,
}

/// Summary of a cross-validation run.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub format_version: u32,
    pub penalty: PenaltyKind,
    pub optimal_lambda: f64,
    pub optimal_alpha: f64,
    pub optimal_index: usize,
    pub grid_position: GridPosition,
    pub in_sample_msfe: f64,
    pub oos_msfe: f64,
    pub benchmarks: BenchmarkBlock,
    /// Validation and evaluation target rows, half-open, 0-based.
    pub cv_targets: [usize; 2],
    pub oos_targets: [usize; 2],
    pub nonconverged_fits: usize,
    pub refit: RefitMode,
    pub curves: Vec<AlphaCurve>,
}
