//! Re-estimation of the support selected by a penalized fit.
//!
//! All routines work on a VAR design (no exogenous block). A support is a
//! per-row set of active columns of `B` within the intercept and the
//! endogenous lags, `0..=kp`.
//!
//! The generalized least-squares refit solves
//! `vec(Y) = X φ + (C ⊗ I_T) vec(V)`, `min ‖V‖_F`, with
//! `X = ⊕ᵢ Z'Rᵢ` and `Σ = CC'`, through a generalized QR factorization:
//! per-series orthogonal factors `Qᵢ = [Q̃ᵢ Q̂ᵢ]`, the blocks of
//! `Q'(C ⊗ I_T)Q` assembled from `C_ij Qᵢ'Qⱼ`, and an RQ step that zeroes
//! the lower-left block. Nothing is inverted explicitly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Result, VarError};
use crate::linalg::{cholesky_lower, lstsq_qr, sym_spectral_norm, symmetrize};
use crate::model::{CoefficientSet, LagRegression, LagShape, PenaltyKind};

pub const DEFAULT_EPS2: f64 = 1e-4;
pub const DEFAULT_MAX_ITER: usize = 25;

/// Active columns of `B` per response row.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionMap {
    rows: Vec<Vec<usize>>,
    n_cols: usize,
    eps1: f64,
}

impl RestrictionMap {
    /// `n_cols` is `kp + 1`. Each row's indices are sorted and deduplicated.
    pub fn new(mut rows: Vec<Vec<usize>>, n_cols: usize) -> Result<Self> {
        for r in &mut rows {
            r.sort_unstable();
            r.dedup();
            if let Some(&c) = r.last() {
                if c >= n_cols {
                    return Err(VarError::InvalidSpec(format!(
                        "active column {c} outside the {n_cols} intercept and lag columns"
                    )));
                }
            }
        }
        if rows.iter().all(|r| r.is_empty()) {
            return Err(VarError::EmptySupport);
        }
        Ok(Self {
            rows,
            n_cols,
            eps1: 0.0,
        })
    }

    /// Every intercept and lag coefficient active.
    pub fn full(k: usize, p: usize) -> Self {
        let n = k * p + 1;
        Self {
            rows: vec![(0..n).collect(); k],
            n_cols: n,
            eps1: 0.0,
        }
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Total number of active coefficients `r`.
    pub fn total(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn eps1(&self) -> f64 {
        self.eps1
    }

    pub fn is_active(&self, row: usize, col: usize) -> bool {
        self.rows[row].binary_search(&col).is_ok()
    }

    fn check(&self, reg: &LagRegression) -> Result<()> {
        if reg.shape.m > 0 {
            return Err(VarError::NonVarModel);
        }
        if self.k() != reg.shape.k || self.n_cols != reg.shape.n_cols() {
            return Err(VarError::DimensionMismatch(format!(
                "support is {}x{}, design has k = {} and {} columns",
                self.k(),
                self.n_cols,
                reg.shape.k,
                reg.shape.n_cols()
            )));
        }
        if let Some(r) = self.rows.iter().map(Vec::len).max() {
            if r >= reg.teff {
                return Err(VarError::InsufficientData(format!(
                    "{r} active coefficients in one row need more than {} observations",
                    reg.teff
                )));
            }
        }
        Ok(())
    }
}

/// Support of `b`: intercepts plus every lag coefficient with `|b| > eps1`.
/// Exogenous columns are ignored.
pub fn restriction_from_fit(b: &CoefficientSet, eps1: f64) -> Result<RestrictionMap> {
    if !(eps1 >= 0.0) {
        return Err(VarError::InvalidSpec("eps1 must be nonnegative".into()));
    }
    let LagShape { k, p, .. } = b.shape;
    let n = k * p + 1;
    let rows = (0..k)
        .map(|i| {
            std::iter::once(0)
                .chain((1..n).filter(|&c| b.b[(i, c)].abs() > eps1))
                .collect()
        })
        .collect();
    let mut map = RestrictionMap::new(rows, n)?;
    map.eps1 = eps1;
    Ok(map)
}

fn scatter(reg: &LagRegression, map: &RestrictionMap, phis: &[DVector<f64>]) -> CoefficientSet {
    let mut out = CoefficientSet::zeros(reg.shape, PenaltyKind::Basic);
    for (i, (cols, phi)) in map.rows.iter().zip(phis).enumerate() {
        for (&c, v) in cols.iter().zip(phi.iter()) {
            out.b[(i, c)] = *v;
        }
    }
    out
}

/// `Z_J'` for the active columns `J` (`teff × |J|`).
fn design(reg: &LagRegression, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(reg.teff, cols.len(), |t, a| reg.z[(cols[a], t)])
}

/// Row-by-row least squares on each row's active columns.
pub fn relaxed_ls(reg: &LagRegression, map: &RestrictionMap) -> Result<CoefficientSet> {
    map.check(reg)?;
    let phis = (0..map.k())
        .into_par_iter()
        .map(|i| {
            let cols = &map.rows[i];
            if cols.is_empty() {
                return Ok(DVector::zeros(0));
            }
            let x = design(reg, cols);
            let y = reg.y.row(i).transpose();
            let sol = lstsq_qr(&x, &DMatrix::from_column_slice(reg.teff, 1, y.as_slice()))?;
            if sol.rank_deficient {
                return Err(VarError::RankDeficient(format!("row {i} of the support")));
            }
            Ok(sol.coef.column(0).into_owned())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(scatter(reg, map, &phis))
}

/// GLS refit with the diagonal covariance `diag(variances)`.
///
/// A diagonal covariance decouples the rows, so the result matches
/// [`relaxed_ls`] up to rounding; it runs through the generalized QR
/// machinery all the same.
pub fn weighted_relaxed_ls(
    reg: &LagRegression,
    map: &RestrictionMap,
    variances: &[f64],
) -> Result<CoefficientSet> {
    if variances.len() != map.k() {
        return Err(VarError::DimensionMismatch(format!(
            "{} variances for {} series",
            variances.len(),
            map.k()
        )));
    }
    if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(VarError::InvalidSpec("variances must be positive".into()));
    }
    let c = DMatrix::from_diagonal(&DVector::from_iterator(
        variances.len(),
        variances.iter().map(|v| v.sqrt()),
    ));
    let ws = GlsWorkspace::new(reg, map)?;
    let phis = ws.solve(&c, 0)?;
    Ok(scatter(reg, map, &phis))
}

/// Per-series orthogonal factors and rotated responses.
#[derive(Debug, Clone)]
pub struct GlsWorkspace {
    /// Full `T × T` orthogonal factor of each series; the first `rᵢ`
    /// columns are `Q̃ᵢ`, the rest `Q̂ᵢ`.
    q: Vec<DMatrix<f64>>,
    /// `rᵢ × rᵢ` upper-triangular factors.
    r: Vec<DMatrix<f64>>,
    /// `Qᵢ' yᵢ`.
    qy: Vec<DVector<f64>>,
    sizes: Vec<usize>,
    t: usize,
}

impl GlsWorkspace {
    pub fn new(reg: &LagRegression, map: &RestrictionMap) -> Result<Self> {
        map.check(reg)?;
        let t = reg.teff;
        let per: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..map.k())
            .into_par_iter()
            .map(|i| {
                let cols = &map.rows[i];
                let ri = cols.len();
                if ri == 0 {
                    return Ok((DMatrix::identity(t, t), DMatrix::zeros(0, 0)));
                }
                // QR of the wide [Xᵢ I_T] yields a square Q whose leading
                // columns span Xᵢ
                let mut wide = DMatrix::zeros(t, ri + t);
                wide.view_mut((0, 0), (t, ri)).copy_from(&design(reg, cols));
                wide.view_mut((0, ri), (t, t)).fill_with_identity();
                let qr = wide.qr();
                let rr = qr.r().view((0, 0), (ri, ri)).into_owned();
                let dmax = rr.diagonal().amax();
                if dmax == 0.0 || rr.diagonal().iter().any(|d| d.abs() <= 1e-10 * dmax) {
                    return Err(VarError::RankDeficient(format!("row {i} of the support")));
                }
                Ok((qr.q(), rr))
            })
            .collect::<Result<Vec<_>>>()?;
        let (q, r): (Vec<_>, Vec<_>) = per.into_iter().unzip();
        let qy = q
            .iter()
            .enumerate()
            .map(|(i, qi)| qi.transpose() * reg.y.row(i).transpose())
            .collect();
        Ok(Self {
            q,
            r,
            qy,
            sizes: map.rows.iter().map(Vec::len).collect(),
            t,
        })
    }

    pub fn q_tilde(&self, i: usize) -> DMatrix<f64> {
        self.q[i].columns(0, self.sizes[i]).into_owned()
    }

    pub fn q_hat(&self, i: usize) -> DMatrix<f64> {
        self.q[i].columns(self.sizes[i], self.t - self.sizes[i]).into_owned()
    }

    fn k(&self) -> usize {
        self.q.len()
    }

    /// Row offsets of series `i` within the stacked `(Q̃, Q̂)` coordinates.
    fn offsets(&self) -> (Vec<usize>, Vec<usize>, usize) {
        let r: usize = self.sizes.iter().sum();
        let mut tilde = Vec::with_capacity(self.k());
        let mut hat = Vec::with_capacity(self.k());
        let (mut a, mut b) = (0, r);
        for &ri in &self.sizes {
            tilde.push(a);
            hat.push(b);
            a += ri;
            b += self.t - ri;
        }
        (tilde, hat, r)
    }

    /// `Q'(C ⊗ I_T)Q` assembled block by block from `C_ij Qᵢ'Qⱼ`.
    fn kron_blocks(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.k();
        let t = self.t;
        let n = k * t;
        let (tilde, hat, _) = self.offsets();
        let mut w = DMatrix::zeros(n, n);
        for i in 0..k {
            for j in 0..k {
                let cij = c[(i, j)];
                if cij == 0.0 {
                    continue;
                }
                let m = self.q[i].transpose() * &self.q[j] * cij;
                let (ri, rj) = (self.sizes[i], self.sizes[j]);
                let rows = [(tilde[i], 0, ri), (hat[i], ri, t - ri)];
                let cols = [(tilde[j], 0, rj), (hat[j], rj, t - rj)];
                for &(ro, rs, rn) in &rows {
                    for &(co, cs, cn) in &cols {
                        if rn > 0 && cn > 0 {
                            w.view_mut((ro, co), (rn, cn))
                                .copy_from(&m.view((rs, cs), (rn, cn)));
                        }
                    }
                }
            }
        }
        w
    }

    /// One GLS solve for the Cholesky-type factor `c` (`Σ = CC'`).
    fn solve(&self, c: &DMatrix<f64>, iteration: usize) -> Result<Vec<DVector<f64>>> {
        let k = self.k();
        let n = k * self.t;
        let (tilde, hat, r) = self.offsets();
        let m = n - r;
        let w = self.kron_blocks(c);

        let mut y_tilde = DVector::zeros(r);
        let mut y_hat = DVector::zeros(m);
        for i in 0..k {
            let ri = self.sizes[i];
            y_tilde.rows_mut(tilde[i], ri).copy_from(&self.qy[i].rows(0, ri));
            y_hat
                .rows_mut(hat[i] - r, self.t - ri)
                .copy_from(&self.qy[i].rows(ri, self.t - ri));
        }

        let mut rhs = y_tilde;
        if m > 0 {
            // RQ of the lower block row [W̃21 W̃22] via QR of its transpose
            // with rows and columns reversed:
            //   B = J_n A' J_m = Q_B R_B  ⇒  A (J_n Q_B J_m) = J_m R_B' J_m.
            let a = w.rows(r, m);
            let b = DMatrix::from_fn(n, m, |i, j| a[(m - 1 - j, n - 1 - i)]);
            let qr = b.qr();
            let (qb, rb) = (qr.q(), qr.r());
            let w22 = DMatrix::from_fn(m, m, |i, j| rb[(m - 1 - j, m - 1 - i)]);
            let dmax = w22.diagonal().amax();
            if dmax == 0.0 || w22.diagonal().iter().any(|d| d.abs() <= 1e-13 * dmax) {
                return Err(VarError::SingularW22 { iteration });
            }
            let v_hat = w22
                .solve_upper_triangular(&y_hat)
                .ok_or(VarError::SingularW22 { iteration })?;
            if r > 0 {
                // trailing columns of P̃ = J_n Q_B J_m
                let p2 = DMatrix::from_fn(n, m, |i, j| qb[(n - 1 - i, m - 1 - j)]);
                let w12 = w.rows(0, r) * p2;
                rhs -= w12 * v_hat;
            }
        }

        (0..k)
            .map(|i| {
                let ri = self.sizes[i];
                if ri == 0 {
                    return Ok(DVector::zeros(0));
                }
                self.r[i]
                    .solve_upper_triangular(&rhs.rows(tilde[i], ri).into_owned())
                    .ok_or_else(|| VarError::RankDeficient(format!("row {i} of the support")))
            })
            .collect()
    }
}

/// Result of [`ifgls`].
#[derive(Debug, Clone, PartialEq)]
pub struct IfglsFit {
    pub coefficients: CoefficientSet,
    pub sigma: DMatrix<f64>,
    pub iterations: usize,
    /// False when the iteration limit was hit before the covariance settled.
    pub converged: bool,
}

/// Lower-triangular `C` with `Σ = CC'`: Cholesky when possible, otherwise
/// the triangular factor of a QR of `D^{1/2} U'` from the eigendecomposition
/// `Σ = U D U'` (negative eigenvalues clipped to zero).
pub fn covariance_factor(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    if let Ok(c) = cholesky_lower(sigma) {
        return c;
    }
    let eig = nalgebra::SymmetricEigen::new(sigma.clone());
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let half = DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose();
    half.qr().r().transpose()
}

/// Iterated feasible GLS on a fixed support.
///
/// Each pass solves the GLS problem for the current covariance and then
/// re-estimates it as `U'U / (T − pk)` from the full residuals. Stops when
/// the spectral norm of the change is at most `eps2` or after `max_iter`
/// passes; the coefficients returned are from the last pass.
pub fn ifgls(
    reg: &LagRegression,
    map: &RestrictionMap,
    sigma0: &DMatrix<f64>,
    eps2: f64,
    max_iter: usize,
) -> Result<IfglsFit> {
    let k = reg.shape.k;
    if sigma0.shape() != (k, k) {
        return Err(VarError::DimensionMismatch(format!(
            "initial covariance must be {k}x{k}"
        )));
    }
    if max_iter == 0 || !(eps2 >= 0.0) {
        return Err(VarError::InvalidSpec("need max_iter ≥ 1 and eps2 ≥ 0".into()));
    }
    let dof = reg.teff as isize - (reg.shape.p * k) as isize;
    if dof <= 0 {
        return Err(VarError::InsufficientData(format!(
            "{} observations leave no degrees of freedom for {} lag coefficients per row",
            reg.teff,
            reg.shape.p * k
        )));
    }
    let ws = GlsWorkspace::new(reg, map)?;
    let mut c = cholesky_lower(sigma0)?;
    let mut sigma = sigma0.clone();
    let mut coefficients = CoefficientSet::zeros(reg.shape, PenaltyKind::Basic);
    for iter in 1..=max_iter {
        let phis = ws.solve(&c, iter)?;
        coefficients = scatter(reg, map, &phis);
        let resid = &reg.y - &coefficients.b * &reg.z;
        let mut next = &resid * resid.transpose() / dof as f64;
        symmetrize(&mut next);
        let change = sym_spectral_norm(&(&next - &sigma));
        sigma = next;
        if change <= eps2 {
            return Ok(IfglsFit {
                coefficients,
                sigma,
                iterations: iter,
                converged: true,
            });
        }
        c = covariance_factor(&sigma);
    }
    Ok(IfglsFit {
        coefficients,
        sigma,
        iterations: max_iter,
        converged: false,
    })
}

/// One GLS pass with the covariance that generated the data.
pub fn oracle_gls(
    reg: &LagRegression,
    map: &RestrictionMap,
    sigma_true: &DMatrix<f64>,
) -> Result<CoefficientSet> {
    let c = cholesky_lower(sigma_true)?;
    let ws = GlsWorkspace::new(reg, map)?;
    let phis = ws.solve(&c, 1)?;
    Ok(scatter(reg, map, &phis))
}
