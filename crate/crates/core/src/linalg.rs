//! Small dense linear-algebra helpers shared by the least-squares routines.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, VarError};

/// Solution of a multi-response least-squares problem.
#[derive(Debug, Clone, PartialEq)]
pub struct LstsqSolution {
    /// `p × k` coefficients, one column per response.
    pub coef: DMatrix<f64>,
    /// `R22' R22`, the residual cross-product.
    pub rss: DMatrix<f64>,
    pub rank_deficient: bool,
}

/// Least squares of `y` (`n × k`) on `x` (`n × p`) through one QR factorization
/// of `K = [x, y]`.
///
/// `K` is augmented with rows `δ [I, 0]`, where `δ` is a few machine epsilons
/// times `‖K‖_F`, which keeps `R11` invertible without visibly perturbing the
/// fit. When a diagonal entry of `R11` is still negligible the minimum-norm
/// solution from an SVD is returned instead and `rank_deficient` is set.
pub fn lstsq_qr(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<LstsqSolution> {
    let (n, p) = x.shape();
    let k = y.ncols();
    if y.nrows() != n {
        return Err(VarError::DimensionMismatch(format!(
            "design has {n} rows, response has {}",
            y.nrows()
        )));
    }
    if p == 0 {
        return Ok(LstsqSolution {
            coef: DMatrix::zeros(0, k),
            rss: y.transpose() * y,
            rank_deficient: false,
        });
    }
    let mut kmat = DMatrix::zeros(n + p, p + k);
    kmat.view_mut((0, 0), (n, p)).copy_from(x);
    kmat.view_mut((0, p), (n, k)).copy_from(y);
    let qsz = (p + k) as f64;
    let delta = (qsz * qsz + qsz + 1.0) * f64::EPSILON * kmat.norm();
    for j in 0..p {
        kmat[(n + j, j)] = delta;
    }
    let r = kmat.qr().r();
    let r11 = r.view((0, 0), (p, p)).into_owned();
    let r12 = r.view((0, p), (p, k)).into_owned();
    let r22 = r.view((p, p), (r.nrows() - p, k)).into_owned();
    let dmax = r11.diagonal().amax();
    let deficient = r11.diagonal().iter().any(|d| d.abs() <= 1e-10 * dmax) || dmax == 0.0;
    if deficient {
        let coef = min_norm_solve(x, y);
        let resid = y - x * &coef;
        return Ok(LstsqSolution {
            coef,
            rss: resid.transpose() * resid,
            rank_deficient: true,
        });
    }
    let coef = r11
        .solve_upper_triangular(&r12)
        .ok_or_else(|| VarError::RankDeficient("singular R11".into()))?;
    let mut rss = r22.transpose() * r22;
    symmetrize(&mut rss);
    Ok(LstsqSolution {
        coef,
        rss,
        rank_deficient: false,
    })
}

/// Minimum-norm least-squares solution via the SVD.
pub fn min_norm_solve(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.amax();
    let tol = smax * f64::EPSILON * x.nrows().max(x.ncols()) as f64;
    svd.solve(y, tol).unwrap_or_else(|_| DMatrix::zeros(x.ncols(), y.ncols()))
}

/// Lower Cholesky factor.
pub fn cholesky_lower(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(VarError::NotSpd("matrix is not square".into()));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(VarError::NotSpd("non-finite entries".into()));
    }
    let asym = (s - s.transpose()).amax();
    if asym > 1e-8 * s.amax().max(1.0) {
        return Err(VarError::NotSpd(format!("asymmetry {asym:.3e}")));
    }
    s.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| VarError::NotSpd("Cholesky factorization failed".into()))
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(s: &DMatrix<f64>) -> f64 {
    if s.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(s.clone())
        .eigenvalues
        .iter()
        .fold(0.0, |a: f64, v| a.max(v.abs()))
}

/// Log-determinant of a symmetric positive semidefinite matrix
/// (`-inf` when singular).
pub fn logdet_psd(s: &DMatrix<f64>) -> f64 {
    match s.clone().cholesky() {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
        None => SymmetricEigen::new(s.clone())
            .eigenvalues
            .iter()
            .map(|v| v.max(0.0).ln())
            .sum(),
    }
}

pub fn symmetrize(s: &mut DMatrix<f64>) {
    let n = s.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
}
