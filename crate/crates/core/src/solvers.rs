//! Penalized least-squares solvers.
//!
//! All solvers minimize `‖Ỹ − ΘZ̃‖²_F + λ P(Θ)` over the penalized block
//! `Θ = [Φ, β]`, where `Ỹ` and `Z̃` are row-centered. The intercept is
//! recovered afterwards as `ν = ȳ − Θ z̄`.
//!
//! | structure                 | algorithm                    |
//! |---------------------------|------------------------------|
//! | Basic                     | cyclic coordinate descent    |
//! | Lag, OwnOther             | block coordinate descent     |
//! | SparseLag, SparseOO       | proximal gradient            |
//! | EFX, HVAR*, Tapered       | FISTA with adaptive restart  |

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Result, VarError};
use crate::model::{CoefficientSet, LagRegression, LagShape, PenaltyKind};
use crate::penalties::{soft_threshold, GroupPartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Step `1/L` with `L` the Lipschitz constant of the loss gradient.
    #[default]
    FixedLipschitz,
    /// Start from a fraction of `L` and double until the quadratic
    /// upper bound holds.
    Backtracking,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iter: usize,
    /// Stop when `max|ΔΘ| / max|Θ|` drops below this value.
    pub tol: f64,
    pub warm_start: Option<CoefficientSet>,
    pub step_rule: StepRule,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iter: 10_000,
            tol: 1e-4,
            warm_start: None,
            step_rule: StepRule::FixedLipschitz,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(VarError::InvalidSpec(
                "solver needs max_iter >= 1 and tol > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a single penalized fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub coefficients: CoefficientSet,
    /// `false` when `max_iter` was reached first; the last iterate is returned.
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

/// Sufficient statistics of a centered lag regression.
#[derive(Debug)]
pub struct Problem {
    pub shape: LagShape,
    /// `Z̃ Z̃'`, `q × q`.
    pub gram: DMatrix<f64>,
    /// `Ỹ Z̃'`, `k × q`.
    pub cross: DMatrix<f64>,
    pub ybar: DVector<f64>,
    pub zbar: DVector<f64>,
    /// `‖Ỹ‖²_F`.
    pub yss: f64,
    lipschitz: OnceLock<f64>,
}

impl Problem {
    pub fn new(reg: &LagRegression) -> Self {
        let (ybar, zbar) = reg.means();
        let q = reg.shape.n_predictors();
        let mut yc = reg.y.clone();
        for mut col in yc.column_iter_mut() {
            col -= &ybar;
        }
        let mut zc = reg.z.rows(1, q).into_owned();
        for mut col in zc.column_iter_mut() {
            col -= &zbar;
        }
        let gram = &zc * zc.transpose();
        let cross = &yc * zc.transpose();
        Self {
            shape: reg.shape,
            gram,
            cross,
            ybar,
            zbar,
            yss: yc.norm_squared(),
            lipschitz: OnceLock::new(),
        }
    }

    /// `2 λ_max(Z̃Z̃')`.
    pub fn lipschitz(&self) -> f64 {
        *self.lipschitz.get_or_init(|| {
            if self.gram.is_empty() {
                return 0.0;
            }
            let ev = SymmetricEigen::new(self.gram.clone()).eigenvalues;
            2.0 * ev.iter().cloned().fold(0.0, f64::max)
        })
    }

    pub fn loss(&self, theta: &DMatrix<f64>) -> f64 {
        let tg = theta * &self.gram;
        (self.yss - 2.0 * theta.dot(&self.cross) + theta.dot(&tg)).max(0.0)
    }

    /// `∇ loss = 2(ΘG − C)`.
    pub fn gradient(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        (theta * &self.gram - &self.cross) * 2.0
    }

    /// `2C`, the negated gradient at zero.
    pub fn gradient_at_zero(&self) -> DMatrix<f64> {
        &self.cross * 2.0
    }

    pub fn objective(
        &self,
        theta: &DMatrix<f64>,
        partition: &GroupPartition,
        lambda: f64,
        alpha: f64,
    ) -> f64 {
        self.loss(theta) + lambda * partition.penalty(theta, alpha)
    }

    /// Full `B` with the intercept implied by centering.
    pub fn assemble(
        &self,
        theta: &DMatrix<f64>,
        lambda: f64,
        alpha: f64,
        structure: PenaltyKind,
    ) -> CoefficientSet {
        let k = self.shape.k;
        let mut b = DMatrix::zeros(k, self.shape.n_cols());
        b.set_column(0, &(&self.ybar - theta * &self.zbar));
        b.columns_mut(1, self.shape.n_predictors()).copy_from(theta);
        CoefficientSet {
            b,
            lambda,
            alpha,
            shape: self.shape,
            structure,
        }
    }
}

/// Fits one `(λ, α)` pair from scratch or from `opts.warm_start`.
pub fn fit_penalized(
    reg: &LagRegression,
    partition: &GroupPartition,
    lambda: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<PenalizedFit> {
    solve(&Problem::new(reg), partition, lambda, alpha, opts)
}

/// Warm-started path over a descending `λ` sequence.
pub fn fit_path(
    reg: &LagRegression,
    partition: &GroupPartition,
    lambdas: &[f64],
    alpha: f64,
    opts: &SolverOptions,
) -> Result<Vec<PenalizedFit>> {
    if lambdas.iter().any(|l| !(*l > 0.0)) || lambdas.windows(2).any(|w| w[1] > w[0]) {
        return Err(VarError::InvalidSpec(
            "path penalties must be positive and descending".into(),
        ));
    }
    let problem = Problem::new(reg);
    let mut out: Vec<PenalizedFit> = Vec::with_capacity(lambdas.len());
    let mut opts = opts.clone();
    for &lam in lambdas {
        let fit = solve(&problem, partition, lam, alpha, &opts)?;
        opts.warm_start = Some(fit.coefficients.clone());
        out.push(fit);
    }
    Ok(out)
}

/// Dispatches to the algorithm assigned to the partition's structure.
pub fn solve(
    problem: &Problem,
    partition: &GroupPartition,
    lambda: f64,
    alpha: f64,
    opts: &SolverOptions,
) -> Result<PenalizedFit> {
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(VarError::InvalidSpec(format!("lambda must be >= 0, got {lambda}")));
    }
    if partition.shape != problem.shape {
        return Err(VarError::DimensionMismatch(
            "partition built for a different lag shape".into(),
        ));
    }
    let mut theta = match &opts.warm_start {
        Some(w) if w.shape == problem.shape => w.penalized().into_owned(),
        Some(_) => {
            return Err(VarError::DimensionMismatch(
                "warm start has a different lag shape".into(),
            ))
        }
        None => DMatrix::zeros(problem.shape.k, problem.shape.n_predictors()),
    };
    // Same test the λ_max bisection uses, so the two agree at the boundary
    // instead of differing by rounding in the step-scaled prox.
    let zero_optimal = problem.shape.n_predictors() == 0
        || partition.zero_is_optimal(&problem.gradient_at_zero(), lambda, alpha);
    let (converged, iterations) = if zero_optimal {
        theta.fill(0.0);
        (true, 0)
    } else {
        match partition.kind {
            PenaltyKind::Basic => coordinate_descent(problem, partition, lambda, &mut theta, opts),
            PenaltyKind::Lag | PenaltyKind::OwnOther => {
                block_coordinate_descent(problem, partition, lambda, &mut theta, opts)
            }
            PenaltyKind::SparseLag | PenaltyKind::SparseOwnOther => {
                proximal_gradient(problem, partition, lambda, alpha, &mut theta, opts, false)
            }
            _ => proximal_gradient(problem, partition, lambda, alpha, &mut theta, opts, true),
        }
    };
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(VarError::NonFinite("penalized solver diverged".into()));
    }
    let objective = problem.objective(&theta, partition, lambda, alpha);
    Ok(PenalizedFit {
        coefficients: problem.assemble(&theta, lambda, alpha, partition.kind),
        converged,
        iterations,
        objective,
    })
}

fn relative_change(max_delta: f64, theta: &DMatrix<f64>) -> f64 {
    let scale = theta.amax();
    if max_delta == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        max_delta / scale
    }
}

fn coordinate_descent(
    problem: &Problem,
    partition: &GroupPartition,
    lambda: f64,
    theta: &mut DMatrix<f64>,
    opts: &SolverOptions,
) -> (bool, usize) {
    let g = &problem.gram;
    let c = &problem.cross;
    let q = problem.shape.n_predictors();
    let weights = partition.l1_weights.as_deref();
    let mut r = &*theta * g;
    for iter in 1..=opts.max_iter {
        let mut max_delta: f64 = 0.0;
        for i in 0..theta.nrows() {
            for j in 0..q {
                let gjj = g[(j, j)];
                let old = theta[(i, j)];
                let new = if gjj > 0.0 {
                    let d = c[(i, j)] - r[(i, j)] + gjj * old;
                    let w = weights.map_or(1.0, |w| w[i * q + j]);
                    soft_threshold(d, 0.5 * lambda * w) / gjj
                } else {
                    0.0
                };
                let delta = new - old;
                if delta != 0.0 {
                    theta[(i, j)] = new;
                    for l in 0..q {
                        r[(i, l)] += delta * g[(j, l)];
                    }
                    max_delta = max_delta.max(delta.abs());
                }
            }
        }
        if relative_change(max_delta, theta) < opts.tol {
            return (true, iter);
        }
    }
    (false, opts.max_iter)
}

/// One row's share of a group: the row index, its columns and the
/// eigendecomposition of the matching Gram block.
struct RowBlock {
    row: usize,
    cols: Vec<usize>,
    eig: usize,
}

struct BlockGroup {
    rows: Vec<RowBlock>,
    weight: f64,
}

struct BlockEig {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
}

fn prepare_blocks(problem: &Problem, partition: &GroupPartition) -> (Vec<BlockGroup>, Vec<BlockEig>) {
    let q = problem.shape.n_predictors();
    let mut cache: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut eigs = Vec::new();
    let mut groups = Vec::new();
    for grp in partition.groups() {
        let mut by_row: Vec<(usize, Vec<usize>)> = Vec::new();
        for &idx in &grp.indices {
            let (row, col) = (idx / q, idx % q);
            match by_row.iter_mut().find(|(r, _)| *r == row) {
                Some((_, cols)) => cols.push(col),
                None => by_row.push((row, vec![col])),
            }
        }
        let rows = by_row
            .into_iter()
            .map(|(row, cols)| {
                let eig = *cache.entry(cols.clone()).or_insert_with(|| {
                    let sub = DMatrix::from_fn(cols.len(), cols.len(), |a, b| {
                        problem.gram[(cols[a], cols[b])]
                    });
                    let se = SymmetricEigen::new(sub);
                    eigs.push(BlockEig {
                        vectors: se.eigenvectors,
                        values: se.eigenvalues.map(|v| v.max(0.0)),
                    });
                    eigs.len() - 1
                });
                RowBlock { row, cols, eig }
            })
            .collect();
        groups.push(BlockGroup {
            rows,
            weight: grp.weight,
        });
    }
    (groups, eigs)
}

/// Solves `μ ‖(H + μI)⁻¹ d‖ = c` for `μ > 0`, given `d` in the eigenbasis
/// of `H` (coefficients `a`, eigenvalues `ev`).
fn secular_root(a: &[f64], ev: &[f64], c: f64, dnorm: f64) -> f64 {
    let phi = |mu: f64| {
        let s: f64 = a
            .iter()
            .zip(ev)
            .map(|(ai, ei)| (ai / (ei + mu)).powi(2))
            .sum();
        mu * s.sqrt() - c
    };
    let emax = ev.iter().cloned().fold(0.0, f64::max);
    let emin = ev.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let ratio = c / (dnorm - c);
    let mut lo = emin * ratio;
    let mut hi = emax * ratio;
    if !(hi > lo) {
        return hi.max(lo);
    }
    // Newton steps safeguarded by the bracket
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = phi(mu);
        if f == 0.0 {
            return mu;
        }
        if f < 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let s2: f64 = a
            .iter()
            .zip(ev)
            .map(|(ai, ei)| (ai / (ei + mu)).powi(2))
            .sum();
        let s3: f64 = a
            .iter()
            .zip(ev)
            .map(|(ai, ei)| ai * ai / (ei + mu).powi(3))
            .sum();
        let s = s2.sqrt();
        let deriv = if s > 0.0 { s - mu * s3 / s } else { 0.0 };
        let newton = mu - f / deriv;
        mu = if deriv > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= 1e-15 * hi {
            break;
        }
    }
    mu
}

fn block_coordinate_descent(
    problem: &Problem,
    partition: &GroupPartition,
    lambda: f64,
    theta: &mut DMatrix<f64>,
    opts: &SolverOptions,
) -> (bool, usize) {
    let g = &problem.gram;
    let c = &problem.cross;
    let q = problem.shape.n_predictors();
    let (groups, eigs) = prepare_blocks(problem, partition);
    let mut r = &*theta * g;
    for iter in 1..=opts.max_iter {
        let mut max_delta: f64 = 0.0;
        for grp in &groups {
            let thresh = 0.5 * lambda * grp.weight;
            // d = C_J − R_J + x_old G_JJ, row by row
            let mut ds: Vec<DVector<f64>> = Vec::with_capacity(grp.rows.len());
            let mut dnorm2 = 0.0;
            for rb in &grp.rows {
                let d = DVector::from_fn(rb.cols.len(), |a, _| {
                    let ca = rb.cols[a];
                    let mut v = c[(rb.row, ca)] - r[(rb.row, ca)];
                    for &cb in &rb.cols {
                        v += theta[(rb.row, cb)] * g[(cb, ca)];
                    }
                    v
                });
                // same summation order as the proximal map, so both agree on
                // exact zeros at the boundary
                for x in d.iter() {
                    dnorm2 += x * x;
                }
                ds.push(d);
            }
            let dnorm = dnorm2.sqrt();
            let new_rows: Vec<DVector<f64>> = if 2.0 * dnorm <= lambda * grp.weight {
                grp.rows.iter().map(|rb| DVector::zeros(rb.cols.len())).collect()
            } else {
                let mut a = Vec::new();
                let mut ev = Vec::new();
                let rotated: Vec<DVector<f64>> = grp
                    .rows
                    .iter()
                    .zip(&ds)
                    .map(|(rb, d)| {
                        let e = &eigs[rb.eig];
                        let t = e.vectors.transpose() * d;
                        a.extend(t.iter());
                        ev.extend(e.values.iter());
                        t
                    })
                    .collect();
                if ev.iter().all(|&e| e <= 0.0) {
                    grp.rows.iter().map(|rb| DVector::zeros(rb.cols.len())).collect()
                } else {
                    let mu = secular_root(&a, &ev, thresh, dnorm);
                    grp.rows
                        .iter()
                        .zip(rotated)
                        .map(|(rb, t)| {
                            let e = &eigs[rb.eig];
                            let scaled = DVector::from_fn(t.len(), |j, _| t[j] / (e.values[j] + mu));
                            &e.vectors * scaled
                        })
                        .collect()
                }
            };
            for (rb, x) in grp.rows.iter().zip(new_rows) {
                for (a, &ca) in rb.cols.iter().enumerate() {
                    let delta = x[a] - theta[(rb.row, ca)];
                    if delta != 0.0 {
                        theta[(rb.row, ca)] = x[a];
                        for l in 0..q {
                            r[(rb.row, l)] += delta * g[(ca, l)];
                        }
                        max_delta = max_delta.max(delta.abs());
                    }
                }
            }
        }
        if relative_change(max_delta, theta) < opts.tol {
            return (true, iter);
        }
    }
    (false, opts.max_iter)
}

#[allow(clippy::too_many_arguments)]
fn proximal_gradient(
    problem: &Problem,
    partition: &GroupPartition,
    lambda: f64,
    alpha: f64,
    theta: &mut DMatrix<f64>,
    opts: &SolverOptions,
    accelerate: bool,
) -> (bool, usize) {
    let l_exact = problem.lipschitz();
    if l_exact <= 0.0 {
        theta.fill(0.0);
        return (true, 0);
    }
    let objective = |x: &DMatrix<f64>| problem.objective(x, partition, lambda, alpha);
    let mut lip = match opts.step_rule {
        StepRule::FixedLipschitz => l_exact,
        StepRule::Backtracking => l_exact / 16.0,
    };
    let step = |y: &DMatrix<f64>, lip: &mut f64| -> DMatrix<f64> {
        let grad = problem.gradient(y);
        loop {
            let mut x = y - &grad / *lip;
            partition.prox_in_place(&mut x, lambda / *lip, alpha);
            if opts.step_rule == StepRule::FixedLipschitz || *lip >= l_exact {
                return x;
            }
            let diff = &x - y;
            let bound = problem.loss(y) + grad.dot(&diff) + 0.5 * *lip * diff.norm_squared();
            if problem.loss(&x) <= bound + 1e-12 * bound.abs() {
                return x;
            }
            *lip = (*lip * 2.0).min(l_exact);
        }
    };

    let mut x = theta.clone();
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&x);
    for iter in 1..=opts.max_iter {
        let mut x_new = step(&y, &mut lip);
        let mut f_new = objective(&x_new);
        if accelerate && f_new > f_prev {
            // restart from the last accepted iterate with a plain step
            t = 1.0;
            x_new = step(&x, &mut lip);
            f_new = objective(&x_new);
        }
        let diff = &x_new - &x;
        let max_delta = diff.amax();
        if accelerate {
            let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &x_new + diff * ((t - 1.0) / t_new);
            t = t_new;
        } else {
            y = x_new.clone();
        }
        x = x_new;
        f_prev = f_new;
        if !f_prev.is_finite() {
            *theta = x;
            return (false, iter);
        }
        if relative_change(max_delta, &x) < opts.tol {
            *theta = x;
            return (true, iter);
        }
    }
    *theta = x;
    (false, opts.max_iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{HorizonMode, SeriesMatrix};
    use crate::penalties::build_partition;

    fn lcg_data(t: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(t, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        })
    }

    fn regression(t: usize, k: usize, p: usize, seed: u64) -> LagRegression {
        let data = SeriesMatrix::new(lcg_data(t, k, seed), k).unwrap();
        LagRegression::build(&data, p, 0, HorizonMode::OneStep).unwrap()
    }

    fn tight() -> SolverOptions {
        SolverOptions {
            tol: 1e-12,
            max_iter: 200_000,
            ..SolverOptions::default()
        }
    }

    /// Ordinary least squares of the centered system via Cholesky.
    fn ols(problem: &Problem) -> DMatrix<f64> {
        let chol = problem.gram.clone().cholesky().unwrap();
        chol.solve(&problem.cross.transpose()).transpose()
    }

    #[test]
    fn zero_penalty_recovers_least_squares() {
        let reg = regression(80, 2, 2, 3);
        let problem = Problem::new(&reg);
        let beta = ols(&problem);
        for kind in PenaltyKind::ALL {
            if kind == PenaltyKind::EndogenousFirst {
                continue;
            }
            let part = build_partition(kind, reg.shape, 0.5).unwrap();
            let fit = solve(&problem, &part, 0.0, 0.5, &tight()).unwrap();
            let diff = (fit.coefficients.penalized() - &beta).amax();
            assert!(diff < 1e-6, "{kind}: {diff}");
        }
    }

    #[test]
    fn large_penalty_gives_mean_model() {
        let reg = regression(50, 3, 2, 9);
        let (ybar, _) = reg.means();
        for kind in PenaltyKind::ALL {
            if kind == PenaltyKind::EndogenousFirst {
                continue;
            }
            let part = build_partition(kind, reg.shape, 0.5).unwrap();
            let fit = fit_penalized(&reg, &part, 1e6, 0.5, &SolverOptions::default()).unwrap();
            assert!(fit.coefficients.penalized_is_zero(), "{kind}");
            assert!((fit.coefficients.intercept() - &ybar).amax() < 1e-12);
        }
    }

    #[test]
    fn basic_kkt_conditions() {
        let reg = regression(50, 2, 1, 21);
        let problem = Problem::new(&reg);
        let part = build_partition(PenaltyKind::Basic, reg.shape, 0.0).unwrap();
        let lam = 0.3;
        let fit = solve(&problem, &part, lam, 0.0, &tight()).unwrap();
        let theta = fit.coefficients.penalized().into_owned();
        let grad = problem.gradient(&theta);
        for (g, x) in grad.iter().zip(theta.iter()) {
            if *x == 0.0 {
                assert!(g.abs() <= lam * (1.0 + 1e-6));
            } else {
                assert!((g + lam * x.signum()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn group_kkt_for_zero_groups() {
        let reg = regression(60, 3, 3, 5);
        let problem = Problem::new(&reg);
        for kind in [PenaltyKind::Lag, PenaltyKind::OwnOther] {
            let part = build_partition(kind, reg.shape, 0.0).unwrap();
            let lam = 0.6 * part.zero_bound(&problem.gradient_at_zero(), 0.0);
            let fit = solve(&problem, &part, lam, 0.0, &tight()).unwrap();
            let theta = fit.coefficients.penalized().into_owned();
            let grad = problem.gradient(&theta);
            let q = reg.shape.n_predictors();
            let mut zero_groups = 0;
            for g in part.groups() {
                if g.indices.iter().all(|&i| theta[(i / q, i % q)] == 0.0) {
                    zero_groups += 1;
                    let n = g
                        .indices
                        .iter()
                        .map(|&i| grad[(i / q, i % q)].powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!(n <= lam * g.weight * (1.0 + 1e-6), "{kind}");
                }
            }
            assert!(zero_groups < part.groups().count());
        }
    }

    #[test]
    fn objective_is_monotone_for_restarted_fista() {
        let reg = regression(60, 3, 3, 13);
        let problem = Problem::new(&reg);
        let part = build_partition(PenaltyKind::HvarOwnOther, reg.shape, 0.0).unwrap();
        let lam = 0.2 * part.zero_bound(&problem.gradient_at_zero(), 0.0);
        let mut prev = f64::INFINITY;
        for iters in 1..40 {
            let opts = SolverOptions {
                max_iter: iters,
                tol: 1e-300,
                ..SolverOptions::default()
            };
            let fit = solve(&problem, &part, lam, 0.0, &opts).unwrap();
            assert!(fit.objective <= prev + 1e-12 * prev.abs().max(1.0));
            prev = fit.objective;
        }
    }

    #[test]
    fn warm_path_matches_cold_fits() {
        let reg = regression(70, 3, 2, 17);
        for kind in [PenaltyKind::Basic, PenaltyKind::Lag, PenaltyKind::SparseLag] {
            let part = build_partition(kind, reg.shape, 0.0).unwrap();
            let top = part.zero_bound(&Problem::new(&reg).gradient_at_zero(), 0.25);
            let lambdas: Vec<f64> = (0..5).map(|i| top * 0.5f64.powi(i)).collect();
            let opts = SolverOptions {
                tol: 1e-9,
                ..SolverOptions::default()
            };
            let path = fit_path(&reg, &part, &lambdas, 0.25, &opts).unwrap();
            for (lam, fit) in lambdas.iter().zip(&path) {
                let cold = fit_penalized(&reg, &part, *lam, 0.25, &opts).unwrap();
                let gap = (fit.objective - cold.objective).abs() / cold.objective;
                assert!(gap < 1e-6, "{kind} {lam}: {gap}");
            }
        }
    }

    #[test]
    fn series_permutation_invariance() {
        let raw = lcg_data(60, 3, 44);
        let perm = [2usize, 0, 1];
        let permuted = DMatrix::from_fn(60, 3, |t, j| raw[(t, perm[j])]);
        let fit = |vals: DMatrix<f64>, kind| {
            let reg = LagRegression::build(
                &SeriesMatrix::new(vals, 3).unwrap(),
                2,
                0,
                HorizonMode::OneStep,
            )
            .unwrap();
            let part = build_partition(kind, reg.shape, 0.0).unwrap();
            fit_penalized(&reg, &part, 0.4, 0.0, &tight()).unwrap().coefficients
        };
        for kind in [PenaltyKind::Basic, PenaltyKind::Lag] {
            let a = fit(raw.clone(), kind);
            let b = fit(permuted.clone(), kind);
            let shape = a.shape;
            for i in 0..3 {
                for lag in 1..=2 {
                    for j in 0..3 {
                        let x = a.b[(perm[i], shape.phi_col(lag, perm[j]))];
                        let y = b.b[(i, shape.phi_col(lag, j))];
                        assert!((x - y).abs() < 1e-9, "{kind}");
                    }
                }
            }
        }
    }

    #[test]
    fn backtracking_reaches_same_objective() {
        let reg = regression(60, 2, 3, 8);
        let part = build_partition(PenaltyKind::HvarComponent, reg.shape, 0.0).unwrap();
        let a = fit_penalized(&reg, &part, 0.5, 0.0, &tight()).unwrap();
        let b = fit_penalized(
            &reg,
            &part,
            0.5,
            0.0,
            &SolverOptions {
                step_rule: StepRule::Backtracking,
                ..tight()
            },
        )
        .unwrap();
        assert!((a.objective - b.objective).abs() < 1e-8 * a.objective);
    }

    #[test]
    fn invalid_inputs() {
        let reg = regression(30, 2, 1, 1);
        let part = build_partition(PenaltyKind::Basic, reg.shape, 0.0).unwrap();
        assert!(fit_penalized(&reg, &part, -1.0, 0.0, &SolverOptions::default()).is_err());
        assert!(fit_path(&reg, &part, &[0.1, 0.2], 0.0, &SolverOptions::default()).is_err());
        let other = build_partition(PenaltyKind::Basic, LagShape::new(2, 0, 2, 0), 0.0).unwrap();
        assert!(fit_penalized(&reg, &other, 0.1, 0.0, &SolverOptions::default()).is_err());
    }
}
