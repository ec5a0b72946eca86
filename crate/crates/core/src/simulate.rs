//! Companion form, stationarity checks and Gaussian VAR simulation.
//!
//! Random draws come from xoshiro256++ seeded through SplitMix64
//! (`seed_from_u64`). Uniforms are `(x >> 11) · 2⁻⁵³` and normals use the
//! Box–Muller transform, both halves consumed in order, so streams are
//! reproducible on any platform.

use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Result, VarError};
use crate::linalg::cholesky_lower;
use crate::model::SeriesMatrix;

/// Portable standard-normal generator.
#[derive(Debug, Clone)]
pub struct GaussianStream {
    rng: Xoshiro256PlusPlus,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let th = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * th.sin());
        r * th.cos()
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.normal())
    }
}

/// Block companion matrix of `[Φ^(1), …, Φ^(p)]` (`k × kp`).
pub fn to_companion(phi: &DMatrix<f64>, p: usize) -> Result<DMatrix<f64>> {
    let k = phi.nrows();
    if p == 0 || phi.ncols() != k * p {
        return Err(VarError::DimensionMismatch(format!(
            "Φ is {}x{}, expected {k}x{}",
            phi.nrows(),
            phi.ncols(),
            k * p
        )));
    }
    let kp = k * p;
    let mut a = DMatrix::zeros(kp, kp);
    a.rows_mut(0, k).copy_from(phi);
    for i in k..kp {
        a[(i, i - k)] = 1.0;
    }
    Ok(a)
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if a.is_empty() {
        return Ok(0.0);
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(VarError::EigenFailure);
    }
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or(VarError::EigenFailure)?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .fold(0.0, |m: f64, z| m.max(z.norm())))
}

/// `(max |eigenvalue| < 1 − tol, spectral radius)`.
pub fn is_stationary(a: &DMatrix<f64>, tol: f64) -> Result<(bool, f64)> {
    let r = spectral_radius(a)?;
    Ok((r < 1.0 - tol, r))
}

pub const DEFAULT_BURN_IN: usize = 500;

/// Simulates `t_out` observations of a zero-intercept Gaussian VAR(p),
/// discarding `burn_in` initial draws from a zero start.
pub fn simulate_var(
    phi: &DMatrix<f64>,
    sigma_u: &DMatrix<f64>,
    t_out: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SeriesMatrix> {
    let k = phi.nrows();
    if k == 0 || phi.ncols() % k != 0 || phi.ncols() == 0 {
        return Err(VarError::DimensionMismatch(format!(
            "Φ is {}x{}; expected k x kp",
            phi.nrows(),
            phi.ncols()
        )));
    }
    if sigma_u.shape() != (k, k) {
        return Err(VarError::DimensionMismatch(format!(
            "Σ is {}x{}, expected {k}x{k}",
            sigma_u.nrows(),
            sigma_u.ncols()
        )));
    }
    if t_out == 0 {
        return Err(VarError::InvalidSpec("t_out must be positive".into()));
    }
    let p = phi.ncols() / k;
    let (ok, radius) = is_stationary(&to_companion(phi, p)?, 0.0)?;
    if !ok {
        return Err(VarError::NotStationary { radius });
    }
    let c = cholesky_lower(sigma_u)?;
    let mut rng = GaussianStream::new(seed);
    let total = burn_in + t_out;
    // state holds y_{t-1}, …, y_{t-p} stacked
    let mut state = DVector::zeros(k * p);
    let mut out = DMatrix::zeros(t_out, k);
    for t in 0..total {
        let u = &c * rng.normal_vector(k);
        let y = phi * &state + u;
        if p > 1 {
            let shifted = state.rows(0, k * (p - 1)).into_owned();
            state.rows_mut(k, k * (p - 1)).copy_from(&shifted);
        }
        state.rows_mut(0, k).copy_from(&y);
        if t >= burn_in {
            out.row_mut(t - burn_in).copy_from(&y.transpose());
        }
    }
    SeriesMatrix::new(out, k)
}

/// Seeded sparse `k × kp` coefficient matrix rescaled to spectral radius
/// `radius`. Each own first-lag coefficient is nonzero; every other
/// coefficient is nonzero with probability `density`.
pub fn sparse_phi(k: usize, p: usize, density: f64, radius: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&radius) || radius == 0.0 {
        return Err(VarError::InvalidSpec(format!("target radius {radius} outside (0, 1)")));
    }
    let mut rng = GaussianStream::new(seed);
    let mut phi = DMatrix::zeros(k, k * p);
    for lag in 0..p {
        for i in 0..k {
            for j in 0..k {
                let own_first = lag == 0 && i == j;
                if own_first || rng.uniform() < density {
                    let mag = 0.2 + 0.8 * rng.uniform();
                    let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
                    phi[(i, lag * k + j)] = if own_first { mag } else { sign * mag };
                }
            }
        }
    }
    rescale_radius(&phi, p, radius)
}

/// Rescales `Φ^(ℓ) → c^ℓ Φ^(ℓ)`, which multiplies every companion
/// eigenvalue by `c`, so that the spectral radius equals `radius`.
pub fn rescale_radius(phi: &DMatrix<f64>, p: usize, radius: f64) -> Result<DMatrix<f64>> {
    let current = spectral_radius(&to_companion(phi, p)?)?;
    if current == 0.0 {
        return Err(VarError::InvalidSpec("nilpotent Φ cannot be rescaled".into()));
    }
    let c = radius / current;
    let k = phi.nrows();
    let mut out = phi.clone();
    for lag in 0..p {
        let f = c.powi(lag as i32 + 1);
        out.columns_mut(lag * k, k).scale_mut(f);
    }
    Ok(out)
}

/// Random orthogonal matrix (QR of a Gaussian matrix, signs fixed by `diag(R)`).
pub fn random_orthogonal(n: usize, rng: &mut GaussianStream) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.normal());
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// One simulation design: coefficients plus innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: &'static str,
    pub phi: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// Condition number assigned to the poorly conditioned covariance.
pub const POOR_CONDITION: f64 = 50_214_428.0;

/// Seeded stand-ins for the four covariance designs on a sparse VAR₈(4):
/// two-clique, poorly conditioned, scaled identity and dense.
pub fn scenarios(seed: u64) -> Result<Vec<Scenario>> {
    let k = 8;
    let p = 4;
    let phi = scenario_phi(seed)?;
    let mut rng = GaussianStream::new(seed ^ 0x5eed_c0fe);

    let mut clique = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i / 4 == j / 4 {
                clique[(i, j)] = if i == j { 0.1 } else { 0.05 };
            }
        }
    }

    let q = random_orthogonal(k, &mut rng);
    let eig = DVector::from_fn(k, |i, _| 0.1 * POOR_CONDITION.powf(-(i as f64) / (k - 1) as f64));
    let mut poor = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    crate::linalg::symmetrize(&mut poor);

    let scaled = DMatrix::identity(k, k) * 0.1;
    let dense = DMatrix::from_fn(k, k, |i, j| 0.1 * 0.6f64.powi((i as i32 - j as i32).abs()));

    let out = vec![
        Scenario {
            name: "two_clique",
            phi: phi.clone(),
            sigma: clique,
        },
        Scenario {
            name: "poorly_conditioned",
            phi: phi.clone(),
            sigma: poor,
        },
        Scenario {
            name: "scaled_identity",
            phi: phi.clone(),
            sigma: scaled,
        },
        Scenario {
            name: "dense",
            phi,
            sigma: dense,
        },
    ];
    for s in &out {
        cholesky_lower(&s.sigma)?;
        let (ok, _) = is_stationary(&to_companion(&s.phi, p)?, 0.0)?;
        debug_assert!(ok);
    }
    Ok(out)
}

/// The sparse VAR₈(4) coefficient matrix shared by [`scenarios`].
pub fn scenario_phi(seed: u64) -> Result<DMatrix<f64>> {
    sparse_phi(8, 4, 0.06, 0.9, seed)
}

/// The three-series, three-lag coefficient matrix used for the bundled example data.
pub fn example_phi() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        9,
        &[
            -0.29, 0.0, 0.0, -0.62, 0.0, 0.0, -0.49, 0.0, 0.0, //
            0.0, 0.46, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.24, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn companion_layout() {
        let phi = example_phi();
        let a = to_companion(&phi, 3).unwrap();
        assert_eq!(a.shape(), (9, 9));
        assert_eq!(a.rows(0, 3), phi.rows(0, 3));
        assert_eq!(a.view((3, 0), (6, 6)), DMatrix::<f64>::identity(6, 6));
        assert!(a.view((3, 6), (6, 3)).iter().all(|&v| v == 0.0));
        let one = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(to_companion(&one, 1).unwrap(), one);
        assert!(to_companion(&one, 2).is_err());
    }

    #[test]
    fn stationarity_examples() {
        let (ok, r) = is_stationary(&DMatrix::identity(3, 3), 0.0).unwrap();
        assert!(!ok && (r - 1.0).abs() < 1e-12);
        let nil = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1e6, 0.0]);
        let (ok, r) = is_stationary(&nil, 0.0).unwrap();
        assert!(ok && r == 0.0);
        let (_, r) = is_stationary(&(DMatrix::identity(3, 3) * 0.5), 0.0).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
        assert_eq!(spectral_radius(&DMatrix::zeros(4, 4)).unwrap(), 0.0);
        let (ok, _) = is_stationary(&to_companion(&example_phi(), 3).unwrap(), 0.0).unwrap();
        assert!(ok);
    }

    #[test]
    fn simulation_is_seed_deterministic() {
        let phi = DMatrix::identity(2, 2) * 0.5;
        let s = DMatrix::identity(2, 2);
        let a = simulate_var(&phi, &s, 50, 100, 7).unwrap();
        let b = simulate_var(&phi, &s, 50, 100, 7).unwrap();
        let c = simulate_var(&phi, &s, 50, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn white_noise_covariance_and_autocorrelation() {
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let sim = simulate_var(&DMatrix::zeros(2, 2), &sigma, 10_000, 10, 1).unwrap();
        let y = sim.values();
        let n = y.nrows() as f64;
        let mean = y.row_sum() / n;
        let mut cov = DMatrix::zeros(2, 2);
        for r in y.row_iter() {
            let d = r - &mean;
            cov += d.transpose() * d;
        }
        cov /= n;
        assert!((&cov - &sigma).norm() / sigma.norm() < 0.1);

        let sim = simulate_var(&(DMatrix::identity(2, 2) * 0.5), &DMatrix::identity(2, 2), 10_000, 500, 2)
            .unwrap();
        for j in 0..2 {
            let col = sim.values().column(j);
            let mu = col.mean();
            let num: f64 = (1..col.len()).map(|t| (col[t] - mu) * (col[t - 1] - mu)).sum();
            let den: f64 = col.iter().map(|x| (x - mu).powi(2)).sum();
            let rho = num / den;
            assert!((0.4..=0.6).contains(&rho), "{rho}");
            // long-run mean within three standard errors
            let se = (den / col.len() as f64 / col.len() as f64).sqrt() * 3f64.sqrt();
            assert!(mu.abs() < 3.0 * se, "{mu} vs {se}");
        }
    }

    #[test]
    fn tiny_noise_stays_near_zero() {
        let sim = simulate_var(&example_phi(), &(DMatrix::identity(3, 3) * 1e-20), 100, 500, 3)
            .unwrap();
        assert!(sim.values().amax() < 1e-8);
    }

    #[test]
    fn rejects_bad_inputs() {
        let s = DMatrix::identity(2, 2);
        assert!(matches!(
            simulate_var(&DMatrix::identity(2, 2), &s, 10, 10, 1),
            Err(VarError::NotStationary { .. })
        ));
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            simulate_var(&DMatrix::zeros(2, 2), &bad, 10, 10, 1),
            Err(VarError::NotSpd(_))
        ));
    }

    #[test]
    fn scenario_properties() {
        let sc = scenarios(42).unwrap();
        assert_eq!(sc.len(), 4);
        for s in &sc {
            let (ok, r) = is_stationary(&to_companion(&s.phi, 4).unwrap(), 0.0).unwrap();
            assert!(ok);
            assert!((r - 0.9).abs() < 1e-9);
        }
        let cond = |m: &DMatrix<f64>| {
            let ev = nalgebra::SymmetricEigen::new(m.clone()).eigenvalues;
            ev.max() / ev.min()
        };
        for i in 0..8 {
            for j in 0..8 {
                if i / 4 != j / 4 {
                    assert_eq!(sc[0].sigma[(i, j)], 0.0);
                }
            }
        }
        assert!(cond(&sc[1].sigma) >= 1e7);
        assert!((cond(&sc[2].sigma) - 1.0).abs() < 1e-12);
        assert!(cond(&sc[3].sigma) < 16.0);
        assert!(sc[3].sigma.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn gaussian_stream_moments() {
        let mut g = GaussianStream::new(99);
        let xs: Vec<f64> = (0..20_000).map(|_| g.normal()).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03 && (var - 1.0).abs() < 0.03);
    }
}
