//! Group structures, penalty evaluation and proximal operators.
//!
//! Penalized coefficients are the `k × q` block `Θ = [Φ, β]` (intercept
//! excluded). Coefficient `Θ[i, c]` has flat index `i * q + c`.

use nalgebra::DMatrix;

use crate::error::{Result, VarError};
use crate::model::{LagShape, PenaltyKind};

/// A weighted set of penalized coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub indices: Vec<usize>,
    pub weight: f64,
}

/// The grouping induced by a penalty structure.
///
/// Groups are organized in chains: each chain is a sequence of nested groups
/// listed outermost first. Disjoint structures use chains of length one.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPartition {
    pub kind: PenaltyKind,
    pub shape: LagShape,
    pub chains: Vec<Vec<Group>>,
    /// Per-coefficient L1 weights, present for structures with an L1 term.
    pub l1_weights: Option<Vec<f64>>,
    /// Whether `α` mixes the L1 and group terms.
    pub sparse: bool,
}

impl GroupPartition {
    /// Number of penalized coefficients, `k (kp + ms)`.
    pub fn len(&self) -> usize {
        self.shape.k * self.shape.n_predictors()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_nested(&self) -> bool {
        self.chains.iter().any(|c| c.len() > 1)
    }

    pub fn groups(&self) -> impl Iterator<Item = &Group> {
        self.chains.iter().flatten()
    }

    /// Multipliers `(group term, L1 term)` for a given `α`.
    fn scales(&self, alpha: f64) -> (f64, f64) {
        if self.sparse {
            (1.0 - alpha, alpha)
        } else {
            (1.0, 1.0)
        }
    }

    /// `P(Θ)` without the `λ` factor.
    pub fn penalty(&self, theta: &DMatrix<f64>, alpha: f64) -> f64 {
        let q = self.shape.n_predictors();
        let at = |idx: usize| theta[(idx / q, idx % q)];
        let (gs, ls) = self.scales(alpha);
        let mut total = 0.0;
        if gs != 0.0 {
            for g in self.groups() {
                let norm = g.indices.iter().map(|&i| at(i).powi(2)).sum::<f64>().sqrt();
                total += gs * g.weight * norm;
            }
        }
        if let Some(w) = &self.l1_weights {
            if ls != 0.0 {
                total += ls * w.iter().enumerate().map(|(i, wi)| wi * at(i).abs()).sum::<f64>();
            }
        }
        total
    }

    /// `λ P(Θ)`.
    pub fn penalty_value(&self, theta: &DMatrix<f64>, lambda: f64, alpha: f64) -> Result<f64> {
        self.check_dims(theta)?;
        Ok(lambda * self.penalty(theta, alpha))
    }

    /// Proximal map `argmin_U ½‖U − V‖² + τ P(U)`, applied in place.
    ///
    /// The L1 part is applied first, then each chain is group
    /// soft-thresholded from its innermost group outward.
    pub fn prox_in_place(&self, v: &mut DMatrix<f64>, tau: f64, alpha: f64) {
        if tau <= 0.0 {
            return;
        }
        let q = self.shape.n_predictors();
        let (gs, ls) = self.scales(alpha);
        if let Some(w) = &self.l1_weights {
            if ls > 0.0 {
                for (idx, wi) in w.iter().enumerate() {
                    let x = &mut v[(idx / q, idx % q)];
                    *x = soft_threshold(*x, tau * ls * wi);
                }
            }
        }
        if gs > 0.0 {
            for chain in &self.chains {
                for g in chain.iter().rev() {
                    let norm = g
                        .indices
                        .iter()
                        .map(|&i| v[(i / q, i % q)].powi(2))
                        .sum::<f64>()
                        .sqrt();
                    let shrink = group_shrink(norm, tau * gs * g.weight);
                    if shrink != 1.0 {
                        for &i in &g.indices {
                            v[(i / q, i % q)] *= shrink;
                        }
                    }
                }
            }
        }
    }

    pub fn prox(&self, v: &DMatrix<f64>, tau: f64, alpha: f64) -> DMatrix<f64> {
        let mut out = v.clone();
        self.prox_in_place(&mut out, tau, alpha);
        out
    }

    /// Smallest `λ` known to make `Θ = 0` optimal when the loss gradient at
    /// zero is `-grad`. Exact for L1 and disjoint structures; for nested
    /// chains the whole dual budget is placed on the outermost group, which
    /// gives an upper bound.
    pub fn zero_bound(&self, grad: &DMatrix<f64>, alpha: f64) -> f64 {
        let q = self.shape.n_predictors();
        let at = |idx: usize| grad[(idx / q, idx % q)];
        let (gs, ls) = self.scales(alpha);
        let mut bound: f64 = 0.0;
        let mut covered = vec![false; self.len()];
        for chain in &self.chains {
            let Some(outer) = chain.first() else { continue };
            let vals: Vec<f64> = outer.indices.iter().map(|&i| at(i)).collect();
            for &i in &outer.indices {
                covered[i] = true;
            }
            let norm = vals.iter().map(|x| x * x).sum::<f64>().sqrt();
            let group_only = if gs > 0.0 && outer.weight > 0.0 {
                norm / (gs * outer.weight)
            } else {
                f64::INFINITY
            };
            let b = match (&self.l1_weights, ls > 0.0) {
                (Some(w), true) => {
                    let l1_only = outer
                        .indices
                        .iter()
                        .map(|&i| at(i).abs() / (ls * w[i]))
                        .fold(0.0, f64::max);
                    sparse_group_bound(&vals, &outer.indices, w, ls, gs * outer.weight)
                        .min(l1_only)
                        .min(group_only)
                }
                _ => group_only,
            };
            bound = bound.max(b);
        }
        if let (Some(w), true) = (&self.l1_weights, ls > 0.0) {
            for (i, wi) in w.iter().enumerate() {
                if !covered[i] {
                    bound = bound.max(at(i).abs() / (ls * wi));
                }
            }
        }
        bound
    }

    /// Whether `Θ = 0` minimizes `‖Ỹ − ΘZ̃‖² + λP(Θ)` given the loss gradient
    /// at zero `-grad` (with `grad = 2 Ỹ Z̃'`). Zero is optimal exactly when it
    /// is a fixed point of the proximal map.
    pub fn zero_is_optimal(&self, grad: &DMatrix<f64>, lambda: f64, alpha: f64) -> bool {
        self.prox(grad, lambda, alpha).iter().all(|&x| x == 0.0)
    }

    fn check_dims(&self, theta: &DMatrix<f64>) -> Result<()> {
        if theta.nrows() != self.shape.k || theta.ncols() != self.shape.n_predictors() {
            return Err(VarError::DimensionMismatch(format!(
                "coefficients are {}x{}, partition expects {}x{}",
                theta.nrows(),
                theta.ncols(),
                self.shape.k,
                self.shape.n_predictors()
            )));
        }
        Ok(())
    }
}

/// Smallest `λ` with `‖S(v, λ a w_i)‖ ≤ λ b`, found by bisection.
fn sparse_group_bound(v: &[f64], idx: &[usize], w: &[f64], a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        return f64::INFINITY;
    }
    let excess = |lam: f64| {
        let n = v
            .iter()
            .zip(idx)
            .map(|(x, &i)| soft_threshold(*x, lam * a * w[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        n - lam * b
    };
    let mut hi = v.iter().map(|x| x * x).sum::<f64>().sqrt() / b;
    if hi == 0.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Multiplier `max(0, 1 − t/‖v‖)` of block soft-thresholding.
pub fn group_shrink(norm: f64, t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else if norm <= t {
        0.0
    } else {
        1.0 - t / norm
    }
}

/// Builds the grouping for `kind`. `mix` is the Tapered exponent `γ` and is
/// ignored by other structures.
pub fn build_partition(kind: PenaltyKind, shape: LagShape, mix: f64) -> Result<GroupPartition> {
    kind.check_applicable(&shape)?;
    let LagShape { k, m, p, s } = shape;
    let q = shape.n_predictors();
    let flat = |i: usize, col: usize| i * q + (col - 1);
    let kf = k as f64;
    let mut chains: Vec<Vec<Group>> = Vec::new();
    let mut l1_weights = None;
    let single = |indices: Vec<usize>, weight: f64| vec![Group { indices, weight }];

    let exo_columns = |chains: &mut Vec<Vec<Group>>| {
        for lag in 1..=s {
            for j in 0..m {
                let col = shape.beta_col(lag, j);
                chains.push(single((0..k).map(|i| flat(i, col)).collect(), kf.sqrt()));
            }
        }
    };

    match kind {
        PenaltyKind::Basic => {
            l1_weights = Some(vec![1.0; k * q]);
        }
        PenaltyKind::Tapered => {
            if !(0.0..=1.0).contains(&mix) {
                return Err(VarError::InvalidSpec(format!("gamma {mix} outside [0, 1]")));
            }
            let mut w = vec![0.0; k * q];
            for lag in 1..=p {
                let wl = (lag as f64).powf(mix);
                for i in 0..k {
                    for j in 0..k {
                        w[flat(i, shape.phi_col(lag, j))] = wl;
                    }
                }
            }
            l1_weights = Some(w);
        }
        PenaltyKind::Lag | PenaltyKind::SparseLag => {
            for lag in 1..=p {
                let mut idx = Vec::with_capacity(k * k);
                for i in 0..k {
                    for j in 0..k {
                        idx.push(flat(i, shape.phi_col(lag, j)));
                    }
                }
                chains.push(single(idx, kf));
            }
            exo_columns(&mut chains);
        }
        PenaltyKind::OwnOther | PenaltyKind::SparseOwnOther => {
            for lag in 1..=p {
                let own = (0..k).map(|i| flat(i, shape.phi_col(lag, i))).collect();
                chains.push(single(own, kf.sqrt()));
                let other: Vec<usize> = (0..k)
                    .flat_map(|i| {
                        (0..k)
                            .filter(move |&j| j != i)
                            .map(move |j| flat(i, shape.phi_col(lag, j)))
                    })
                    .collect();
                if !other.is_empty() {
                    chains.push(single(other, (kf * (kf - 1.0)).sqrt()));
                }
            }
            exo_columns(&mut chains);
        }
        PenaltyKind::EndogenousFirst => {
            if s != p || m == 0 {
                return Err(VarError::InvalidSpec(
                    "the endogenous-first structure requires exogenous series and s = p".into(),
                ));
            }
            for lag in 1..=p {
                for j in 0..k {
                    let beta: Vec<usize> =
                        (0..m).map(|e| flat(j, shape.beta_col(lag, e))).collect();
                    let mut joint: Vec<usize> =
                        (0..k).map(|e| flat(j, shape.phi_col(lag, e))).collect();
                    joint.extend(&beta);
                    chains.push(vec![
                        Group {
                            indices: joint,
                            weight: 1.0,
                        },
                        Group {
                            indices: beta,
                            weight: 1.0,
                        },
                    ]);
                }
            }
        }
        PenaltyKind::HvarComponent => {
            for i in 0..k {
                let chain = (1..=p)
                    .map(|lag| Group {
                        indices: (lag..=p)
                            .flat_map(|l| (0..k).map(move |j| flat(i, shape.phi_col(l, j))))
                            .collect(),
                        weight: 1.0,
                    })
                    .collect();
                chains.push(chain);
            }
        }
        PenaltyKind::HvarOwnOther => {
            for i in 0..k {
                let mut chain = Vec::with_capacity(2 * p);
                for lag in 1..=p {
                    let tail = |from: usize| -> Vec<usize> {
                        (from..=p)
                            .flat_map(|l| (0..k).map(move |j| flat(i, shape.phi_col(l, j))))
                            .collect()
                    };
                    chain.push(Group {
                        indices: tail(lag),
                        weight: 1.0,
                    });
                    let mut inner: Vec<usize> = (0..k)
                        .filter(|&j| j != i)
                        .map(|j| flat(i, shape.phi_col(lag, j)))
                        .collect();
                    inner.extend(tail(lag + 1));
                    if !inner.is_empty() {
                        chain.push(Group {
                            indices: inner,
                            weight: 1.0,
                        });
                    }
                }
                chains.push(chain);
            }
        }
        PenaltyKind::HvarElement => {
            for i in 0..k {
                for j in 0..k {
                    let chain = (1..=p)
                        .map(|lag| Group {
                            indices: (lag..=p).map(|l| flat(i, shape.phi_col(l, j))).collect(),
                            weight: 1.0,
                        })
                        .collect();
                    chains.push(chain);
                }
            }
        }
    }

    Ok(GroupPartition {
        kind,
        shape,
        chains,
        l1_weights: if kind.is_sparse_group() {
            Some(vec![1.0; k * q])
        } else {
            l1_weights
        },
        sparse: kind.is_sparse_group(),
    })
}
