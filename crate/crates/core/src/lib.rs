//! Structured-penalty vector autoregressions.
//!
//! Fits VAR and VARX models by penalized least squares under a family of
//! group, sparse-group, hierarchical and lag-weighted penalties, selects the
//! penalty by rolling-origin cross-validation and compares the result with
//! least-squares and naive benchmarks.

pub mod analysis;
pub mod benchmarks;
pub mod error;
pub mod linalg;
pub mod model;
pub mod penalties;
pub mod refit;
pub mod simulate;
pub mod solvers;
pub mod tuning;

pub use error::{Result, VarError};
pub use model::{
    lag_vector, minnesota_shift, minnesota_unshift, standardize, CoefficientSet, HorizonMode,
    LagRegression, LagShape, ModelSpec, PenaltyKind, RefitMode, Scaling, SeriesMatrix,
};
