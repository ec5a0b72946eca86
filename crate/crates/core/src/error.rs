use thiserror::Error;

/// Errors produced by the estimation, tuning and refitting routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VarError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("column {column} has zero variance")]
    ZeroVariance { column: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("penalty structure {structure} is not available for {model} models")]
    UnsupportedStructure { structure: String, model: &'static str },

    #[error("rank-deficient design: {0}")]
    RankDeficient(String),

    #[error("restriction selects no coefficients")]
    EmptySupport,

    #[error("triangular factor W22 is singular at iteration {iteration}")]
    SingularW22 { iteration: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("coefficient matrix is not stationary (spectral radius {radius:.6})")]
    NotStationary { radius: f64 },

    #[error("eigenvalue computation did not converge")]
    EigenFailure,

    #[error("model has exogenous terms; operation requires a pure VAR")]
    NonVarModel,

    #[error("forecasting {n_ahead} steps ahead needs {needed} future exogenous rows, got {got}")]
    MissingExogenousFutures { n_ahead: usize, needed: usize, got: usize },

    #[error("history has {got} rows, at least {needed} required")]
    InsufficientHistory { needed: usize, got: usize },
}

impl VarError {
    /// Coarse classification used by front ends to pick an exit status.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            VarError::RankDeficient(_)
                | VarError::SingularW22 { .. }
                | VarError::NotSpd(_)
                | VarError::NotStationary { .. }
                | VarError::EigenFailure
                | VarError::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, VarError>;
