use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes. Input and validation problems are separated from
/// statistical degeneracies so callers (and the CLI exit code) can tell them
/// apart.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("standard error for variant {variant} (trait {trait_idx}) must be > 0, got {value}")]
    NonPositiveSe {
        variant: String,
        trait_idx: usize,
        value: f64,
    },

    #[error("LD entry ({row}, {col}) = {value} lies outside [-1, 1]")]
    LdOutOfRange { row: usize, col: usize, value: f64 },

    #[error("LD matrix is not symmetric: |ld[{row},{col}] - ld[{col},{row}]| = {diff:.3e}")]
    LdAsymmetric { row: usize, col: usize, diff: f64 },

    #[error("LD matrix diagonal entry {0} is not 1")]
    LdDiagonal(usize),

    #[error(
        "LD matrix is numerically singular (min eigenvalue {min_eigenvalue:.3e}); \
         prune correlated variants (e.g. --prune-r2 0.6) and retry"
    )]
    SingularLd { min_eigenvalue: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid simulation config: {0}")]
    Config(String),

    #[error("weight matrix Omega(eta) is singular or not positive definite at eta = {eta}")]
    CriterionSingular { eta: f64 },

    #[error(
        "selected trait-2 effects are numerically zero so the projection is degenerate; \
         use the LM test to check for a trait-1 signal"
    )]
    DegenerateProjection,

    #[error(
        "only {accepted} of {draws} Monte-Carlo draws satisfied the selection event \
         (acceptance rate {rate:.2e})"
    )]
    LowAcceptance {
        accepted: usize,
        draws: usize,
        rate: f64,
    },

    #[error("lead variants are perfectly correlated; the two-variant weight matrix is singular")]
    SingularSelection,

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by the statistics themselves rather than by
    /// malformed input.
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            Error::SingularLd { .. }
                | Error::CriterionSingular { .. }
                | Error::DegenerateProjection
                | Error::LowAcceptance { .. }
                | Error::SingularSelection
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl Error {
    /// Short stable name of the error variant, used to tally failures.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::NonFinite(_) => "non_finite",
            Error::NonPositiveSe { .. } => "non_positive_se",
            Error::LdOutOfRange { .. } => "ld_out_of_range",
            Error::LdAsymmetric { .. } => "ld_asymmetric",
            Error::LdDiagonal(_) => "ld_diagonal",
            Error::SingularLd { .. } => "singular_ld",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Config(_) => "config",
            Error::CriterionSingular { .. } => "criterion_singular",
            Error::DegenerateProjection => "degenerate_projection",
            Error::LowAcceptance { .. } => "low_acceptance",
            Error::SingularSelection => "singular_selection",
            Error::Grid(_) => "grid",
            Error::Json(_) => "json",
        }
    }
}
