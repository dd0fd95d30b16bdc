use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coincident sites: separation vector has zero length")]
    CoincidentSites,

    #[error("fewer than 2 sites within radius {radius}")]
    TooFewSites { radius: f64 },

    #[error("site count {n} out of range 1..={max}")]
    SiteCountOutOfRange { n: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator `{label}` is not Hermitian (defect {defect:.3e})")]
    NonHermitian { label: String, defect: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("t1 = {t1:e} s is not an even multiple of pi/omega1 = {half_cycle:e} s")]
    NotHalfCycleMultiple { t1: f64, half_cycle: f64 },

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("degenerate curve: {0}")]
    DegenerateCurve(String),

    #[error("no convergence after {refinements} step halvings (last change {last_change:.3e})")]
    NonConvergence { refinements: usize, last_change: f64 },

    #[error("malformed table: {0}")]
    Table(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. } | Error::NonHermitian { .. } | Error::DegenerateKernel(_)
        )
    }
}
