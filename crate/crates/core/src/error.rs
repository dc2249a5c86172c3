use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponent {0} is outside the admissible range")]
    BadExponent(f64),

    #[error("coefficient field is not elliptic (lambda = {lambda})")]
    NotElliptic { lambda: f64 },

    #[error("coefficient field is not {p}-elliptic (Delta_p = {delta})")]
    NotPElliptic { p: f64, delta: f64 },

    #[error("smallness criterion fails: sigma_p * |Im A| = {lhs} >= lambda = {lambda}")]
    CriterionFailed { lhs: f64, lambda: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("point ({zeta}, {eta}) lies on the singular set of the Bellman function")]
    OnSingularSet { zeta: String, eta: String },

    #[error("mollifier quadrature error estimate {estimate:e} exceeds tolerance")]
    QuadratureFailure { estimate: f64 },

    #[error("bad geometry: {0}")]
    BadGeometry(String),

    #[error("Koch level {0} exceeds the supported maximum of 8")]
    LevelTooLarge(usize),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("linear system is singular")]
    SingularSystem,

    #[error("exponential scheme limited to {max} dofs, got {dofs}")]
    TooLargeForExponential { dofs: usize, max: usize },

    #[error("operator has no Dirichlet part, so the static operator is not invertible")]
    NoDirichlet,

    #[error("time grid too coarse: derivative validation off by {relative:.3}")]
    GridTooCoarse { relative: f64 },

    #[error("time integral truncated: tail estimate {tail:e} exceeds 1% of {value:e}")]
    TruncationWarning { tail: f64, value: f64 },

    #[error("rotation angle {theta} is outside the admissible range (|theta| < {limit})")]
    AngleOutOfRange { theta: f64, limit: f64 },

    #[error("contour quadrature tail {tail:e} exceeds tolerance")]
    ContourError { tail: f64 },

    #[error("contour angle {nu} is not admissible: {reason}")]
    AngleConflict { nu: f64, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::InvalidInput(e.to_string())
    }
}
