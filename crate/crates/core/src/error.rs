//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by assembly, certification, solvers and the scenario runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: &'static str,
    },

    #[error("time {t} lies outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("form family is not certified: {0}")]
    NotCertified(&'static str),

    #[error("no coercivity certificate on the search grid: {0}")]
    GridExhausted(String),

    #[error("time {t} is within {h} of breakpoint {breakpoint}")]
    NearBreakpoint { t: f64, h: f64, breakpoint: f64 },

    #[error("form family must be symmetric for this operation")]
    NotSymmetric,

    #[error("coefficient {value} below ellipticity constant {ell} at t = {t}, x = {x}")]
    EllipticityViolated { value: f64, ell: f64, t: f64, x: f64 },

    #[error("requested component `{0}` does not exist for this maximal-regularity space")]
    SpaceMismatch(&'static str),

    #[error("ratio undefined: data norm is zero")]
    RatioUndefined,

    #[error("rank deficient system: smallest singular value {smallest:e} vs tolerance {tolerance:e}")]
    RankDeficient { smallest: f64, tolerance: f64 },

    #[error("fixed-point iteration did not converge in {iterations} iterations (last distance {last_distance:e})")]
    NotConverged {
        iterations: usize,
        last_distance: f64,
        history: Vec<f64>,
    },

    #[error("path violates boundary constraint: {0}")]
    ConstraintViolated(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
