use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("point {point:?} lies outside the chart domain")]
    Domain { point: Vec<f64> },
    #[error("closest point foot left the chart domain at {foot:?}")]
    BoundaryHit { foot: Vec<f64> },
    #[error("newton did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (defect {0:e})")]
    NotSymmetric(f64),
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
    #[error("section has Lipschitz constant {0} > 1 on samples")]
    LipschitzViolation(f64),
    #[error("grid too coarse: {0} nodes per axis (need at least 8)")]
    GridTooCoarse(usize),
    #[error("graph metric is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("varifold is not stationary: defect {defect:e} exceeds tolerance {tol:e}")]
    NotStationary { defect: f64, tol: f64 },
    #[error("atom {index} at {point:?} lies outside the projection tube")]
    OutsideTube { index: usize, point: Vec<f64> },
    #[error("hypothesis `{name}` failed: measured {value:e}, bound {bound:e}")]
    Hypothesis { name: String, value: f64, bound: f64 },
    #[error("fiber clustering failed: {0}")]
    Fiber(String),
    #[error("too many bands: found {found}, allowed {allowed}")]
    TooManyBands { found: usize, allowed: usize },
    #[error("Q mismatch: {0} vs {1}")]
    QMismatch(usize, usize),
    #[error("coincident base points {0} and {1}")]
    Coincident(usize, usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("non-convergent jet sequence: {0}")]
    NotCauchy(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
