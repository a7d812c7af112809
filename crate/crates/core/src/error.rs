use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("grid of {n} points cannot resolve {modes} Fourier modes (need a power of two >= {needed})")]
    GridTooSmall { n: usize, modes: usize, needed: usize },
    #[error("truncation mismatch: {left} vs {right} modes")]
    ModeMismatch { left: usize, right: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("density is not strictly positive (minimum {min:e} on the grid)")]
    NonPositiveDensity { min: f64 },
    #[error("fixed-point iteration did not converge after {iterations} iterations (defect {defect:e})")]
    NotConverged { iterations: usize, defect: f64 },
    #[error("linearization point is not stationary (residual {residual:e} > {tol:e})")]
    NotStationary { residual: f64, tol: f64 },
    #[error("eigensolver failed: {0}")]
    EigenFailure(String),
    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },
    #[error("singular linear system: {0}")]
    Singular(String),
    #[error("no stabilizing Riccati solution: {0}")]
    NoStabilizingSolution(String),
    #[error("Riccati certification failed: {0}")]
    CertificationFailed(String),
    #[error("right-hand side has nonzero mean {mean:e}; equation is not solvable")]
    NonZeroMean { mean: f64 },
    /// `state` is the last accepted solution, at time `t`.
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("integration exceeded {0} steps")]
    TooManySteps(usize),
    #[error("time window [{start}, {end}] holds fewer than two usable samples")]
    EmptyWindow { start: f64, end: f64 },
    #[error("time grids differ: {0}")]
    GridMismatch(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
