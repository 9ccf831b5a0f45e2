//! Error types shared across the crate.

use thiserror::Error;

/// Errors from model construction and validation.
#[derive(Debug, Clone, Error)]
pub enum ModelError {
    #[error("process covariance Q must be symmetric positive semi-definite: {0}")]
    InvalidProcessCovariance(String),
    #[error("measurement covariance R must be symmetric positive definite: {0}")]
    InvalidMeasurementCovariance(String),
    #[error("step size dt must be positive, got {0}")]
    InvalidStep(f64),
    #[error("reference vector {name} must be non-zero")]
    ZeroReference { name: &'static str },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Errors from the simulator.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("invalid run: {0}")]
    InvalidRun(String),
}

/// Errors from the Riccati solver and gain synthesis.
#[derive(Debug, Clone, Error)]
pub enum RiccatiError {
    #[error("shaped measurement covariance N R N^T is not positive definite")]
    SingularN,
    #[error("innovation covariance C P C^T + R_d is singular")]
    SingularInnovation,
    #[error("no convergence after {iterations} iterations, last residual {residual:.3e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("gain mask index ({row}, {col}) out of range 1..=6")]
    IndexOutOfRange { row: usize, col: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from filter construction and stepping.
#[derive(Debug, Clone, Error)]
pub enum FilterError {
    #[error("filter {0} requires gains that were not supplied")]
    MissingGains(&'static str),
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("innovation covariance is singular")]
    SingularInnovation,
    #[error("filter state became non-finite at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("observation directions are parallel within {angle:.3e} rad")]
    DegenerateGeometry { angle: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
}

/// Errors from metric computation.
#[derive(Debug, Clone, Error)]
pub enum MetricsError {
    #[error("window start {window_start} s leaves no samples (series ends at {end} s)")]
    EmptyWindow { window_start: f64, end: f64 },
    #[error("series lengths differ: {0}")]
    LengthMismatch(String),
}
