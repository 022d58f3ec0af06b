//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("direction must be a unit vector (|nu| = {norm})")]
    NotUnitDirection { norm: f64 },

    #[error("quadrature box half-extent {half_extent} does not cover kernel support {support}")]
    QuadratureBoxTooSmall { half_extent: f64, support: f64 },

    #[error("operation requires a radial kernel")]
    NonRadialKernel,

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("point lies outside the restricted window")]
    OutsideWindow,

    #[error("region contains no lattice sites")]
    EmptyRegion,

    #[error("coarse cube contains no sites")]
    EmptyCube,

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("target violates the window margin: {0}")]
    MarginViolation(String),

    #[error("fft pair counts failed integer rounding: residue {max_residue:.3e} exceeds {threshold:.3e}")]
    FftRounding { max_residue: f64, threshold: f64 },

    #[error("rate fit needs at least {needed} usable points, got {got}")]
    NotEnoughPoints { needed: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
