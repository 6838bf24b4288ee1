//! Error taxonomy shared by every module.
//!
//! Variants are grouped by how the command-line driver maps them to exit
//! codes: configuration/validation problems, numerical guard trips, and
//! statistical-power failures.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid grid parameters (dimension, box size, resolution).
    #[error("invalid grid: {0}")]
    Grid(String),

    /// Field shape does not match the operation (wrong component count,
    /// mismatched grids, missing representation).
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A required representation (physical or spectral) is absent.
    #[error("missing representation: {0}")]
    Representation(String),

    /// Parameter outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Frequency-lattice incompatibility (e.g. scaling that does not map
    /// the lattice to itself).
    #[error("lattice error: {0}")]
    Lattice(String),

    /// Decomposition does not cover the requested data band.
    #[error("coverage error: {0}")]
    Coverage(String),

    /// Grid too coarse to resolve a decomposition cube.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Spectral mass outside the decomposition coverage exceeds tolerance.
    #[error("truncation error: residual {residual:.3e} exceeds {tolerance:.3e}")]
    Truncation { residual: f64, tolerance: f64 },

    /// Operation preconditions violated (e.g. nonzero mean for a
    /// homogeneous norm of negative order).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Degenerate input (zero field where a ratio is required).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Too few samples for the requested statistic.
    #[error("insufficient statistical power: {0}")]
    StatisticalPower(String),

    /// Numerical guard tripped during time integration.
    #[error("numerical guard: {0}")]
    NumericalGuard(String),

    /// Configuration file syntax or content problem.
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    /// Malformed or unsupported field file.
    #[error("field file error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code the command-line driver reports for this error.
    ///
    /// 2 = configuration/validation, 3 = numerical guard,
    /// 4 = insufficient statistical power.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalGuard(_) | Error::Truncation { .. } => 3,
            Error::StatisticalPower(_) => 4,
            _ => 2,
        }
    }
}
