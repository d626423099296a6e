use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unsupported dimension {0}: the mixed-determinant oracle is limited to n <= 4")]
    UnsupportedDimension(usize),

    #[error("eigenvalue bound hypothesis violated: {0}")]
    OutOfRange(String),

    #[error("grid: {0}")]
    Grid(String),

    #[error("chi_phi is not positive at grid point {point} (min generalized eigenvalue {min_eig:.6e})")]
    StateInvalid { point: usize, min_eig: f64 },

    #[error("cone condition violated: margin {margin:.6e} at grid point {point} {coords:?}")]
    ConeViolated {
        margin: f64,
        point: usize,
        coords: Vec<usize>,
    },

    #[error("time step rejected after {halvings} halvings at t = {t}")]
    StepFailure { t: f64, halvings: u32 },

    #[error("time {time} outside trajectory [{start}, {end}]")]
    OutsideTrajectory { time: f64, start: f64, end: f64 },

    #[error("snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
