use std::path::PathBuf;

use crate::spectral::{Geometry, Parity};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid resolution {nx}x{ny}: both sizes must be even and at least 8")]
    InvalidResolution { nx: usize, ny: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("parity {parity:?} is not valid for a {geometry:?} field")]
    ParityMismatch { geometry: Geometry, parity: Parity },

    #[error("array shape {found:?} does not match the grid (expected {expected:?})")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("incompatible Neumann data: integral of rhs {rhs_integral:e} vs boundary flux {flux_integral:e}")]
    IncompatibleNeumann {
        rhs_integral: f64,
        flux_integral: f64,
    },

    #[error("wall condition violated: |v.n| reaches {max:e} on the boundary")]
    WallViolation { max: f64 },

    #[error("density left the low-Mach regime: min(1 + eps*rho) = {min_total:.4} <= {guard}")]
    Vacuum { min_total: f64, guard: f64 },

    #[error("time step {dt:e} exceeds the stability limit {limit:e}")]
    Cfl { dt: f64, limit: f64 },

    #[error("velocity is not divergence-free: ||div v|| = {residual:e}")]
    NotDivergenceFree { residual: f64 },

    #[error("epsilon {0} outside (0, 1/2]")]
    InvalidEpsilon(f64),

    #[error("value {value} outside the admissible range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("pressure law is not normalized: p(1) = {p1}, p'(1) = {dp1}")]
    PressureNormalization { p1: f64, dp1: f64 },

    #[error("rate fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("rate fit needs positive data, got {0}")]
    NonPositive(f64),

    #[error("forcing under-resolved: {samples_per_period:.2} samples per period (need >= 8)")]
    UnderResolved { samples_per_period: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed snapshot: {0}")]
    Snapshot(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
