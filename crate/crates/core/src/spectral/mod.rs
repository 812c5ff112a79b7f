//! Grids, fields, spectral calculus and field serialization.

mod field;
mod grid;
mod io;
mod norms;

pub use field::{dealiased_product, derivative, Parity, ScalarField, VectorField};
pub use grid::{make_grid, Axis, Geometry, Grid};
pub use io::{read_snapshot, write_csv, write_snapshot, Snapshot};
pub use norms::{sobolev_norm, SobolevNorm, MAX_SOBOLEV_ORDER};

