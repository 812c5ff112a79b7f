//! Low-Mach laboratory: pseudo-spectral compressible and incompressible
//! Euler solvers on the periodic torus and a slip-wall channel, the Leray
//! projection, time-average diagnostics and an epsilon-sweep harness.

pub mod averaging;
pub mod compressible;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod incompressible;
pub mod leray;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
