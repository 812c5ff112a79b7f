//! Passive scalars `d_t theta + v.grad theta = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{fit_rate, run_convergence_sweep, RateFit, RunConfig};
use crate::spectral::{ScalarField, VectorField};

/// Which velocity carries a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VelocitySource {
    /// The compressible velocity `v`.
    Compressible,
    /// The incompressible reference velocity.
    Incompressible,
    /// `Pv`, the divergence-free part of the compressible velocity.
    LerayOfCompressible,
}

#[derive(Debug, Clone)]
pub struct ScalarTrajectory {
    pub theta: ScalarField,
    pub source: VelocitySource,
    pub time: f64,
}

impl ScalarTrajectory {
    pub fn new(theta: ScalarField, source: VelocitySource) -> Self {
        ScalarTrajectory {
            theta,
            source,
            time: 0.0,
        }
    }
}

/// Default initial scalar `cos x + sin y` (`cos x + cos y` on the channel,
/// where scalars carry the cosine parity).
pub fn default_scalar(grid: &crate::spectral::Grid) -> Result<ScalarField> {
    use crate::spectral::{Geometry, Parity};
    let parity = Parity::scalar(grid.geometry());
    match grid.geometry() {
        Geometry::Torus2D => ScalarField::from_fn(grid, parity, |x, y| x.cos() + y.sin()),
        Geometry::Channel2D => ScalarField::from_fn(grid, parity, |x, y| x.cos() + y.cos()),
    }
}

/// Advective CFL limit `0.4 dx / max|v|`.
pub fn advective_limit(velocity: &VectorField) -> f64 {
    let speed = velocity.max_speed();
    if speed > 0.0 {
        crate::compressible::CFL_NUMBER * velocity.grid().min_spacing() / speed
    } else {
        f64::INFINITY
    }
}

/// RK4 step of `d_t theta = -v.grad theta` with `v` frozen over the step.
pub fn advect_step(theta: &ScalarField, velocity: &VectorField, dt: f64) -> Result<ScalarField> {
    if !theta.same_grid(&velocity.u) {
        return Err(Error::GridMismatch);
    }
    let limit = advective_limit(velocity);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    let f = |t: &ScalarField| velocity.advect(t).map(|a| -&a);
    let k1 = f(theta)?;
    let k2 = f(&theta.axpy(0.5 * dt, &k1))?;
    let k3 = f(&theta.axpy(0.5 * dt, &k2))?;
    let k4 = f(&theta.axpy(dt, &k3))?;
    let w = dt / 6.0;
    Ok(theta
        .axpy(w, &k1)
        .axpy(2.0 * w, &k2)
        .axpy(2.0 * w, &k3)
        .axpy(w, &k4))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarErrorRow {
    pub eps: f64,
    /// `sup_t ||theta - theta~||` with `theta` carried by `v`.
    pub compressible: f64,
    /// Same with `theta` carried by `Pv`.
    pub leray: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarErrorTable {
    pub rows: Vec<ScalarErrorRow>,
    pub compressible_fit: Option<RateFit>,
    pub leray_fit: Option<RateFit>,
}

/// Run the sweep described by `config` and tabulate the scalar errors.
/// Failed or flagged epsilon values are left out.
pub fn scalar_error_experiment(config: &RunConfig) -> Result<ScalarErrorTable> {
    let report = run_convergence_sweep(config)?;
    let rows: Vec<ScalarErrorRow> = report
        .rows
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| {
            r.metrics.as_ref().map(|m| ScalarErrorRow {
                eps: r.eps,
                compressible: m.scalar_error,
                leray: m.scalar_leray_error,
            })
        })
        .collect();
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let fit = |vals: Vec<f64>| {
        if vals.len() >= 3 && vals.iter().all(|v| *v > 0.0) {
            fit_rate(&eps, &vals).ok()
        } else {
            None
        }
    };
    Ok(ScalarErrorTable {
        compressible_fit: fit(rows.iter().map(|r| r.compressible).collect()),
        leray_fit: fit(rows.iter().map(|r| r.leray).collect()),
        rows,
    })
}
