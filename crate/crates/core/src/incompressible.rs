//! Incompressible Euler in projected form, `d_t v = -P(v.grad v)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::leray::{leray_project, project};
use crate::spectral::VectorField;
use crate::transport::{advective_limit, ScalarTrajectory, VelocitySource};

/// `||div v||` above which [`rhs_incompressible`] refuses its input.
pub const DIVERGENCE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct IncompressibleState {
    pub v: VectorField,
    pub time: f64,
}

impl IncompressibleState {
    /// Checks that `v` is divergence free to `1e-10` (relative to `||v||`
    /// once that exceeds one).
    pub fn new(v: VectorField, time: f64) -> Result<Self> {
        let residual = v.divergence().l2_norm();
        if residual > 1e-10 * v.l2_norm().max(1.0) {
            return Err(Error::NotDivergenceFree { residual });
        }
        let wall = v.wall_flux_max();
        if wall > 1e-10 {
            return Err(Error::WallViolation { max: wall });
        }
        Ok(IncompressibleState { v, time })
    }

    /// Start from `Pv0`.
    pub fn from_projection(v0: &VectorField) -> Result<Self> {
        Self::new(project(v0)?, 0.0)
    }

    pub fn kinetic_energy(&self) -> f64 {
        0.5 * self.v.l2_norm().powi(2)
    }
}

pub fn rhs_incompressible(v: &VectorField) -> Result<VectorField> {
    let residual = v.divergence().l2_norm();
    if residual > DIVERGENCE_TOLERANCE {
        return Err(Error::NotDivergenceFree { residual });
    }
    Ok(-&project(&v.advect_vector(v)?)?)
}

pub fn step_incompressible(state: &IncompressibleState, dt: f64) -> Result<IncompressibleState> {
    step_incompressible_with_scalars(state, &mut [], dt)
}

/// RK4 step with re-projection of every stage velocity. Scalars with
/// source `Incompressible` are advanced by the stage velocities.
pub fn step_incompressible_with_scalars(
    state: &IncompressibleState,
    scalars: &mut [ScalarTrajectory],
    dt: f64,
) -> Result<IncompressibleState> {
    let limit = advective_limit(&state.v);
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    if scalars.iter().any(|s| s.source != VelocitySource::Incompressible) {
        return Err(Error::Config(
            "only incompressible-driven scalars can follow the reference run".into(),
        ));
    }
    let v0 = &state.v;
    let thetas0: Vec<_> = scalars.iter().map(|s| s.theta.clone()).collect();
    let stage = |v: &VectorField, thetas: &[crate::spectral::ScalarField]| -> Result<_> {
        let dv = rhs_incompressible(v)?;
        let dth = thetas
            .iter()
            .map(|t| v.advect(t).map(|a| -&a))
            .collect::<Result<Vec<_>>>()?;
        Ok((dv, dth))
    };
    let shift = |a: f64, k: &(VectorField, Vec<crate::spectral::ScalarField>)| -> Result<_> {
        let v = project(&v0.axpy(a, &k.0))?;
        let th: Vec<_> = thetas0.iter().zip(&k.1).map(|(t, d)| t.axpy(a, d)).collect();
        Ok((v, th))
    };
    let k1 = stage(v0, &thetas0)?;
    let y = shift(0.5 * dt, &k1)?;
    let k2 = stage(&y.0, &y.1)?;
    let y = shift(0.5 * dt, &k2)?;
    let k3 = stage(&y.0, &y.1)?;
    let y = shift(dt, &k3)?;
    let k4 = stage(&y.0, &y.1)?;
    let w = dt / 6.0;
    let v = v0
        .axpy(w, &k1.0)
        .axpy(2.0 * w, &k2.0)
        .axpy(2.0 * w, &k3.0)
        .axpy(w, &k4.0);
    let time = state.time + dt;
    for (n, s) in scalars.iter_mut().enumerate() {
        s.theta = thetas0[n]
            .axpy(w, &k1.1[n])
            .axpy(2.0 * w, &k2.1[n])
            .axpy(2.0 * w, &k3.1[n])
            .axpy(w, &k4.1[n]);
        s.time = time;
    }
    Ok(IncompressibleState {
        v: project(&v)?,
        time,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// Interior sample times at which the residual was evaluated.
    pub times: Vec<f64>,
    /// `||d_t v + v.grad v + grad q||` with `q = -phi`, `Q(v.grad v) = grad phi`.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    /// Largest `||div v||` over the trajectory.
    pub max_divergence: f64,
}

/// Rebuild the pressure of a projected-form trajectory and evaluate the
/// residual of the primitive Euler equations, with `d_t v` from a
/// three-point (possibly nonuniform) difference.
pub fn equivalence_check(trajectory: &[IncompressibleState]) -> Result<EquivalenceReport> {
    if trajectory.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: trajectory.len(),
        });
    }
    let mut times = Vec::new();
    let mut residuals = Vec::new();
    for win in trajectory.windows(3) {
        let (a, b, c) = (&win[0], &win[1], &win[2]);
        let (h1, h2) = (b.time - a.time, c.time - b.time);
        if h1 <= 0.0 || h2 <= 0.0 {
            return Err(Error::Config("trajectory times must increase".into()));
        }
        let dvdt = a
            .v
            .scale(-h2 / (h1 * (h1 + h2)))
            .axpy((h2 - h1) / (h1 * h2), &b.v)
            .axpy(h1 / (h2 * (h1 + h2)), &c.v);
        let adv = b.v.advect_vector(&b.v)?;
        let split = leray_project(&adv)?;
        let grad_q = VectorField::gradient(&split.potential.scale(-1.0));
        let res = &(&dvdt + &adv) + &grad_q;
        times.push(b.time);
        residuals.push(res.l2_norm());
    }
    let max_divergence = trajectory
        .iter()
        .map(|s| s.v.divergence().l2_norm())
        .fold(0.0f64, f64::max);
    let max_residual = residuals.iter().copied().fold(0.0f64, f64::max);
    Ok(EquivalenceReport {
        times,
        residuals,
        max_residual,
        max_divergence,
    })
}
