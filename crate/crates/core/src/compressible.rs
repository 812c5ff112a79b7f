//! Isentropic compressible Euler in low-Mach scaling,
//!
//! ```text
//! d_t rho = -div(rho v) - div(v) / eps
//! d_t v   = -v.grad v - h_eps(rho) grad rho - grad(rho) / eps
//! ```
//!
//! with `rho` the scaled density perturbation. Time stepping is Strang
//! splitting: the stiff linear part is propagated exactly per Fourier mode
//! and the remaining terms are advanced with RK4.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leray::project;
use crate::spectral::{derivative, Axis, Grid, Parity, ScalarField, VectorField};
use crate::transport::{ScalarTrajectory, VelocitySource};

/// Smallest admissible total density `1 + eps * rho`.
pub const VACUUM_GUARD: f64 = 0.1;

/// Courant number used by [`cfl_dt`].
pub const CFL_NUMBER: f64 = 0.4;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Barotropic pressure law normalized so that `p(1) = p'(1) = 1`.
#[derive(Clone)]
pub enum PressureLaw {
    /// `p(s) = (gamma - 1 + s^gamma) / gamma`.
    GammaLaw(f64),
    /// User-supplied `p`, `p'`, `p''`.
    Custom {
        p: ScalarFn,
        dp: ScalarFn,
        d2p: ScalarFn,
    },
}

impl fmt::Debug for PressureLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PressureLaw::GammaLaw(g) => write!(f, "GammaLaw({g})"),
            PressureLaw::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl Default for PressureLaw {
    fn default() -> Self {
        PressureLaw::GammaLaw(1.4)
    }
}

impl PressureLaw {
    pub fn gamma(gamma: f64) -> Result<Self> {
        if !(gamma >= 1.0 && gamma.is_finite()) {
            return Err(Error::OutOfRange {
                value: gamma,
                lo: 1.0,
                hi: f64::INFINITY,
            });
        }
        Ok(PressureLaw::GammaLaw(gamma))
    }

    pub fn custom(
        p: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dp: impl Fn(f64) -> f64 + Send + Sync + 'static,
        d2p: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let (p1, dp1) = (p(1.0), dp(1.0));
        if (p1 - 1.0).abs() > 1e-12 || (dp1 - 1.0).abs() > 1e-12 {
            return Err(Error::PressureNormalization { p1, dp1 });
        }
        Ok(PressureLaw::Custom {
            p: Arc::new(p),
            dp: Arc::new(dp),
            d2p: Arc::new(d2p),
        })
    }

    pub fn gamma_value(&self) -> Option<f64> {
        match self {
            PressureLaw::GammaLaw(g) => Some(*g),
            PressureLaw::Custom { .. } => None,
        }
    }

    pub fn p(&self, s: f64) -> f64 {
        match self {
            PressureLaw::GammaLaw(g) => (g - 1.0 + s.powf(*g)) / g,
            PressureLaw::Custom { p, .. } => p(s),
        }
    }

    pub fn dp(&self, s: f64) -> f64 {
        match self {
            PressureLaw::GammaLaw(g) => s.powf(g - 1.0),
            PressureLaw::Custom { dp, .. } => dp(s),
        }
    }

    pub fn d2p(&self, s: f64) -> f64 {
        match self {
            PressureLaw::GammaLaw(g) => (g - 1.0) * s.powf(g - 2.0),
            PressureLaw::Custom { d2p, .. } => d2p(s),
        }
    }

    /// `s > 0` with `p(s) = q`, if it exists.
    pub fn inverse(&self, q: f64) -> Option<f64> {
        match self {
            PressureLaw::GammaLaw(g) => {
                let base = g * (q - 1.0) + 1.0;
                (base > 0.0).then(|| base.powf(1.0 / g))
            }
            PressureLaw::Custom { p, dp, .. } => {
                let mut s = 1.0f64;
                for _ in 0..100 {
                    let slope = dp(s);
                    if slope.is_nan() || slope <= 0.0 {
                        return None;
                    }
                    let next = (s - (p(s) - q) / slope).max(0.5 * s);
                    if (next - s).abs() <= 1e-15 * s {
                        return Some(next);
                    }
                    s = next;
                }
                ((p(s) - q).abs() < 1e-12).then_some(s)
            }
        }
    }

    /// `(p'(1 + eps rho) / (1 + eps rho) - 1) / eps`, evaluated without
    /// cancellation for the gamma law.
    pub fn h_point(&self, eps: f64, rho: f64) -> f64 {
        match self {
            PressureLaw::GammaLaw(g) => ((g - 2.0) * (eps * rho).ln_1p()).exp_m1() / eps,
            PressureLaw::Custom { dp, .. } => {
                let s = 1.0 + eps * rho;
                (dp(s) / s - 1.0) / eps
            }
        }
    }

    /// `(p(1 + eps rho) - 1) / eps`.
    pub fn r_point(&self, eps: f64, rho: f64) -> f64 {
        match self {
            PressureLaw::GammaLaw(g) => (g * (eps * rho).ln_1p()).exp_m1() / (g * eps),
            PressureLaw::Custom { p, .. } => (p(1.0 + eps * rho) - 1.0) / eps,
        }
    }
}

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(eps))
    }
}

pub(crate) fn check_vacuum(eps: f64, rho: &Array2<f64>) -> Result<()> {
    let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let min_total = 1.0 + eps * min_rho;
    if min_total <= VACUUM_GUARD || min_total.is_nan() {
        Err(Error::Vacuum {
            min_total,
            guard: VACUUM_GUARD,
        })
    } else {
        Ok(())
    }
}

/// Density perturbation `rho = (rho_tot - 1) / eps` and velocity.
#[derive(Debug, Clone)]
pub struct CompressibleState {
    pub rho: ScalarField,
    pub v: VectorField,
    pub epsilon: f64,
    pub time: f64,
}

impl CompressibleState {
    pub fn new(rho: ScalarField, v: VectorField, epsilon: f64, time: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !rho.same_grid(&v.u) {
            return Err(Error::GridMismatch);
        }
        let geometry = rho.grid().geometry();
        if rho.parity() != Parity::scalar(geometry) {
            return Err(Error::ParityMismatch {
                geometry,
                parity: rho.parity(),
            });
        }
        let wall = v.wall_flux_max();
        if wall > 1e-10 {
            return Err(Error::WallViolation { max: wall });
        }
        check_vacuum(epsilon, rho.values())?;
        Ok(CompressibleState {
            rho,
            v,
            epsilon,
            time,
        })
    }

    pub fn zeros(grid: &Grid, epsilon: f64) -> Result<Self> {
        let rho = ScalarField::zeros(grid, Parity::scalar(grid.geometry()))?;
        Self::new(rho, VectorField::zeros(grid), epsilon, 0.0)
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    /// Smallest total density `1 + eps * rho` on the grid.
    pub fn min_total_density(&self) -> f64 {
        1.0 + self.epsilon * self.rho.min_value()
    }

    /// `(rho, v)` as a pair, e.g. for Sobolev norms.
    pub fn pair(&self) -> (ScalarField, VectorField) {
        (self.rho.clone(), self.v.clone())
    }
}

/// `h_eps(rho)` sampled on the 3/2-padded grid.
fn h_padded(rho: &ScalarField, eps: f64, law: &PressureLaw) -> Result<Array2<f64>> {
    let rho_p = rho.padded();
    check_vacuum(eps, &rho_p)?;
    Ok(rho_p.mapv(|r| law.h_point(eps, r)))
}

pub fn h_eps(rho: &ScalarField, epsilon: f64, law: &PressureLaw) -> Result<ScalarField> {
    let h = h_padded(rho, epsilon, law)?;
    Ok(ScalarField::from_padded(rho.grid(), rho.parity(), &h))
}

/// Advective and pressure-nonlinearity terms (everything except `-L / eps`).
fn nonlinear_rhs(
    rho: &ScalarField,
    v: &VectorField,
    eps: f64,
    law: &PressureLaw,
) -> Result<(ScalarField, VectorField)> {
    let grid = rho.grid();
    let h = h_padded(rho, eps, law)?;
    let rho_p = rho.padded();
    let flux = VectorField {
        u: ScalarField::from_padded(grid, rho.parity().product(v.u.parity()), &(&rho_p * &v.u.padded())),
        w: ScalarField::from_padded(grid, rho.parity().product(v.w.parity()), &(&rho_p * &v.w.padded())),
    };
    let drho = -&flux.divergence();
    let rx = derivative(rho, Axis::X, 1);
    let ry = derivative(rho, Axis::Y, 1);
    let pressure = VectorField {
        u: ScalarField::from_padded(grid, v.u.parity(), &(&h * &rx.padded())),
        w: ScalarField::from_padded(grid, v.w.parity(), &(&h * &ry.padded())),
    };
    let dv = -&(&v.advect_vector(v)? + &pressure);
    Ok((drho, dv))
}

/// Full time derivative `(d_t rho, d_t v)` including the stiff terms.
pub fn rhs(state: &CompressibleState, law: &PressureLaw) -> Result<(ScalarField, VectorField)> {
    let (drho, dv) = nonlinear_rhs(&state.rho, &state.v, state.epsilon, law)?;
    let inv = 1.0 / state.epsilon;
    let drho = drho.axpy(-inv, &state.v.divergence());
    let dv = dv.axpy(-inv, &VectorField::gradient(&state.rho));
    Ok((drho, dv))
}

/// Exact flow of `d_t(rho, v) = -L(rho, v) / eps` over `dt`: each mode
/// `k != 0` rotates `(rho_k, k.v_k / |k|)` by the angle `|k| dt / eps`.
pub fn acoustic_propagate(state: &CompressibleState, dt: f64) -> CompressibleState {
    let grid = state.grid().clone();
    let mut rho = state.rho.clone();
    let mut v = state.v.clone();
    let kx = grid.kx();
    let ky = grid.ky();
    {
        let r = rho.coeffs_mut();
        let u = v.u.coeffs_mut();
        let w = v.w.coeffs_mut();
        let i_unit = Complex64::i();
        for ((i, j), rc) in r.indexed_iter_mut() {
            let (qx, qy) = (kx[i] as f64, ky[j] as f64);
            let k = (qx * qx + qy * qy).sqrt();
            if k == 0.0 {
                continue;
            }
            let (s, c) = (k * dt / state.epsilon).sin_cos();
            let par = (qx * u[[i, j]] + qy * w[[i, j]]) / k;
            let new_rho = c * *rc - i_unit * s * par;
            let new_par = -i_unit * s * *rc + c * par;
            let d = new_par - par;
            u[[i, j]] += d * (qx / k);
            w[[i, j]] += d * (qy / k);
            *rc = new_rho;
        }
    }
    CompressibleState {
        rho,
        v,
        epsilon: state.epsilon,
        time: state.time,
    }
}

/// Largest stable step without the cap: `CFL_NUMBER * dx / (max|v| + c_nl)`
/// with `c_nl = sqrt(max|rho| * max|h_eps(rho)|)`.
pub fn cfl_limit(state: &CompressibleState, law: &PressureLaw) -> Result<f64> {
    let h = h_padded(&state.rho, state.epsilon, law)?;
    let hmax = h.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let speed = state.v.max_speed() + (state.rho.max_abs() * hmax).sqrt();
    Ok(if speed > 0.0 {
        CFL_NUMBER * state.grid().min_spacing() / speed
    } else {
        f64::INFINITY
    })
}

/// Time step from the advective CFL condition, capped at `dt_max`. The
/// acoustic terms are integrated exactly and impose no limit.
pub fn cfl_dt(state: &CompressibleState, law: &PressureLaw, dt_max: f64) -> Result<f64> {
    Ok(cfl_limit(state, law)?.min(dt_max))
}

/// One Strang step.
pub fn step(state: &CompressibleState, dt: f64, law: &PressureLaw) -> Result<CompressibleState> {
    step_with_scalars(state, &mut [], dt, law)
}

/// One Strang step that also transports passive scalars driven by `v`
/// (`VelocitySource::Compressible`) or by `Pv`
/// (`VelocitySource::LerayOfCompressible`). The scalars advance inside the
/// nonlinear stage; the acoustic flow leaves them and `Pv` unchanged.
pub fn step_with_scalars(
    state: &CompressibleState,
    scalars: &mut [ScalarTrajectory],
    dt: f64,
    law: &PressureLaw,
) -> Result<CompressibleState> {
    let limit = cfl_limit(state, law)?;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::Cfl { dt, limit });
    }
    for s in scalars.iter() {
        if s.source == VelocitySource::Incompressible {
            return Err(Error::Config(
                "an incompressible-driven scalar cannot follow a compressible run".into(),
            ));
        }
        if !s.theta.same_grid(&state.rho) {
            return Err(Error::GridMismatch);
        }
    }
    let eps = state.epsilon;
    let half = acoustic_propagate(state, 0.5 * dt);

    let stage = |rho: &ScalarField, v: &VectorField, thetas: &[ScalarField]| -> Result<(ScalarField, VectorField, Vec<ScalarField>)> {
        let (drho, dv) = nonlinear_rhs(rho, v, eps, law)?;
        let pv = if scalars.iter().any(|s| s.source == VelocitySource::LerayOfCompressible) {
            Some(project(v)?)
        } else {
            None
        };
        let mut dthetas = Vec::with_capacity(thetas.len());
        for (s, theta) in scalars.iter().zip(thetas) {
            let drive = match s.source {
                VelocitySource::LerayOfCompressible => pv.as_ref().expect("projected velocity"),
                _ => v,
            };
            dthetas.push(-&drive.advect(theta)?);
        }
        Ok((drho, dv, dthetas))
    };

    let thetas0: Vec<ScalarField> = scalars.iter().map(|s| s.theta.clone()).collect();
    let (r0, v0) = (&half.rho, &half.v);
    let shift = |a: f64, k: &(ScalarField, VectorField, Vec<ScalarField>)| {
        (
            r0.axpy(a, &k.0),
            v0.axpy(a, &k.1),
            thetas0.iter().zip(&k.2).map(|(t, d)| t.axpy(a, d)).collect::<Vec<_>>(),
        )
    };
    let k1 = stage(r0, v0, &thetas0)?;
    let y = shift(0.5 * dt, &k1);
    let k2 = stage(&y.0, &y.1, &y.2)?;
    let y = shift(0.5 * dt, &k2);
    let k3 = stage(&y.0, &y.1, &y.2)?;
    let y = shift(dt, &k3);
    let k4 = stage(&y.0, &y.1, &y.2)?;

    let w = dt / 6.0;
    let rho = r0
        .axpy(w, &k1.0)
        .axpy(2.0 * w, &k2.0)
        .axpy(2.0 * w, &k3.0)
        .axpy(w, &k4.0);
    let v = v0
        .axpy(w, &k1.1)
        .axpy(2.0 * w, &k2.1)
        .axpy(2.0 * w, &k3.1)
        .axpy(w, &k4.1);
    let mid = CompressibleState {
        rho,
        v,
        epsilon: eps,
        time: state.time,
    };
    let mut out = acoustic_propagate(&mid, 0.5 * dt);
    out.time = state.time + dt;
    check_vacuum(eps, out.rho.values())?;

    for (n, s) in scalars.iter_mut().enumerate() {
        s.theta = thetas0[n]
            .axpy(w, &k1.2[n])
            .axpy(2.0 * w, &k2.2[n])
            .axpy(2.0 * w, &k3.2[n])
            .axpy(w, &k4.2[n]);
        s.time = out.time;
    }
    Ok(out)
}

/// One Fourier mode `amplitude * cos(kx x + phase) * Y(ky y)`, with
/// `Y = sin` for stream functions and `Y = cos` for scalar potentials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kx: u32,
    pub ky: u32,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Mode {
    pub fn new(kx: u32, ky: u32, amplitude: f64, phase: f64) -> Self {
        Mode {
            kx,
            ky,
            amplitude,
            phase,
        }
    }
}

fn sum_modes(grid: &Grid, parity: Parity, modes: &[Mode], y_sine: bool) -> Result<ScalarField> {
    let modes = modes.to_vec();
    ScalarField::from_fn(grid, parity, move |x, y| {
        modes
            .iter()
            .map(|m| {
                let yy = m.ky as f64 * y;
                let ypart = if y_sine { yy.sin() } else { yy.cos() };
                m.amplitude * (m.kx as f64 * x + m.phase).cos() * ypart
            })
            .sum()
    })
}

/// Stream-function description of the vortical part of the initial flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub stream: Vec<Mode>,
}

impl FlowSpec {
    /// `psi = sin x sin y`.
    pub fn taylor_green() -> Self {
        FlowSpec {
            stream: vec![Mode::new(1, 1, 1.0, -0.5 * PI)],
        }
    }

    /// `sin x sin y` plus two weaker modes with seeded random phases, so the
    /// flow is not steady.
    pub fn perturbed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phase = || rng.random_range(0.0..2.0 * PI);
        FlowSpec {
            stream: vec![
                Mode::new(1, 1, 1.0, -0.5 * PI),
                Mode::new(1, 2, 0.3, phase()),
                Mode::new(2, 1, 0.3, phase()),
            ],
        }
    }

    pub fn stream_function(&self, grid: &Grid) -> Result<ScalarField> {
        sum_modes(grid, Parity::stream(grid.geometry()), &self.stream, true)
    }

    /// `grad^perp psi`.
    pub fn velocity(&self, grid: &Grid) -> Result<VectorField> {
        Ok(VectorField::perp_gradient(&self.stream_function(grid)?))
    }
}

/// Acoustic content added to ill-prepared data: `a grad chi` in the
/// velocity and `a * sum(density)` in the density perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcousticSpec {
    pub a: f64,
    pub potential: Vec<Mode>,
    #[serde(default)]
    pub density: Vec<Mode>,
}

impl Default for AcousticSpec {
    /// `a = 1`, `chi = cos x`, no density content.
    fn default() -> Self {
        AcousticSpec {
            a: 1.0,
            potential: vec![Mode::new(1, 0, 1.0, 0.0)],
            density: Vec::new(),
        }
    }
}

/// `v = amplitude * grad^perp psi`, `rho = 0`: no `1/eps` content in `d_t`.
pub fn well_prepared_init(
    grid: &Grid,
    epsilon: f64,
    flow: &FlowSpec,
    amplitude: f64,
) -> Result<CompressibleState> {
    let v = flow.velocity(grid)?.scale(amplitude);
    let rho = ScalarField::zeros(grid, Parity::scalar(grid.geometry()))?;
    CompressibleState::new(rho, v, epsilon, 0.0)
}

/// Well-prepared data plus `amplitude * a` times acoustic content, so that
/// `d_t(rho, v)` is of size `a / eps` at `t = 0`.
pub fn ill_prepared_init(
    grid: &Grid,
    epsilon: f64,
    flow: &FlowSpec,
    amplitude: f64,
    acoustic: &AcousticSpec,
) -> Result<CompressibleState> {
    let base = well_prepared_init(grid, epsilon, flow, amplitude)?;
    if acoustic.a == 0.0 {
        return Ok(base);
    }
    let parity = Parity::scalar(grid.geometry());
    let chi = sum_modes(grid, parity, &acoustic.potential, false)?;
    let v = base.v.axpy(amplitude * acoustic.a, &VectorField::gradient(&chi));
    let rho = sum_modes(grid, parity, &acoustic.density, false)?.scale(amplitude * acoustic.a);
    CompressibleState::new(rho, v, epsilon, 0.0)
}
