#![allow(dead_code)]

use machlab::compressible::{
    acoustic_propagate, ill_prepared_init, step, AcousticSpec, CompressibleState, FlowSpec, PressureLaw,
};
use machlab::harness::fit_rate;
use machlab::incompressible::{step_incompressible, IncompressibleState};
use machlab::spectral::{make_grid, Geometry, Grid, ScalarField, VectorField};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn grid(geometry: Geometry, n: usize) -> Grid {
    make_grid(geometry, n, n).unwrap()
}

fn state_diff(a: &CompressibleState, b: &CompressibleState) -> f64 {
    let dr = (&a.rho - &b.rho).l2_norm();
    let dv = (&a.v - &b.v).l2_norm();
    (dr * dr + dv * dv).sqrt()
}

pub fn run_compressible(s0: &CompressibleState, t: f64, n: usize, law: &PressureLaw) -> CompressibleState {
    let dt = t / n as f64;
    let mut s = s0.clone();
    for _ in 0..n {
        s = step(&s, dt, law).unwrap();
    }
    s
}

/// Errors of the Strang stepper against a fine run, for step counts `ns`,
/// and the fitted order in `dt`.
pub fn strang_self_convergence(geometry: Geometry) -> (Vec<f64>, Vec<f64>, f64) {
    let g = grid(geometry, 32);
    let law = PressureLaw::default();
    let eps = 0.1;
    let s0 = ill_prepared_init(&g, eps, &FlowSpec::perturbed(3), 0.5, &AcousticSpec::default()).unwrap();
    let t = 0.2;
    let reference = run_compressible(&s0, t, 1280, &law);
    let ns = [40usize, 80, 160];
    let dts: Vec<f64> = ns.iter().map(|n| t / *n as f64).collect();
    let errs: Vec<f64> = ns
        .iter()
        .map(|n| state_diff(&run_compressible(&s0, t, *n, &law), &reference))
        .collect();
    let slope = fit_rate(&dts, &errs).unwrap().slope;
    (dts, errs, slope)
}

pub fn run_incompressible(s0: &IncompressibleState, t: f64, n: usize) -> IncompressibleState {
    let dt = t / n as f64;
    let mut s = s0.clone();
    for _ in 0..n {
        s = step_incompressible(&s, dt).unwrap();
    }
    s
}

pub fn rk4_self_convergence() -> (Vec<f64>, Vec<f64>, f64) {
    let g = grid(Geometry::Torus2D, 32);
    let s0 = IncompressibleState::from_projection(&FlowSpec::perturbed(3).velocity(&g).unwrap()).unwrap();
    let t = 0.8;
    let reference = run_incompressible(&s0, t, 640);
    let ns = [20usize, 40, 80];
    let dts: Vec<f64> = ns.iter().map(|n| t / *n as f64).collect();
    let errs: Vec<f64> = ns
        .iter()
        .map(|n| (&run_incompressible(&s0, t, *n).v - &reference.v).l2_norm())
        .collect();
    let slope = fit_rate(&dts, &errs).unwrap().slope;
    (dts, errs, slope)
}

/// `|E(T) - E(0)| / T` for the incompressible kinetic energy.
pub fn kinetic_energy_drift_rate(geometry: Geometry) -> f64 {
    let g = grid(geometry, 32);
    let s0 = IncompressibleState::from_projection(&FlowSpec::perturbed(5).velocity(&g).unwrap()).unwrap();
    let t = 1.0;
    let s = run_incompressible(&s0, t, 100);
    (s.kinetic_energy() - s0.kinetic_energy()).abs() / t
}

/// Largest `|int rho(t) - int rho(0)|` along a compressible run.
pub fn mass_drift(geometry: Geometry) -> f64 {
    let g = grid(geometry, 32);
    let law = PressureLaw::default();
    let s0 = ill_prepared_init(&g, 0.05, &FlowSpec::perturbed(2), 0.5, &AcousticSpec::default()).unwrap();
    let m0 = s0.rho.integral();
    let mut s = s0;
    let mut drift = 0.0f64;
    for _ in 0..100 {
        s = step(&s, 0.005, &law).unwrap();
        drift = drift.max((s.rho.integral() - m0).abs());
    }
    drift
}

/// Largest relative change of the per-mode energy `|rho_k|^2 + |v_k|^2`
/// under the acoustic flow, over several propagation times.
pub fn acoustic_mode_drift(geometry: Geometry) -> f64 {
    let g = grid(geometry, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let parity = machlab::spectral::Parity::scalar(geometry);
    let rho = ScalarField::random(&g, parity, 12, false, &mut rng).unwrap();
    let v = VectorField::random(&g, 12, &mut rng).unwrap();
    let s0 = CompressibleState::new(rho, v, 0.01, 0.0).unwrap();
    let energy = |s: &CompressibleState| {
        let (r, u, w) = (s.rho.coefficients(), s.v.u.coefficients(), s.v.w.coefficients());
        let mut e = r.mapv(|c| c.norm_sqr());
        e.zip_mut_with(u, |a, c| *a += c.norm_sqr());
        e.zip_mut_with(w, |a, c| *a += c.norm_sqr());
        e
    };
    let e0 = energy(&s0);
    let scale = e0.iter().copied().fold(0.0f64, f64::max);
    let mut worst = 0.0f64;
    for dt in [1e-3, 0.37, 5.0, 123.4] {
        let e1 = energy(&acoustic_propagate(&s0, dt));
        for (a, b) in e0.iter().zip(e1.iter()) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    worst
}

/// `||v(100 dt) - v(0)||` for Taylor-Green under the projected stepper.
pub fn taylor_green_defect(geometry: Geometry) -> f64 {
    let g = grid(geometry, 32);
    let v = FlowSpec::taylor_green().velocity(&g).unwrap();
    let s0 = IncompressibleState::new(v.clone(), 0.0).unwrap();
    let s = run_incompressible(&s0, 1.0, 100);
    (&s.v - &v).l2_norm()
}
