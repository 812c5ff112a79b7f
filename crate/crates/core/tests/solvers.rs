mod common;

use common::*;
use machlab::compressible::{step, well_prepared_init, FlowSpec, PressureLaw};
use machlab::diagnostics::energies;
use machlab::incompressible::{equivalence_check, step_incompressible, IncompressibleState};
use machlab::spectral::Geometry;

#[test]
fn strang_splitting_is_second_order() {
    for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
        let (dts, errs, slope) = strang_self_convergence(geometry);
        assert!(slope >= 1.9, "{geometry}: slope {slope}, dt {dts:?}, err {errs:?}");
    }
}

#[test]
fn incompressible_rk4_is_fourth_order() {
    let (dts, errs, slope) = rk4_self_convergence();
    assert!(slope >= 3.8, "slope {slope}, dt {dts:?}, err {errs:?}");
}

#[test]
fn mass_is_conserved() {
    for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
        assert!(mass_drift(geometry) <= 1e-10);
    }
}

#[test]
fn acoustic_flow_is_an_isometry_per_mode() {
    for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
        let d = acoustic_mode_drift(geometry);
        assert!(d <= 1e-12, "{geometry}: {d}");
    }
}

#[test]
fn kinetic_energy_is_conserved() {
    for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
        let d = kinetic_energy_drift_rate(geometry);
        assert!(d <= 1e-9, "{geometry}: {d}");
    }
}

#[test]
fn taylor_green_stays_put() {
    for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
        assert!(taylor_green_defect(geometry) <= 1e-10);
    }
}

#[test]
fn channel_walls_survive_long_runs() {
    let g = grid(Geometry::Channel2D, 32);
    let law = PressureLaw::default();
    let mut s = well_prepared_init(&g, 0.05, &FlowSpec::perturbed(9), 0.5).unwrap();
    for _ in 0..200 {
        s = step(&s, 0.005, &law).unwrap();
    }
    assert!(s.v.wall_flux_max() <= 1e-12);
}

#[test]
fn well_prepared_energy_scaling_is_uniform_in_eps() {
    let g = grid(Geometry::Torus2D, 32);
    let law = PressureLaw::default();
    let et0: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&eps| {
            let s = well_prepared_init(&g, eps, &FlowSpec::perturbed(7), 0.1).unwrap();
            energies(&s, &law, 3).unwrap().et0
        })
        .collect();
    let (lo, hi) = et0.iter().fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi / lo < 1.01, "{et0:?}");
}

#[test]
fn projected_trajectory_solves_primitive_euler() {
    let g = grid(Geometry::Torus2D, 32);
    let v = FlowSpec::perturbed(4).velocity(&g).unwrap();
    let mut traj = vec![IncompressibleState::from_projection(&v).unwrap()];
    for _ in 0..6 {
        let next = step_incompressible(traj.last().unwrap(), 0.005).unwrap();
        traj.push(next);
    }
    let r = equivalence_check(&traj).unwrap();
    // Three-point differences leave an O(dt^2) residual.
    assert!(r.max_residual <= 1e-3 * traj[0].v.l2_norm(), "{r:?}");
    assert!(r.max_divergence <= 1e-12);
}
