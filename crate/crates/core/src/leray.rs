//! Helmholtz decomposition `v = Pv + Qv` with `Qv = grad phi`.
//!
//! The potential solves `lap phi = div v` with `d_n phi = v.n` on walls. On
//! the channel the cosine basis already satisfies the homogeneous Neumann
//! condition, so in both geometries the solve is a division by `-|k|^2`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{make_grid, Geometry, Parity, ScalarField, VectorField};

/// Wall-normal velocity above which a channel field is rejected.
pub const WALL_TOLERANCE: f64 = 1e-8;

/// Outward normal flux `d_n phi` sampled along the two channel walls
/// (`bottom` at `y = 0`, `top` at `y = pi`), one value per x sample.
#[derive(Debug, Clone, PartialEq)]
pub struct WallFlux {
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
}

impl WallFlux {
    /// Boundary integral of the flux.
    pub fn integral(&self, dx: f64) -> f64 {
        (self.bottom.iter().sum::<f64>() + self.top.iter().sum::<f64>()) * dx
    }

    fn max_abs(&self) -> f64 {
        self.bottom
            .iter()
            .chain(&self.top)
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct HelmholtzSplit {
    /// `Pv`, divergence free and tangent to walls.
    pub p_part: VectorField,
    /// `Qv = grad potential`.
    pub q_part: VectorField,
    pub potential: ScalarField,
}

/// Zero-mean solution of `lap phi = rhs` with Neumann data `flux` on the
/// channel walls.
///
/// Only homogeneous flux is representable in the cosine basis; a nonzero
/// `flux` is checked for compatibility and then rejected.
pub fn solve_neumann_poisson(rhs: &ScalarField, flux: Option<&WallFlux>) -> Result<ScalarField> {
    let grid = rhs.grid();
    let geometry = grid.geometry();
    let parity = Parity::scalar(geometry);
    if rhs.parity() != parity {
        return Err(Error::ParityMismatch {
            geometry,
            parity: rhs.parity(),
        });
    }
    let flux_integral = match (geometry, flux) {
        (Geometry::Channel2D, Some(f)) => {
            let n = grid.nx();
            if f.bottom.len() != n || f.top.len() != n {
                return Err(Error::ShapeMismatch {
                    expected: (n, 2),
                    found: (f.bottom.len(), f.top.len()),
                });
            }
            f.integral(grid.dx())
        }
        _ => 0.0,
    };
    let rhs_integral = rhs.integral();
    let scale = grid.area().sqrt() * (1.0 + rhs.l2_norm());
    if (rhs_integral - flux_integral).abs() > 1e-10 * scale {
        return Err(Error::IncompatibleNeumann {
            rhs_integral,
            flux_integral,
        });
    }
    if let Some(f) = flux {
        if geometry == Geometry::Channel2D && f.max_abs() > 1e-12 {
            return Err(Error::Config(
                "inhomogeneous wall flux is not supported by the cosine basis".into(),
            ));
        }
    }
    Ok(rhs.map_modes(parity, |kx, ky| {
        let k2 = kx * kx + ky * ky;
        if k2 == 0.0 {
            0.0.into()
        } else {
            (-1.0 / k2).into()
        }
    }))
}

/// Split `v` into its divergence-free and gradient parts. Spatially
/// constant (harmonic) modes belong to the divergence-free part.
pub fn leray_project(v: &VectorField) -> Result<HelmholtzSplit> {
    let wall = v.wall_flux_max();
    if wall > WALL_TOLERANCE {
        return Err(Error::WallViolation { max: wall });
    }
    let potential = solve_neumann_poisson(&v.divergence(), None)?;
    let q_part = VectorField::gradient(&potential);
    let p_part = v - &q_part;
    Ok(HelmholtzSplit {
        p_part,
        q_part,
        potential,
    })
}

/// `Pv` alone.
pub fn project(v: &VectorField) -> Result<VectorField> {
    Ok(leray_project(v)?.p_part)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionReport {
    /// `||P(Pv) - Pv||`
    pub idempotence: f64,
    /// `<Pv, Qv>`
    pub orthogonality: f64,
    /// `||curl Pv - curl v||`
    pub curl_defect: f64,
    /// `||div Pv||`
    pub divergence: f64,
    /// `||v||`, for relative comparisons.
    pub norm: f64,
}

impl ProjectionReport {
    /// Largest residual relative to `||v||` (`||v||^2` for the inner product).
    pub fn max_relative(&self) -> f64 {
        if self.norm == 0.0 {
            return self
                .idempotence
                .max(self.orthogonality.abs())
                .max(self.curl_defect)
                .max(self.divergence);
        }
        (self.idempotence / self.norm)
            .max(self.orthogonality.abs() / (self.norm * self.norm))
            .max(self.curl_defect / self.norm)
            .max(self.divergence / self.norm)
    }
}

pub fn check_projection_identities(v: &VectorField) -> Result<ProjectionReport> {
    let split = leray_project(v)?;
    let pp = project(&split.p_part)?;
    Ok(ProjectionReport {
        idempotence: (&pp - &split.p_part).l2_norm(),
        orthogonality: split.p_part.inner(&split.q_part),
        curl_defect: (&split.p_part.curl() - &v.curl()).l2_norm(),
        divergence: split.p_part.divergence().l2_norm(),
        norm: v.l2_norm(),
    })
}

/// `||P(vQ . grad vQ)||`, which vanishes identically.
pub fn decoupling_residual(v: &VectorField) -> Result<f64> {
    let vq = leray_project(v)?.q_part;
    let adv = vq.advect_vector(&vq)?;
    Ok(project(&adv)?.l2_norm())
}

/// Largest relative residuals of the projection identities over seeded
/// random fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionSurvey {
    pub geometry: Geometry,
    pub samples: usize,
    /// `||P(Pv) - Pv|| / ||v||`
    pub idempotence: f64,
    /// `|<Pv, Qv>| / ||v||^2`
    pub orthogonality: f64,
    /// `||curl Pv - curl v|| / ||v||`
    pub curl_defect: f64,
    /// `||div Pv|| / ||v||`
    pub divergence: f64,
    /// `||P grad phi|| / ||grad phi||`
    pub gradient_annihilation: f64,
    /// `||P(vQ.grad vQ)|| / ||vQ.grad vQ||`
    pub decoupling: f64,
}

impl ProjectionSurvey {
    pub fn max(&self) -> f64 {
        [
            self.idempotence,
            self.orthogonality,
            self.curl_defect,
            self.divergence,
            self.gradient_annihilation,
            self.decoupling,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        a
    }
}

/// Check the identities on `samples` random fields of wavenumber band
/// `band` on an `n x n` grid.
pub fn projection_survey(geometry: Geometry, n: usize, samples: usize, band: usize, seed: u64) -> Result<ProjectionSurvey> {
    let grid = make_grid(geometry, n, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ProjectionSurvey {
        geometry,
        samples,
        idempotence: 0.0,
        orthogonality: 0.0,
        curl_defect: 0.0,
        divergence: 0.0,
        gradient_annihilation: 0.0,
        decoupling: 0.0,
    };
    for _ in 0..samples {
        let v = VectorField::random(&grid, band, &mut rng)?;
        let r = check_projection_identities(&v)?;
        out.idempotence = out.idempotence.max(ratio(r.idempotence, r.norm));
        out.orthogonality = out.orthogonality.max(ratio(r.orthogonality.abs(), r.norm * r.norm));
        out.curl_defect = out.curl_defect.max(ratio(r.curl_defect, r.norm));
        out.divergence = out.divergence.max(ratio(r.divergence, r.norm));

        let phi = ScalarField::random(&grid, Parity::scalar(geometry), band, false, &mut rng)?;
        let grad = VectorField::gradient(&phi);
        out.gradient_annihilation = out
            .gradient_annihilation
            .max(ratio(project(&grad)?.l2_norm(), grad.l2_norm()));

        let vq = leray_project(&v)?.q_part;
        let adv = vq.advect_vector(&vq)?;
        out.decoupling = out.decoupling.max(ratio(project(&adv)?.l2_norm(), adv.l2_norm()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SobolevNorm;

    #[test]
    fn zero_rhs_gives_zero_potential() {
        let g = make_grid(Geometry::Channel2D, 16, 16).unwrap();
        let rhs = ScalarField::zeros(&g, Parity::Even).unwrap();
        let flux = WallFlux {
            bottom: vec![0.0; 16],
            top: vec![0.0; 16],
        };
        let phi = solve_neumann_poisson(&rhs, Some(&flux)).unwrap();
        assert_eq!(phi.l2_norm(), 0.0);
    }

    #[test]
    fn cosine_rhs() {
        let g = make_grid(Geometry::Torus2D, 16, 16).unwrap();
        let rhs = ScalarField::from_fn(&g, Parity::Periodic, |x, _| x.cos()).unwrap();
        let phi = solve_neumann_poisson(&rhs, None).unwrap();
        let expected = ScalarField::from_fn(&g, Parity::Periodic, |x, _| -x.cos()).unwrap();
        assert!((&phi - &expected).max_abs() < 1e-13);
        assert!(phi.mean().abs() < 1e-15);
    }

    #[test]
    fn incompatible_mean_is_rejected() {
        let g = make_grid(Geometry::Torus2D, 16, 16).unwrap();
        let rhs = ScalarField::from_fn(&g, Parity::Periodic, |x, _| 1.0 + x.cos()).unwrap();
        assert!(matches!(
            solve_neumann_poisson(&rhs, None),
            Err(Error::IncompatibleNeumann { .. })
        ));
    }

    #[test]
    fn nonzero_flux_is_checked_then_rejected() {
        let g = make_grid(Geometry::Channel2D, 16, 16).unwrap();
        let rhs = ScalarField::from_fn(&g, Parity::Even, |x, _| x.cos()).unwrap();
        let bad = WallFlux {
            bottom: vec![1.0; 16],
            top: vec![0.0; 16],
        };
        assert!(matches!(
            solve_neumann_poisson(&rhs, Some(&bad)),
            Err(Error::IncompatibleNeumann { .. })
        ));
        let balanced = WallFlux {
            bottom: vec![1.0; 16],
            top: vec![-1.0; 16],
        };
        assert!(matches!(
            solve_neumann_poisson(&rhs, Some(&balanced)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn random_rhs_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
            let g = make_grid(geometry, 32, 32).unwrap();
            let rhs = ScalarField::random(&g, Parity::scalar(geometry), 10, false, &mut rng).unwrap();
            let phi = solve_neumann_poisson(&rhs, None).unwrap();
            let lap = VectorField::gradient(&phi).divergence();
            assert!((&lap - &rhs).l2_norm() <= 1e-10);
        }
    }

    #[test]
    fn gradient_has_no_divergence_free_part() {
        let g = make_grid(Geometry::Torus2D, 16, 16).unwrap();
        let phi = ScalarField::from_fn(&g, Parity::Periodic, |x, _| x.cos()).unwrap();
        let split = leray_project(&VectorField::gradient(&phi)).unwrap();
        assert!(split.p_part.l2_norm() < 1e-13);
    }

    #[test]
    fn divergence_free_field_is_fixed() {
        for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
            let g = make_grid(geometry, 16, 16).unwrap();
            let psi = ScalarField::from_fn(&g, Parity::stream(geometry), |x, y| x.sin() * y.sin()).unwrap();
            let v = VectorField::perp_gradient(&psi);
            let split = leray_project(&v).unwrap();
            assert!((&split.p_part - &v).l2_norm() < 1e-13);
            assert!(split.q_part.l2_norm() < 1e-13);
        }
    }

    #[test]
    fn constant_field_is_harmonic() {
        let g = make_grid(Geometry::Torus2D, 16, 16).unwrap();
        let v = VectorField::from_fn(&g, |_, _| 0.7, |_, _| -1.3).unwrap();
        let split = leray_project(&v).unwrap();
        assert!((&split.p_part - &v).l2_norm() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let other = VectorField::random(&g, 6, &mut rng).unwrap();
        let q = leray_project(&other).unwrap().q_part;
        assert!(split.p_part.inner(&q).abs() < 1e-12 * v.l2_norm() * other.l2_norm());
    }

    #[test]
    fn zero_field_has_zero_residuals() {
        let g = make_grid(Geometry::Channel2D, 16, 16).unwrap();
        let r = check_projection_identities(&VectorField::zeros(&g)).unwrap();
        assert_eq!(r.max_relative(), 0.0);
        assert_eq!(decoupling_residual(&VectorField::zeros(&g)).unwrap(), 0.0);
    }

    #[test]
    fn hand_built_split_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
            let g = make_grid(geometry, 32, 32).unwrap();
            let phi = ScalarField::random(&g, Parity::scalar(geometry), 10, false, &mut rng).unwrap();
            let psi = ScalarField::random(&g, Parity::stream(geometry), 10, false, &mut rng).unwrap();
            let solenoidal = VectorField::perp_gradient(&psi);
            let v = &VectorField::gradient(&phi) + &solenoidal;
            let split = leray_project(&v).unwrap();
            assert!((&split.p_part - &solenoidal).l2_norm() <= 1e-10 * v.l2_norm());
            let r = check_projection_identities(&v).unwrap();
            assert!(r.max_relative() <= 1e-10, "{r:?}");
        }
    }

    #[test]
    fn decoupling_of_a_pure_gradient() {
        let g = make_grid(Geometry::Torus2D, 32, 32).unwrap();
        let phi = ScalarField::from_fn(&g, Parity::Periodic, |x, _| x.cos()).unwrap();
        assert!(decoupling_residual(&VectorField::gradient(&phi)).unwrap() <= 1e-11);
        let psi = ScalarField::from_fn(&g, Parity::Periodic, |x, y| x.sin() * y.sin()).unwrap();
        assert!(decoupling_residual(&VectorField::perp_gradient(&psi)).unwrap() <= 1e-30);
    }

    #[test]
    fn decoupling_of_random_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
            let g = make_grid(geometry, 32, 32).unwrap();
            let v = VectorField::random(&g, 10, &mut rng).unwrap();
            let vq = leray_project(&v).unwrap().q_part;
            let res = decoupling_residual(&v).unwrap();
            assert!(res <= 1e-10 * vq.sobolev_norm_sq(1), "{res}");
        }
    }

    #[test]
    fn survey_is_deterministic_and_small() {
        for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
            let a = projection_survey(geometry, 16, 3, 5, 11).unwrap();
            assert_eq!(a, projection_survey(geometry, 16, 3, 5, 11).unwrap());
            assert!(a.max() <= 1e-10, "{a:?}");
        }
    }
}
