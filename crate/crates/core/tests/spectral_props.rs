use machlab::leray::{check_projection_identities, decoupling_residual, leray_project, project};
use machlab::spectral::{
    dealiased_product, derivative, make_grid, read_snapshot, write_csv, write_snapshot, Axis, Geometry, Grid, Parity,
    ScalarField, SobolevNorm, VectorField,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn geometry(channel: bool) -> Geometry {
    if channel {
        Geometry::Channel2D
    } else {
        Geometry::Torus2D
    }
}

fn grid(channel: bool) -> Grid {
    make_grid(geometry(channel), 24, 24).unwrap()
}

fn random_vector(channel: bool, seed: u64, band: usize) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    VectorField::random(&grid(channel), band, &mut rng).unwrap()
}

fn random_scalar(channel: bool, parity: Parity, seed: u64, band: usize) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ScalarField::random(&grid(channel), parity, band, false, &mut rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn values_round_trip(seed in any::<u64>(), channel in any::<bool>(), band in 1usize..11) {
        let f = random_scalar(channel, Parity::scalar(geometry(channel)), seed, band);
        let g = ScalarField::from_values(f.grid(), f.parity(), f.values()).unwrap();
        prop_assert!((&g - &f).l2_norm() <= 1e-12 * f.l2_norm().max(1.0));
    }

    #[test]
    fn derivatives_are_exact(kx in 0u32..8, ky in 0u32..8, a in -2.0f64..2.0, phase in 0.0f64..6.0, channel in any::<bool>()) {
        let g = grid(channel);
        let (kxf, kyf) = (kx as f64, ky as f64);
        let parity = Parity::scalar(g.geometry());
        let f = ScalarField::from_fn(&g, parity, |x, y| a * (kxf * x + phase).cos() * (kyf * y).cos()).unwrap();
        let fx = ScalarField::from_fn(&g, parity, |x, y| -a * kxf * (kxf * x + phase).sin() * (kyf * y).cos()).unwrap();
        let fy = ScalarField::from_fn(&g, parity.flipped(), |x, y| -a * kyf * (kxf * x + phase).cos() * (kyf * y).sin()).unwrap();
        let fyy = ScalarField::from_fn(&g, parity, |x, y| -a * kyf * kyf * (kxf * x + phase).cos() * (kyf * y).cos()).unwrap();
        prop_assert!((&derivative(&f, Axis::X, 1) - &fx).max_abs() <= 1e-11);
        prop_assert!((&derivative(&f, Axis::Y, 1) - &fy).max_abs() <= 1e-11);
        prop_assert!((&derivative(&f, Axis::Y, 2) - &fyy).max_abs() <= 1e-10);
    }

    #[test]
    fn parseval(seed in any::<u64>(), channel in any::<bool>(), band in 1usize..11) {
        let f = random_scalar(channel, Parity::scalar(geometry(channel)), seed, band);
        let spectral = f.l2_norm();
        prop_assert!((spectral - f.quadrature_l2()).abs() <= 1e-12 * spectral.max(1.0));
    }

    #[test]
    fn products_keep_parity(seed in any::<u64>(), odd_a in any::<bool>(), odd_b in any::<bool>()) {
        let p = |odd: bool| if odd { Parity::Odd } else { Parity::Even };
        let a = random_scalar(true, p(odd_a), seed, 8);
        let b = random_scalar(true, p(odd_b), seed.wrapping_add(1), 8);
        let ab = dealiased_product(&a, &b).unwrap();
        prop_assert_eq!(ab.parity(), p(odd_a).product(p(odd_b)));
        prop_assert!(ab.parity_defect() <= 1e-14);
        // Low bands are resolved exactly: compare with the pointwise product.
        let a = random_scalar(true, p(odd_a), seed, 4);
        let b = random_scalar(true, p(odd_b), seed.wrapping_add(1), 4);
        let ab = dealiased_product(&a, &b).unwrap();
        let direct = a.values() * b.values();
        let diff = (ab.values() - &direct).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        prop_assert!(diff <= 1e-12);
    }

    #[test]
    fn projection_identities(seed in any::<u64>(), channel in any::<bool>(), band in 1usize..11) {
        let v = random_vector(channel, seed, band);
        let r = check_projection_identities(&v).unwrap();
        prop_assert!(r.max_relative() <= 1e-10, "{:?}", r);
        let split = leray_project(&v).unwrap();
        let (n, np, nq) = (v.l2_norm(), split.p_part.l2_norm(), split.q_part.l2_norm());
        prop_assert!((n * n - np * np - nq * nq).abs() <= 1e-10 * n * n);
        prop_assert!((&split.q_part.divergence() - &v.divergence()).l2_norm() <= 1e-10 * v.divergence().l2_norm().max(1.0));
        prop_assert!(split.p_part.wall_flux_max() <= 1e-12);
    }

    #[test]
    fn gradients_are_annihilated(seed in any::<u64>(), channel in any::<bool>()) {
        let phi = random_scalar(channel, Parity::scalar(geometry(channel)), seed, 9);
        let grad = VectorField::gradient(&phi);
        prop_assert!(project(&grad).unwrap().l2_norm() <= 1e-10 * grad.l2_norm());
    }

    #[test]
    fn projection_is_bounded_in_every_sobolev_norm(seed in any::<u64>(), channel in any::<bool>(), s in 0u32..4) {
        let v = random_vector(channel, seed, 9);
        let pv = project(&v).unwrap();
        prop_assert!(pv.sobolev_norm(s) <= v.sobolev_norm(s) * (1.0 + 1e-12));
    }

    #[test]
    fn fast_part_self_advection_is_a_gradient(seed in any::<u64>(), channel in any::<bool>()) {
        let v = random_vector(channel, seed, 7);
        let vq = leray_project(&v).unwrap().q_part;
        let adv = vq.advect_vector(&vq).unwrap();
        prop_assert!(decoupling_residual(&v).unwrap() <= 1e-10 * adv.l2_norm().max(1e-300));
    }
}

#[test]
fn snapshot_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    let v = random_vector(true, 3, 6);
    let rho = random_scalar(true, Parity::Even, 4, 6);
    write_snapshot(&path, 0.25, &[&rho, &v.u, &v.w]).unwrap();
    let snap = read_snapshot(&path).unwrap();
    assert_eq!(snap.time, 0.25);
    assert_eq!(snap.fields.len(), 3);
    for (a, b) in snap.fields.iter().zip([&rho, &v.u, &v.w]) {
        assert_eq!(a.parity(), b.parity());
        assert!((a - b).max_abs() < 1e-13);
    }
    assert!(read_snapshot(&dir.path().join("missing.bin")).is_err());
}

#[test]
fn csv_export_has_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    let g = make_grid(Geometry::Channel2D, 8, 8).unwrap();
    let f = ScalarField::from_fn(&g, Parity::Even, |x, y| x.cos() * y.cos()).unwrap();
    write_csv(&path, &[("f", &f)]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x,y,f");
    let (r, c) = g.physical_shape();
    assert_eq!(lines.count(), r * c);
}
