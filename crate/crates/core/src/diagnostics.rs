//! Measured quantities: energies, the acoustic operator `L`, slow/fast
//! interaction terms, time averages, vorticity residuals and the pressure
//! variable `r` with its coefficient matrix.

use serde::{Deserialize, Serialize};

use crate::compressible::{check_vacuum, rhs, CompressibleState, PressureLaw, VACUUM_GUARD};
use crate::error::{Error, Result};
use crate::leray::{leray_project, project};
use crate::spectral::{ScalarField, SobolevNorm, VectorField};

/// `L(rho, v) = (div v, grad rho)`.
pub fn lin_op(state: &CompressibleState) -> (ScalarField, VectorField) {
    (state.v.divergence(), VectorField::gradient(&state.rho))
}

/// `||L(rho, v)||_{H^s}`.
pub fn lin_op_norm(state: &CompressibleState, s: u32) -> f64 {
    lin_op(state).sobolev_norm(s)
}

/// `||d_t(rho, v)||_{H^s}`, evaluated from the right-hand side.
pub fn time_derivative_norm(state: &CompressibleState, law: &PressureLaw, s: u32) -> Result<f64> {
    Ok(rhs(state, law)?.sobolev_norm(s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyPair {
    /// `||(rho, v)||_{H^m}`
    pub e0: f64,
    /// `||d_t(rho, v)||_{H^{m-1}}`
    pub et0: f64,
    pub m: u32,
}

/// Initial-data energies of `state` at norm order `m >= 3`.
pub fn energies(state: &CompressibleState, law: &PressureLaw, m: u32) -> Result<EnergyPair> {
    if m < 3 {
        return Err(Error::OutOfRange {
            value: m as f64,
            lo: 3.0,
            hi: crate::spectral::MAX_SOBOLEV_ORDER as f64,
        });
    }
    Ok(EnergyPair {
        e0: state.pair().sobolev_norm(m),
        et0: time_derivative_norm(state, law, m - 1)?,
        m,
    })
}

/// `B[v1, v2] = v1.grad v2 + v2.grad v1`.
pub fn bilinear_b(v1: &VectorField, v2: &VectorField) -> Result<VectorField> {
    Ok(&v1.advect_vector(v2)? + &v2.advect_vector(v1)?)
}

/// L2 norms of the pieces of `P(v.grad v)` after splitting `v = vP + vQ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowFastTerms {
    /// `||P(vP.grad vP)||`
    pub slow_slow: f64,
    /// `||P B[vP, vQ]||`
    pub slow_fast: f64,
    /// `||P(vQ.grad vQ)||`, zero up to roundoff.
    pub fast_fast: f64,
    /// `||P(v.grad v)||`
    pub total: f64,
    /// `||sum of the three terms - P(v.grad v)||`
    pub identity_defect: f64,
}

pub fn slow_fast_terms(state: &CompressibleState) -> Result<SlowFastTerms> {
    let v = &state.v;
    let split = leray_project(v)?;
    let (vp, vq) = (&split.p_part, &split.q_part);
    let ss = project(&vp.advect_vector(vp)?)?;
    let sf = project(&bilinear_b(vp, vq)?)?;
    let ff = project(&vq.advect_vector(vq)?)?;
    let total = project(&v.advect_vector(v)?)?;
    let defect = &(&(&ss + &sf) + &ff) - &total;
    Ok(SlowFastTerms {
        slow_slow: ss.l2_norm(),
        slow_fast: sf.l2_norm(),
        fast_fast: ff.l2_norm(),
        total: total.l2_norm(),
        identity_defect: defect.l2_norm(),
    })
}

/// Fields that can be time-integrated.
pub trait Accumulable: Clone {
    /// `self + a * other`
    fn add_scaled(&self, a: f64, other: &Self) -> Self;
    fn scaled(&self, a: f64) -> Self;
}

impl Accumulable for ScalarField {
    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        self.axpy(a, other)
    }
    fn scaled(&self, a: f64) -> Self {
        self.scale(a)
    }
}

impl Accumulable for VectorField {
    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        self.axpy(a, other)
    }
    fn scaled(&self, a: f64) -> Self {
        self.scale(a)
    }
}

/// Trapezoidal running integral `<f>(T) = int_0^T f dt` of sampled fields.
#[derive(Debug, Clone)]
pub struct TimeAverageAccumulator<F> {
    integral: Option<F>,
    last: Option<(f64, F)>,
    start: f64,
    samples: usize,
    max_gap: f64,
}

impl<F: Accumulable> Default for TimeAverageAccumulator<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Accumulable> TimeAverageAccumulator<F> {
    pub fn new() -> Self {
        TimeAverageAccumulator {
            integral: None,
            last: None,
            start: 0.0,
            samples: 0,
            max_gap: 0.0,
        }
    }

    /// Add the sample `f(t)`; times must increase strictly.
    pub fn push(&mut self, t: f64, f: &F) -> Result<()> {
        match self.last.take() {
            None => {
                self.start = t;
                self.integral = Some(f.scaled(0.0));
            }
            Some((t0, f0)) => {
                let dt = t - t0;
                if dt <= 0.0 {
                    self.last = Some((t0, f0));
                    return Err(Error::Config(format!(
                        "accumulator samples must advance in time ({t} after {t0})"
                    )));
                }
                let acc = self.integral.take().expect("integral after first sample");
                self.integral = Some(acc.add_scaled(0.5 * dt, &f0).add_scaled(0.5 * dt, f));
                self.max_gap = self.max_gap.max(dt);
            }
        }
        self.last = Some((t, f.clone()));
        self.samples += 1;
        Ok(())
    }

    /// Integral since the first sample (`None` before any sample).
    pub fn value(&self) -> Option<&F> {
        self.integral.as_ref()
    }

    /// Elapsed time since the first sample.
    pub fn elapsed(&self) -> f64 {
        self.last.as_ref().map_or(0.0, |(t, _)| t - self.start)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Largest spacing between consecutive samples.
    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }
}

/// Norm orders used by the averaged monitors: `H^{m-2}` for the slow-fast
/// term and `H^m` for the fast velocity, with `m = 3`.
pub const SLOW_FAST_ORDER: u32 = 1;
pub const FAST_ORDER: u32 = 3;

/// Streaming time averages along one compressible trajectory.
#[derive(Debug, Clone)]
pub struct AveragingMonitor {
    epsilon: f64,
    slow_fast: TimeAverageAccumulator<VectorField>,
    fast: TimeAverageAccumulator<VectorField>,
    sup_slow_fast: f64,
    sup_fast_avg: f64,
    sup_fast: f64,
    last_fast: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedSummary {
    /// `sup_T ||<B[vP, vQ]>(T)||_{H^1}`
    pub sup_slow_fast: f64,
    /// `||<vQ>(T)||_{H^3}` at the last sample.
    pub fast_average_final: f64,
    /// `sup_T ||<vQ>(T)||_{H^3}`
    pub fast_average_sup: f64,
    /// `||vQ||` at the last sample.
    pub fast_final: f64,
    /// `sup_t ||vQ(t)||`
    pub fast_sup: f64,
    /// True when samples are further apart than `eps / 4`.
    pub cadence_warning: bool,
}

impl AveragingMonitor {
    pub fn new(epsilon: f64) -> Self {
        AveragingMonitor {
            epsilon,
            slow_fast: TimeAverageAccumulator::new(),
            fast: TimeAverageAccumulator::new(),
            sup_slow_fast: 0.0,
            sup_fast_avg: 0.0,
            sup_fast: 0.0,
            last_fast: 0.0,
        }
    }

    pub fn record(&mut self, t: f64, v: &VectorField) -> Result<()> {
        let split = leray_project(v)?;
        self.record_split(t, &split.p_part, &split.q_part)
    }

    /// Like [`record`](Self::record) with the Helmholtz parts already known.
    pub fn record_split(&mut self, t: f64, vp: &VectorField, vq: &VectorField) -> Result<()> {
        let b = bilinear_b(vp, vq)?;
        self.slow_fast.push(t, &b)?;
        self.fast.push(t, vq)?;
        let sf = self.slow_fast.value().expect("sample pushed").sobolev_norm(SLOW_FAST_ORDER);
        let fa = self.fast.value().expect("sample pushed").sobolev_norm(FAST_ORDER);
        self.sup_slow_fast = self.sup_slow_fast.max(sf);
        self.sup_fast_avg = self.sup_fast_avg.max(fa);
        self.last_fast = vq.l2_norm();
        self.sup_fast = self.sup_fast.max(self.last_fast);
        Ok(())
    }

    pub fn summary(&self) -> AveragedSummary {
        AveragedSummary {
            sup_slow_fast: self.sup_slow_fast,
            fast_average_final: self
                .fast
                .value()
                .map_or(0.0, |f| f.sobolev_norm(FAST_ORDER)),
            fast_average_sup: self.sup_fast_avg,
            fast_final: self.last_fast,
            fast_sup: self.sup_fast,
            cadence_warning: self.fast.max_gap() > 0.25 * self.epsilon * (1.0 + 1e-9),
        }
    }
}

/// A measured average with its sampling-quality flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragedQuantity {
    pub value: f64,
    pub cadence_warning: bool,
}

fn monitor(trajectory: &[CompressibleState]) -> Result<AveragedSummary> {
    let eps = trajectory.first().map_or(1.0, |s| s.epsilon);
    let mut m = AveragingMonitor::new(eps);
    for s in trajectory {
        m.record(s.time, &s.v)?;
    }
    Ok(m.summary())
}

/// `sup_T ||<B[vP, vQ]>(T)||_{H^1}` over the samples of a trajectory.
pub fn averaged_slow_fast(trajectory: &[CompressibleState]) -> Result<AveragedQuantity> {
    let s = monitor(trajectory)?;
    Ok(AveragedQuantity {
        value: s.sup_slow_fast,
        cadence_warning: s.cadence_warning,
    })
}

/// `||<vQ>(T)||_{H^3}` at the final sample of a trajectory.
pub fn averaged_fast(trajectory: &[CompressibleState]) -> Result<AveragedQuantity> {
    let s = monitor(trajectory)?;
    Ok(AveragedQuantity {
        value: s.fast_average_final,
        cadence_warning: s.cadence_warning,
    })
}

/// Residual of `d_t w + v.grad w + (div v) w = 0` for the vorticity `w`,
/// from two samples: a difference quotient against the trapezoidal mean
/// of the spatial terms (second order about the midpoint).
pub fn vorticity_residual(t1: f64, v1: &VectorField, t2: f64, v2: &VectorField) -> Result<f64> {
    if !v1.same_grid(v2) {
        return Err(Error::GridMismatch);
    }
    let dt = t2 - t1;
    if dt <= 0.0 {
        return Err(Error::Config("vorticity samples must advance in time".into()));
    }
    let flux = |v: &VectorField| -> Result<ScalarField> {
        let w = v.curl();
        let prod = crate::spectral::dealiased_product(&v.divergence(), &w)?;
        Ok(&v.advect(&w)? + &prod)
    };
    let dw = (&v2.curl() - &v1.curl()).scale(1.0 / dt);
    let mean = (&flux(v1)? + &flux(v2)?).scale(0.5);
    Ok((&dw + &mean).l2_norm())
}

/// Pressure variable `r` with `p(1 + eps rho) = 1 + eps r`, pointwise.
pub fn r_transform(rho: &ScalarField, epsilon: f64, law: &PressureLaw) -> Result<ScalarField> {
    check_vacuum(epsilon, rho.values())?;
    let r = rho.values().mapv(|x| law.r_point(epsilon, x));
    ScalarField::from_values(rho.grid(), rho.parity(), &r)
}

/// Inverse of [`r_transform`].
pub fn r_inverse(r: &ScalarField, epsilon: f64, law: &PressureLaw) -> Result<ScalarField> {
    let mut worst = f64::INFINITY;
    let mut failed = false;
    let rho = r.values().mapv(|x| match law.inverse(1.0 + epsilon * x) {
        Some(s) => {
            worst = worst.min(s);
            (s - 1.0) / epsilon
        }
        None => {
            failed = true;
            0.0
        }
    });
    if failed || worst <= VACUUM_GUARD {
        return Err(Error::Vacuum {
            min_total: if failed { 0.0 } else { worst },
            guard: VACUUM_GUARD,
        });
    }
    ScalarField::from_values(r.grid(), r.parity(), &rho)
}

/// Diagonal entries `(s p'(s), 1 / s)` with `s = p^{-1}(1 + r)`; the second
/// entry repeats for each velocity component.
pub fn sigma_entries(r: f64, law: &PressureLaw) -> Result<[f64; 2]> {
    let lo = law.p(VACUUM_GUARD) - 1.0;
    match law.inverse(1.0 + r) {
        Some(s) if s > VACUUM_GUARD => Ok([s * law.dp(s), 1.0 / s]),
        _ => Err(Error::OutOfRange {
            value: r,
            lo,
            hi: f64::INFINITY,
        }),
    }
}

/// [`sigma_entries`] applied pointwise to a field.
pub fn sigma_matrix(r_breve: &ScalarField, law: &PressureLaw) -> Result<(ScalarField, ScalarField)> {
    let vals = r_breve.values();
    let mut first = vals.clone();
    let mut second = vals.clone();
    for ((a, b), r) in first.iter_mut().zip(second.iter_mut()).zip(vals.iter()) {
        let [s1, s2] = sigma_entries(*r, law)?;
        *a = s1;
        *b = s2;
    }
    let (grid, parity) = (r_breve.grid(), r_breve.parity());
    Ok((
        ScalarField::from_values(grid, parity, &first)?,
        ScalarField::from_values(grid, parity, &second)?,
    ))
}

/// The radius `(1 - 2^-gamma) / gamma` for gamma laws (`None` otherwise).
/// It keeps the `1 / s` entries within `[1/2, 2]`; see
/// [`admissible_sigma_radius`] for a radius valid for both entries.
pub fn sigma_radius(law: &PressureLaw) -> Option<f64> {
    law.gamma_value().map(|g| (1.0 - 2f64.powf(-g)) / g)
}

/// Largest `R` such that every entry of `sigma(r)` lies in `[1/2, 2]` for
/// `|r| <= R`, found by scanning outward from `r = 0` and bisecting.
pub fn admissible_sigma_radius(law: &PressureLaw) -> f64 {
    let ok = |r: f64| {
        sigma_entries(r, law)
            .map(|e| e.iter().all(|x| (0.5..=2.0).contains(x)))
            .unwrap_or(false)
    };
    let both = |r: f64| ok(r) && ok(-r);
    let step = 1e-3;
    let mut good = 0.0;
    while good < 10.0 && both(good + step) {
        good += step;
    }
    let mut bad = good + step;
    for _ in 0..60 {
        let mid = 0.5 * (good + bad);
        if both(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    good
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressible::{ill_prepared_init, well_prepared_init, AcousticSpec, FlowSpec};
    use crate::incompressible::{step_incompressible, IncompressibleState};
    use crate::spectral::{make_grid, Geometry, Grid, Parity};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn torus(n: usize) -> Grid {
        make_grid(Geometry::Torus2D, n, n).unwrap()
    }

    #[test]
    fn lin_op_examples() {
        let g = torus(16);
        let s = well_prepared_init(&g, 0.1, &FlowSpec::perturbed(3), 1.0).unwrap();
        assert!(lin_op(&s).sobolev_norm(0) < 1e-12);
        let rho = ScalarField::from_fn(&g, Parity::Periodic, |x, _| x.cos()).unwrap();
        let s = CompressibleState::new(rho, VectorField::zeros(&g), 0.1, 0.0).unwrap();
        let (d, grad) = lin_op(&s);
        assert_eq!(d.l2_norm(), 0.0);
        let expected = VectorField::from_fn(&g, |x, _| -x.sin(), |_, _| 0.0).unwrap();
        assert!((&grad - &expected).l2_norm() < 1e-13);
    }

    #[test]
    fn lin_op_is_skew() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for geometry in [Geometry::Torus2D, Geometry::Channel2D] {
            let g = make_grid(geometry, 32, 32).unwrap();
            let rho = ScalarField::random(&g, Parity::scalar(geometry), 10, false, &mut rng).unwrap();
            let v = VectorField::random(&g, 10, &mut rng).unwrap();
            let s = CompressibleState::new(rho, v, 0.1, 0.0).unwrap();
            let (a, b) = lin_op(&s);
            let pairing = s.rho.inner(&a) + s.v.inner(&b);
            assert!(pairing.abs() <= 1e-11, "{pairing}");
        }
    }

    #[test]
    fn zero_state_energies() {
        let g = torus(16);
        let s = CompressibleState::zeros(&g, 0.1).unwrap();
        let e = energies(&s, &PressureLaw::default(), 3).unwrap();
        assert_eq!((e.e0, e.et0), (0.0, 0.0));
        assert!(energies(&s, &PressureLaw::default(), 2).is_err());
    }

    #[test]
    fn well_prepared_time_derivative_is_epsilon_free() {
        let g = torus(32);
        let law = PressureLaw::default();
        let et: Vec<f64> = [0.08, 0.04, 0.02, 0.01]
            .iter()
            .map(|&eps| {
                let s = well_prepared_init(&g, eps, &FlowSpec::perturbed(7), 0.1).unwrap();
                energies(&s, &law, 3).unwrap().et0
            })
            .collect();
        let (lo, hi) = et.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(hi / lo - 1.0 < 0.01);
    }

    #[test]
    fn ill_prepared_time_derivative_scales_inversely() {
        let g = torus(32);
        let law = PressureLaw::default();
        let scaled: Vec<f64> = [0.08, 0.04, 0.02, 0.01]
            .iter()
            .map(|&eps| {
                let s = ill_prepared_init(&g, eps, &FlowSpec::perturbed(7), 0.1, &AcousticSpec::default()).unwrap();
                eps * energies(&s, &law, 3).unwrap().et0
            })
            .collect();
        let (lo, hi) = scaled.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!(lo > 0.0 && hi / lo < 1.2, "{scaled:?}");
    }

    #[test]
    fn bilinear_form_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = torus(32);
        let a = VectorField::random(&g, 8, &mut rng).unwrap();
        let b = VectorField::random(&g, 8, &mut rng).unwrap();
        let aa = bilinear_b(&a, &a).unwrap();
        assert!((&aa - &a.advect_vector(&a).unwrap().scale(2.0)).l2_norm() < 1e-13);
        assert_eq!(bilinear_b(&a, &VectorField::zeros(&g)).unwrap().l2_norm(), 0.0);
        assert!((&bilinear_b(&a, &b).unwrap() - &bilinear_b(&b, &a).unwrap()).l2_norm() < 1e-13);
    }

    #[test]
    fn slow_fast_identity() {
        let g = make_grid(Geometry::Channel2D, 32, 32).unwrap();
        let s = ill_prepared_init(&g, 0.1, &FlowSpec::perturbed(5), 1.0, &AcousticSpec::default()).unwrap();
        let t = slow_fast_terms(&s).unwrap();
        assert!(t.identity_defect <= 1e-11);
        assert!(t.fast_fast <= 1e-10);
        assert!(t.slow_fast > 1e-3);
    }

    #[test]
    fn accumulator_of_constant_is_exact() {
        let g = torus(16);
        let c = ScalarField::from_fn(&g, Parity::Periodic, |_, _| 2.5).unwrap();
        let mut acc = TimeAverageAccumulator::new();
        for n in 0..=7 {
            acc.push(0.1 + 0.3 * n as f64, &c).unwrap();
        }
        assert_relative_eq!(acc.value().unwrap().mean(), 2.5 * 2.1, epsilon = 1e-14);
        assert_relative_eq!(acc.elapsed(), 2.1, epsilon = 1e-14);
        assert!(acc.push(0.0, &c).is_err());
    }

    #[test]
    fn accumulator_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = torus(16);
        let f = ScalarField::random(&g, Parity::Periodic, 5, true, &mut rng).unwrap();
        let h = ScalarField::random(&g, Parity::Periodic, 5, true, &mut rng).unwrap();
        let (mut af, mut ah, mut ac) = (
            TimeAverageAccumulator::new(),
            TimeAverageAccumulator::new(),
            TimeAverageAccumulator::new(),
        );
        for n in 0..10 {
            let t = 0.1 * n as f64;
            let (sf, sh) = (f.scale(t.sin()), h.scale(t * t));
            af.push(t, &sf).unwrap();
            ah.push(t, &sh).unwrap();
            ac.push(t, &sf.scale(2.0).axpy(-3.0, &sh)).unwrap();
        }
        let combo = af.value().unwrap().scale(2.0).axpy(-3.0, ah.value().unwrap());
        assert!((&combo - ac.value().unwrap()).l2_norm() <= 1e-12 * combo.l2_norm());
    }

    #[test]
    fn accumulator_refinement_is_second_order() {
        let g = torus(16);
        let f = ScalarField::from_fn(&g, Parity::Periodic, |x, _| x.cos()).unwrap();
        let integrate = |n: usize| {
            let mut acc = TimeAverageAccumulator::new();
            for k in 0..=n {
                let t = k as f64 / n as f64;
                acc.push(t, &f.scale((3.0 * t).sin())).unwrap();
            }
            acc.value().unwrap().clone()
        };
        let exact = f.scale((1.0 - 3f64.cos()) / 3.0);
        let e1 = (&integrate(20) - &exact).l2_norm();
        let e2 = (&integrate(40) - &exact).l2_norm();
        assert!((e1 / e2 - 4.0).abs() < 0.05);
    }

    #[test]
    fn averaging_suppresses_oscillation() {
        let g = torus(16);
        let gfield = ScalarField::from_fn(&g, Parity::Periodic, |x, y| x.sin() + y.cos()).unwrap();
        for eps in [0.05f64, 0.02, 0.01] {
            let mut acc = TimeAverageAccumulator::new();
            let cadence = eps / 8.0;
            let n = (1.0 / cadence).round() as usize;
            for k in 0..=n {
                let t = k as f64 * cadence;
                acc.push(t, &gfield.scale((t / eps).sin())).unwrap();
                assert!(acc.value().unwrap().l2_norm() <= 2.0 * eps * gfield.l2_norm());
            }
        }
    }

    #[test]
    fn averaged_monitors_vanish_without_fast_part() {
        let g = torus(16);
        let law = PressureLaw::default();
        // Shear flow u = cos y: v.grad v = 0, so rho stays zero.
        let shear = FlowSpec {
            stream: vec![crate::compressible::Mode::new(0, 1, 1.0, 0.0)],
        };
        let mut traj = vec![well_prepared_init(&g, 0.1, &shear, 1.0).unwrap()];
        for _ in 0..3 {
            let s = crate::compressible::step(traj.last().unwrap(), 0.0125, &law).unwrap();
            traj.push(s);
        }
        assert!(averaged_fast(&traj).unwrap().value < 1e-12);
        assert!(averaged_slow_fast(&traj).unwrap().value < 1e-12);
        assert!(!averaged_fast(&traj).unwrap().cadence_warning);
        let z: Vec<_> = (0..3)
            .map(|k| {
                let mut s = CompressibleState::zeros(&g, 0.1).unwrap();
                s.time = 0.2 * k as f64;
                s
            })
            .collect();
        let r = averaged_fast(&z).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(r.cadence_warning);
    }

    #[test]
    fn vorticity_residual_examples() {
        let g = torus(32);
        let v = FlowSpec::taylor_green().velocity(&g).unwrap();
        assert!(vorticity_residual(0.0, &v, 0.1, &v).unwrap() <= 1e-9);
        let z = VectorField::zeros(&g);
        assert_eq!(vorticity_residual(0.0, &z, 0.1, &z).unwrap(), 0.0);
    }

    #[test]
    fn vorticity_residual_is_second_order_in_spacing() {
        let g = torus(32);
        let v0 = FlowSpec::perturbed(1).velocity(&g).unwrap();
        let s0 = IncompressibleState::new(v0, 0.0).unwrap();
        let fine = 0.0025;
        let mut states = vec![s0];
        for _ in 0..80 {
            let next = step_incompressible(states.last().unwrap(), fine).unwrap();
            states.push(next);
        }
        let res = |stride: usize| {
            let (a, b) = (&states[40 - stride / 2], &states[40 + stride / 2]);
            vorticity_residual(a.time, &a.v, b.time, &b.v).unwrap()
        };
        let ratio = res(40) / res(20);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn r_transform_examples() {
        let g = torus(16);
        let law = PressureLaw::GammaLaw(2.0);
        let zero = ScalarField::zeros(&g, Parity::Periodic).unwrap();
        assert_eq!(r_transform(&zero, 0.1, &law).unwrap().max_abs(), 0.0);
        let one = ScalarField::from_fn(&g, Parity::Periodic, |_, _| 1.0).unwrap();
        let r = r_transform(&one, 0.1, &law).unwrap();
        assert_relative_eq!(r.mean(), 1.05, epsilon = 1e-13);
    }

    #[test]
    fn r_transform_round_trip_and_expansion() {
        let g = torus(32);
        let law = PressureLaw::default();
        let rho = ScalarField::from_fn(&g, Parity::Periodic, |x, y| x.cos() + 0.5 * (x + y).sin()).unwrap();
        let rmax = rho.max_abs();
        for eps in [0.08, 0.04, 0.02, 0.01] {
            let r = r_transform(&rho, eps, &law).unwrap();
            let back = r_inverse(&r, eps, &law).unwrap();
            assert!((&back - &rho).max_abs() <= 1e-10);
            assert!((&r - &rho).max_abs() <= 0.25 * eps * rmax * rmax);
        }
    }

    #[test]
    fn sigma_examples() {
        let law = PressureLaw::default();
        let [a, b] = sigma_entries(0.0, &law).unwrap();
        assert_relative_eq!(a, 1.0, epsilon = 1e-15);
        assert_relative_eq!(b, 1.0, epsilon = 1e-15);
        let [a, b] = sigma_entries(0.2, &PressureLaw::GammaLaw(2.0)).unwrap();
        assert_relative_eq!(a, 1.4, epsilon = 1e-13);
        assert_relative_eq!(b, 1.0 / 1.4f64.sqrt(), epsilon = 1e-13);
        assert!(sigma_entries(-0.9, &law).is_err());
    }

    #[test]
    fn sigma_radius_bounds() {
        for gamma in [1.4, 2.0, 3.0] {
            let law = PressureLaw::GammaLaw(gamma);
            let rp = sigma_radius(&law).unwrap();
            for r in [-rp, rp] {
                let [_, b] = sigma_entries(r, &law).unwrap();
                assert!((0.5 - 1e-12..=2.0 + 1e-12).contains(&b));
            }
            // The density entry equals 1 + gamma r and leaves [1/2, 2]
            // inside this radius; the admissible radius is 1 / (2 gamma).
            let [a, _] = sigma_entries(-rp, &law).unwrap();
            assert_relative_eq!(a, 2f64.powf(-gamma), epsilon = 1e-12);
            assert_relative_eq!(admissible_sigma_radius(&law), 0.5 / gamma, epsilon = 1e-9);
        }
        let field = ScalarField::from_fn(&torus(16), Parity::Periodic, |x, _| 0.2 * x.cos()).unwrap();
        let (s1, s2) = sigma_matrix(&field, &PressureLaw::GammaLaw(2.0)).unwrap();
        assert!(s1.max_abs() <= 2.0 && s2.min_value() >= 0.5);
    }
}
