//! A small bilinear system `u' + b(v(t), u) = f(t)` showing that the
//! pointwise error caused by a forcing depends on the forcing mainly through
//! its time integral.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::{fit_rate, RateFit};

pub type TimeFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// `b(v, u) = sum_j v_j A_j u`, a coefficient trajectory `v(t)` and a
/// forcing `f(t)` with angular frequency `forcing_frequency` (0 if slow).
#[derive(Clone)]
pub struct BilinearODE {
    tensor: Vec<DMatrix<f64>>,
    coefficient: TimeFn,
    forcing: TimeFn,
    forcing_frequency: f64,
}

impl fmt::Debug for BilinearODE {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BilinearODE")
            .field("dim", &self.dim())
            .field("forcing_frequency", &self.forcing_frequency)
            .finish_non_exhaustive()
    }
}

fn skew_generators(n: usize) -> Vec<DMatrix<f64>> {
    // A_j rotates the plane (j, j+1 mod n) with unit rate.
    (0..n)
        .map(|j| {
            let mut a = DMatrix::zeros(n, n);
            let k = (j + 1) % n;
            a[(j, k)] = 1.0;
            a[(k, j)] = -1.0;
            a
        })
        .collect()
}

fn default_coefficient(n: usize) -> TimeFn {
    Arc::new(move |t: f64| {
        DVector::from_fn(n, |j, _| {
            let w = 1.0 + j as f64;
            0.5 * (w * t).cos() + 0.25
        })
    })
}

impl BilinearODE {
    pub fn new(tensor: Vec<DMatrix<f64>>, coefficient: TimeFn) -> Result<Self> {
        let n = tensor.len();
        if n == 0 || tensor.iter().any(|a| a.shape() != (n, n)) {
            return Err(Error::Config(format!(
                "bilinear tensor must hold {n} matrices of size {n}x{n}"
            )));
        }
        Ok(BilinearODE {
            tensor,
            coefficient,
            forcing: Arc::new(move |_| DVector::zeros(n)),
            forcing_frequency: 0.0,
        })
    }

    /// Four-dimensional example with skew `A_j`, so `<u, b(v, u)> = 0`.
    pub fn skew_example() -> Self {
        Self::new(skew_generators(4), default_coefficient(4)).expect("valid example")
    }

    /// Four-dimensional example whose `A_j` carry a symmetric part, so the
    /// dissipativity constant is positive.
    pub fn non_skew_example() -> Self {
        let tensor = skew_generators(4)
            .into_iter()
            .enumerate()
            .map(|(j, a)| {
                let mut s = DMatrix::zeros(4, 4);
                s[(j, j)] = 0.3;
                s[((j + 2) % 4, j)] = 0.1;
                s[(j, (j + 2) % 4)] = 0.1;
                a + s
            })
            .collect();
        Self::new(tensor, default_coefficient(4)).expect("valid example")
    }

    /// Same system with forcing `f`; `frequency` is its angular frequency,
    /// used to check that time steps resolve it.
    pub fn with_forcing(mut self, forcing: TimeFn, frequency: f64) -> Self {
        self.forcing = forcing;
        self.forcing_frequency = frequency;
        self
    }

    pub fn dim(&self) -> usize {
        self.tensor.len()
    }

    pub fn forcing_frequency(&self) -> f64 {
        self.forcing_frequency
    }

    pub fn coefficient(&self, t: f64) -> DVector<f64> {
        (self.coefficient)(t)
    }

    pub fn forcing(&self, t: f64) -> DVector<f64> {
        (self.forcing)(t)
    }

    pub fn b(&self, v: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        for (vj, a) in v.iter().zip(&self.tensor) {
            if *vj != 0.0 {
                out += *vj * (a * u);
            }
        }
        out
    }

    /// A constant `C` with `<u, b(v, u)> <= C |v| |u|^2`:
    /// `sqrt(sum_j ||sym(A_j)||^2)`, zero for skew tensors.
    pub fn dissipativity_constant(&self) -> f64 {
        self.tensor
            .iter()
            .map(|a| {
                let sym = 0.5 * (a + a.transpose());
                let eig = SymmetricEigen::new(sym);
                eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs())).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn rate(&self, t: f64, u: &DVector<f64>) -> DVector<f64> {
        self.forcing(t) - self.b(&self.coefficient(t), u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl OdeTrajectory {
    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has the initial state")
    }
}

/// RK4 from `u0` to `t_final` with the largest step `<= dt` dividing it.
pub fn integrate(system: &BilinearODE, u0: &DVector<f64>, t_final: f64, dt: f64) -> Result<OdeTrajectory> {
    if u0.len() != system.dim() {
        return Err(Error::ShapeMismatch {
            expected: (system.dim(), 1),
            found: (u0.len(), 1),
        });
    }
    if !(dt > 0.0 && t_final >= 0.0) {
        return Err(Error::Config(format!("need dt > 0 and T >= 0, got dt = {dt}, T = {t_final}")));
    }
    if system.forcing_frequency > 0.0 {
        let samples_per_period = 2.0 * PI / (system.forcing_frequency * dt);
        if samples_per_period < 8.0 {
            return Err(Error::UnderResolved { samples_per_period });
        }
    }
    let n = ((t_final / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if n == 0 { 0.0 } else { t_final / n as f64 };
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut u = u0.clone();
    times.push(0.0);
    states.push(u.clone());
    for k in 0..n {
        let t = k as f64 * h;
        let k1 = system.rate(t, &u);
        let k2 = system.rate(t + 0.5 * h, &(&u + 0.5 * h * &k1));
        let k3 = system.rate(t + 0.5 * h, &(&u + 0.5 * h * &k2));
        let k4 = system.rate(t + h, &(&u + h * &k3));
        u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        times.push((k + 1) as f64 * h);
        states.push(u.clone());
    }
    Ok(OdeTrajectory { times, states })
}

/// Perturbation applied in [`forcing_sensitivity_experiment`]:
/// `amplitude * sin(t / eps) * direction`, or `amplitude * direction`
/// when `zero_frequency` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityConfig {
    pub amplitude: f64,
    pub direction: Vec<f64>,
    pub initial: Vec<f64>,
    pub t_final: f64,
    /// Time steps per forcing period.
    pub samples_per_period: f64,
    pub zero_frequency: bool,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        SensitivityConfig {
            amplitude: 1.0,
            direction: vec![1.0, 0.5, -0.25, 0.0],
            initial: vec![1.0, 0.0, 0.5, -0.5],
            t_final: 1.0,
            samples_per_period: 32.0,
            zero_frequency: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub eps: f64,
    /// `sup_t |u1 - u2|`
    pub sup_error: f64,
    /// `sup_t |<f2 - f1>(t)|`
    pub sup_average_forcing: f64,
    /// Right-hand side of the averaging estimate with measured constants.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub rows: Vec<SensitivityRow>,
    pub fit: Option<RateFit>,
    pub zero_frequency: bool,
}

/// The averaging estimate for two runs sharing `v`:
/// `sup|<df>| + (e^{CMT} - 1) / (CM) * sup|b(v, <df>)|`, with
/// `M = sup|v|` and the limit `T` when `CM = 0`.
pub fn lemma_bound(system: &BilinearODE, times: &[f64], averaged_forcing: &[DVector<f64>]) -> f64 {
    let t_final = times.last().copied().unwrap_or(0.0);
    let m = times
        .iter()
        .map(|t| system.coefficient(*t).norm())
        .fold(0.0f64, f64::max);
    let cm = system.dissipativity_constant() * m;
    let growth = if cm * t_final < 1e-12 {
        t_final
    } else {
        (cm * t_final).exp_m1() / cm
    };
    let sup_avg = averaged_forcing.iter().map(|g| g.norm()).fold(0.0f64, f64::max);
    let sup_b = times
        .iter()
        .zip(averaged_forcing)
        .map(|(t, g)| system.b(&system.coefficient(*t), g).norm())
        .fold(0.0f64, f64::max);
    sup_avg + growth * sup_b
}

/// For each `eps`, compare the unforced system with one forced at
/// frequency `1 / eps` and record `sup_t |u1 - u2|`.
pub fn forcing_sensitivity_experiment(
    system: &BilinearODE,
    eps_list: &[f64],
    config: &SensitivityConfig,
) -> Result<SensitivityReport> {
    let n = system.dim();
    if config.direction.len() != n || config.initial.len() != n {
        return Err(Error::ShapeMismatch {
            expected: (n, 1),
            found: (config.direction.len(), config.initial.len()),
        });
    }
    if config.samples_per_period < 8.0 {
        return Err(Error::UnderResolved {
            samples_per_period: config.samples_per_period,
        });
    }
    let g = DVector::from_vec(config.direction.clone());
    let u0 = DVector::from_vec(config.initial.clone());
    let rows = eps_list
        .par_iter()
        .map(|&eps| -> Result<SensitivityRow> {
            let dt = 2.0 * PI * eps / config.samples_per_period;
            let amp = config.amplitude;
            let zero_freq = config.zero_frequency;
            let gg = g.clone();
            let forcing: TimeFn = if zero_freq {
                Arc::new(move |_| amp * &gg)
            } else {
                Arc::new(move |t: f64| (amp * (t / eps).sin()) * &gg)
            };
            let freq = if zero_freq { 0.0 } else { 1.0 / eps };
            let unforced = system.clone().with_forcing(Arc::new(move |_| DVector::zeros(n)), 0.0);
            let forced = system.clone().with_forcing(forcing.clone(), freq);
            let a = integrate(&unforced, &u0, config.t_final, dt)?;
            let b = integrate(&forced, &u0, config.t_final, dt)?;
            let sup_error = a
                .states
                .iter()
                .zip(&b.states)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0f64, f64::max);
            // Running trapezoidal integral of the forcing difference on the
            // same time grid.
            let mut avg = vec![DVector::zeros(n)];
            for w in a.times.windows(2) {
                let prev = avg.last().expect("seeded").clone();
                avg.push(prev + 0.5 * (w[1] - w[0]) * (forcing(w[0]) + forcing(w[1])));
            }
            let sup_average_forcing = avg.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
            Ok(SensitivityRow {
                eps,
                sup_error,
                sup_average_forcing,
                bound: lemma_bound(system, &a.times, &avg),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit = if rows.len() >= 3 {
        let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let err: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
        fit_rate(&eps, &err).ok()
    } else {
        None
    };
    Ok(SensitivityReport {
        rows,
        fit,
        zero_frequency: config.zero_frequency,
    })
}
