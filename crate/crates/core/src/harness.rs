//! Epsilon sweeps: one incompressible reference run, one compressible run
//! per epsilon, errors sampled at shared output times, rate fits and
//! CSV/JSON/SVG reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::compressible::{
    cfl_limit, ill_prepared_init, step_with_scalars, well_prepared_init, AcousticSpec,
    CompressibleState, FlowSpec, PressureLaw,
};
use crate::diagnostics::{energies, lin_op_norm, time_derivative_norm, AveragingMonitor, TimeAverageAccumulator};
use crate::error::{Error, Result};
use crate::incompressible::{step_incompressible_with_scalars, IncompressibleState};
use crate::leray::leray_project;
use crate::spectral::{make_grid, write_snapshot, Geometry, Grid, ScalarField, SobolevNorm, VectorField};
use crate::transport::{advective_limit, default_scalar, ScalarTrajectory, VelocitySource};

/// Norm order of the initial-data energy `E0` and of the norm guard.
pub const ENERGY_ORDER: u32 = 3;
/// Order of the `H^s` norms of `d_t(rho, v)` and `L(rho, v)` in the rows.
pub const MONITOR_ORDER: u32 = 2;
/// A row is flagged invalid once `||(rho, v)||_{H^3}` exceeds this multiple of `E0`.
pub const NORM_GUARD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prep {
    #[default]
    Well,
    Ill,
}

impl FromStr for Prep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "well" => Ok(Prep::Well),
            "ill" => Ok(Prep::Ill),
            other => Err(Error::Config(format!("unknown preparation `{other}`"))),
        }
    }
}

/// Accepted range for a fitted slope; a missing end is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeBand {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl SlopeBand {
    pub fn new(min: Option<f64>, max: Option<f64>) -> Self {
        SlopeBand { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        x.is_finite() && self.min.is_none_or(|lo| x >= lo) && self.max.is_none_or(|hi| x <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: Geometry,
    pub nx: usize,
    pub ny: usize,
    pub gamma: f64,
    /// Distinct, descending, in `(0, 1/2]`.
    pub eps: Vec<f64>,
    /// Final time; `t_factor / E0` when absent.
    pub t_final: Option<f64>,
    pub t_factor: f64,
    pub prep: Prep,
    pub amplitude: f64,
    /// Acoustic content used when `prep = "ill"`.
    pub acoustic: AcousticSpec,
    /// Stream function of the initial flow; seeded perturbed Taylor-Green when absent.
    pub flow: Option<FlowSpec>,
    /// Output spacing as a fraction of epsilon.
    pub cadence: f64,
    /// Minimum number of time steps per output interval.
    pub substeps: usize,
    pub seed: u64,
    pub scalars: bool,
    pub threads: Option<usize>,
    /// Slope bands per series; defaults for the preparation when absent.
    pub checks: Option<BTreeMap<String, SlopeBand>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            geometry: Geometry::Torus2D,
            nx: 128,
            ny: 128,
            gamma: 1.4,
            eps: vec![0.08, 0.04, 0.02, 0.01],
            t_final: None,
            t_factor: 0.5,
            prep: Prep::Well,
            amplitude: 0.1,
            acoustic: AcousticSpec::default(),
            flow: None,
            cadence: 0.125,
            substeps: 1,
            seed: 7,
            scalars: true,
            threads: None,
            checks: None,
        }
    }
}

fn band(min: f64, max: Option<f64>) -> SlopeBand {
    SlopeBand::new(Some(min), max)
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        make_grid(self.geometry, self.nx, self.ny)?;
        PressureLaw::gamma(self.gamma)?;
        if self.eps.is_empty() {
            return Err(Error::Config("at least one epsilon is required".into()));
        }
        for &e in &self.eps {
            crate::compressible::check_epsilon(e)?;
        }
        if self.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("epsilon values must be distinct and descending".into()));
        }
        if let Some(t) = self.t_final {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("t_final must be positive, got {t}")));
            }
        }
        if self.t_factor.is_nan() || self.t_factor <= 0.0 {
            return Err(Error::Config("t_factor must be positive".into()));
        }
        if !(self.cadence > 0.0 && self.cadence <= 1.0) {
            return Err(Error::Config("cadence must lie in (0, 1]".into()));
        }
        if self.substeps == 0 {
            return Err(Error::Config("substeps must be at least 1".into()));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::Config("amplitude must be finite and nonnegative".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn flow_spec(&self) -> FlowSpec {
        self.flow.clone().unwrap_or_else(|| FlowSpec::perturbed(self.seed))
    }

    pub fn grid(&self) -> Result<Grid> {
        make_grid(self.geometry, self.nx, self.ny)
    }

    pub fn law(&self) -> Result<PressureLaw> {
        PressureLaw::gamma(self.gamma)
    }

    /// Initial compressible state for `eps`.
    pub fn initial_state(&self, grid: &Grid, eps: f64) -> Result<CompressibleState> {
        let flow = self.flow_spec();
        match self.prep {
            Prep::Well => well_prepared_init(grid, eps, &flow, self.amplitude),
            Prep::Ill => ill_prepared_init(grid, eps, &flow, self.amplitude, &self.acoustic),
        }
    }

    pub fn default_checks(prep: Prep) -> BTreeMap<String, SlopeBand> {
        let mut m = BTreeMap::new();
        match prep {
            Prep::Well => {
                m.insert("leray_error".into(), band(1.8, Some(2.3)));
                m.insert("velocity_error".into(), band(0.8, Some(1.3)));
                m.insert("integrated_error".into(), band(1.8, Some(2.3)));
                m.insert("averaged_fast".into(), band(1.8, None));
                m.insert("fast".into(), band(0.8, Some(1.3)));
            }
            Prep::Ill => {
                m.insert("leray_error".into(), band(0.8, Some(1.3)));
            }
        }
        m
    }

    /// Configured checks, or the defaults for the preparation (with the
    /// scalar checks only when scalars are tracked).
    pub fn effective_checks(&self) -> BTreeMap<String, SlopeBand> {
        if let Some(c) = &self.checks {
            return c.clone();
        }
        let mut m = Self::default_checks(self.prep);
        if self.scalars && self.prep == Prep::Well {
            m.insert("scalar_error".into(), band(1.8, Some(2.3)));
            m.insert("scalar_leray_error".into(), band(1.8, Some(2.3)));
        }
        m
    }

    /// Hex SHA-256 of the JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Least-squares fit of `ln err = slope * ln eps + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Rates between consecutive points.
    pub pairwise: Vec<f64>,
}

pub fn fit_rate(eps: &[f64], err: &[f64]) -> Result<RateFit> {
    if eps.len() != err.len() {
        return Err(Error::Config(format!(
            "rate fit got {} epsilon values and {} errors",
            eps.len(),
            err.len()
        )));
    }
    if eps.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: eps.len(),
        });
    }
    if let Some(bad) = eps.iter().chain(err).find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositive(*bad));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = err.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("rate fit needs distinct epsilon values".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (x
        .iter()
        .zip(&y)
        .map(|(a, b)| (b - slope * a - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    let pairwise = x
        .windows(2)
        .zip(y.windows(2))
        .map(|(a, b)| (b[1] - b[0]) / (a[1] - a[0]))
        .collect();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        pairwise,
    })
}

/// Measurements for one epsilon. "sup" values are maxima over output times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsMetrics {
    /// `sup ||Pv - v~||`
    pub leray_error: f64,
    /// `sup ||Pv - v~||_{H^1}`
    pub leray_error_h1: f64,
    /// `sup ||v - v~||`
    pub velocity_error: f64,
    pub velocity_error_final: f64,
    /// `eps ||v - v~||(T)`
    pub scaled_velocity_error: f64,
    /// `sup_t ||int_0^t (v - v~)||`
    pub integrated_error: f64,
    pub integrated_error_final: f64,
    /// `sup ||theta - theta~||`, theta carried by `v`; zero when untracked.
    pub scalar_error: f64,
    /// Same with theta carried by `Pv`.
    pub scalar_leray_error: f64,
    /// `sup ||<B[vP, vQ]>||_{H^1}`
    pub averaged_slow_fast: f64,
    /// `sup ||<vQ>||_{H^3}`
    pub averaged_fast: f64,
    pub averaged_fast_final: f64,
    /// `sup ||vQ||`
    pub fast: f64,
    pub fast_final: f64,
    pub e0: f64,
    pub et0: f64,
    /// `sup ||L(rho, v)||_{H^2}`
    pub lin_op: f64,
    /// `sup ||d_t(rho, v)||_{H^2}`
    pub time_derivative: f64,
    /// `sup ||(rho, v)||_{H^3}`
    pub state_norm: f64,
    pub samples: usize,
    pub steps: usize,
    pub cadence_warning: bool,
}

/// Series with fitted slopes, in CSV order.
pub const SERIES: [&str; 16] = [
    "leray_error",
    "leray_error_h1",
    "velocity_error",
    "velocity_error_final",
    "scaled_velocity_error",
    "integrated_error",
    "integrated_error_final",
    "scalar_error",
    "scalar_leray_error",
    "averaged_slow_fast",
    "averaged_fast",
    "averaged_fast_final",
    "fast",
    "fast_final",
    "lin_op",
    "time_derivative",
];

/// Series drawn in the SVG plot.
pub const TRACKED_SERIES: [&str; 7] = [
    "leray_error",
    "velocity_error",
    "integrated_error",
    "scalar_error",
    "scalar_leray_error",
    "averaged_fast",
    "fast",
];

impl EpsMetrics {
    pub fn series(&self, name: &str) -> Option<f64> {
        Some(match name {
            "leray_error" => self.leray_error,
            "leray_error_h1" => self.leray_error_h1,
            "velocity_error" => self.velocity_error,
            "velocity_error_final" => self.velocity_error_final,
            "scaled_velocity_error" => self.scaled_velocity_error,
            "integrated_error" => self.integrated_error,
            "integrated_error_final" => self.integrated_error_final,
            "scalar_error" => self.scalar_error,
            "scalar_leray_error" => self.scalar_leray_error,
            "averaged_slow_fast" => self.averaged_slow_fast,
            "averaged_fast" => self.averaged_fast,
            "averaged_fast_final" => self.averaged_fast_final,
            "fast" => self.fast,
            "fast_final" => self.fast_final,
            "lin_op" => self.lin_op,
            "time_derivative" => self.time_derivative,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub metrics: Option<EpsMetrics>,
    /// False when the run failed or the norm guard tripped.
    pub valid: bool,
    pub flags: Vec<String>,
    pub error: Option<String>,
    pub runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub version: String,
    pub t_final: f64,
    pub e0: f64,
    /// Output spacing of the reference run; per-epsilon spacings are multiples.
    pub reference_cadence: f64,
    pub reference_steps: usize,
    pub reference_runtime_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub band: SlopeBand,
    pub slope: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: RunConfig,
    pub metadata: ReportMetadata,
    pub rows: Vec<ConvergenceRow>,
    pub slopes: BTreeMap<String, RateFit>,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckOutcome>,
}

impl ConvergenceReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn valid_rows(&self) -> impl Iterator<Item = (f64, &EpsMetrics)> {
        self.rows
            .iter()
            .filter(|r| r.valid)
            .filter_map(|r| r.metrics.as_ref().map(|m| (r.eps, m)))
    }

    pub fn slope(&self, series: &str) -> Option<f64> {
        self.slopes.get(series).map(|f| f.slope)
    }
}

/// Worker count: `threads` capped by `MACHLAB_THREADS`.
pub fn worker_count(threads: Option<usize>) -> usize {
    let env = std::env::var("MACHLAB_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|n| *n > 0);
    let base = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    env.map_or(base, |e| base.min(e)).max(1)
}

fn intervals_per_output(out_dt: f64, limit: f64, min: usize) -> usize {
    if limit.is_finite() {
        min.max((out_dt / (0.9 * limit)).ceil() as usize)
    } else {
        min
    }
}

/// Samples of the reference run at every reference output time.
struct Reference {
    cadence: f64,
    velocity: Vec<VectorField>,
    scalar: Vec<Option<ScalarField>>,
    steps: usize,
}

fn run_reference(config: &RunConfig, grid: &Grid, v0: &VectorField, t_final: f64) -> Result<Reference> {
    let eps_min = config.eps.iter().copied().fold(f64::INFINITY, f64::min);
    let n_out = ((t_final / (config.cadence * eps_min)) - 1e-9).ceil().max(1.0) as usize;
    let cadence = t_final / n_out as f64;
    let mut state = IncompressibleState::from_projection(v0)?;
    let mut scalars = if config.scalars {
        vec![ScalarTrajectory::new(default_scalar(grid)?, VelocitySource::Incompressible)]
    } else {
        Vec::new()
    };
    let mut velocity = vec![state.v.clone()];
    let mut scalar = vec![scalars.first().map(|s| s.theta.clone())];
    let mut steps = 0;
    for j in 1..=n_out {
        let t_target = j as f64 * cadence;
        let sub = intervals_per_output(cadence, advective_limit(&state.v), config.substeps);
        let start = state.time;
        let dt = (t_target - start) / sub as f64;
        for k in 1..=sub {
            state = step_incompressible_with_scalars(&state, &mut scalars, dt)?;
            state.time = start + k as f64 * dt;
            steps += 1;
        }
        state.time = t_target;
        velocity.push(state.v.clone());
        scalar.push(scalars.first().map(|s| s.theta.clone()));
    }
    Ok(Reference {
        cadence,
        velocity,
        scalar,
        steps,
    })
}

/// Largest divisor `s` of `n` with `s * cadence <= target` (at least 1).
fn stride(n: usize, cadence: f64, target: f64) -> usize {
    (1..=n)
        .rev()
        .find(|s| n.is_multiple_of(*s) && *s as f64 * cadence <= target * (1.0 + 1e-12))
        .unwrap_or(1)
}

fn run_eps(
    config: &RunConfig,
    grid: &Grid,
    law: &PressureLaw,
    eps: f64,
    reference: &Reference,
) -> Result<(EpsMetrics, Vec<String>)> {
    let n_ref = reference.velocity.len() - 1;
    let s = stride(n_ref, reference.cadence, config.cadence * eps);
    let out_dt = s as f64 * reference.cadence;
    let mut state = config.initial_state(grid, eps)?;
    let en = energies(&state, law, ENERGY_ORDER)?;
    let mut scalars = if config.scalars {
        let theta = default_scalar(grid)?;
        vec![
            ScalarTrajectory::new(theta.clone(), VelocitySource::Compressible),
            ScalarTrajectory::new(theta, VelocitySource::LerayOfCompressible),
        ]
    } else {
        Vec::new()
    };

    let mut m = EpsMetrics {
        leray_error: 0.0,
        leray_error_h1: 0.0,
        velocity_error: 0.0,
        velocity_error_final: 0.0,
        scaled_velocity_error: 0.0,
        integrated_error: 0.0,
        integrated_error_final: 0.0,
        scalar_error: 0.0,
        scalar_leray_error: 0.0,
        averaged_slow_fast: 0.0,
        averaged_fast: 0.0,
        averaged_fast_final: 0.0,
        fast: 0.0,
        fast_final: 0.0,
        e0: en.e0,
        et0: en.et0,
        lin_op: 0.0,
        time_derivative: 0.0,
        state_norm: 0.0,
        samples: 0,
        steps: 0,
        cadence_warning: false,
    };
    let mut flags = Vec::new();
    let mut monitor = AveragingMonitor::new(eps);
    let mut integrated = TimeAverageAccumulator::<VectorField>::new();
    let mut guard_tripped = false;

    let mut sample = |j: usize, state: &CompressibleState, scalars: &[ScalarTrajectory], m: &mut EpsMetrics| -> Result<()> {
        let t = j as f64 * out_dt;
        let vt = &reference.velocity[j * s];
        let split = leray_project(&state.v)?;
        let dp = &split.p_part - vt;
        m.leray_error = m.leray_error.max(dp.l2_norm());
        m.leray_error_h1 = m.leray_error_h1.max(dp.sobolev_norm(1));
        let dv = &state.v - vt;
        m.velocity_error_final = dv.l2_norm();
        m.velocity_error = m.velocity_error.max(m.velocity_error_final);
        integrated.push(t, &dv)?;
        m.integrated_error_final = integrated.value().map_or(0.0, |f| f.l2_norm());
        m.integrated_error = m.integrated_error.max(m.integrated_error_final);
        if let Some(tt) = &reference.scalar[j * s] {
            m.scalar_error = m.scalar_error.max((&scalars[0].theta - tt).l2_norm());
            m.scalar_leray_error = m.scalar_leray_error.max((&scalars[1].theta - tt).l2_norm());
        }
        monitor.record_split(t, &split.p_part, &split.q_part)?;
        m.lin_op = m.lin_op.max(lin_op_norm(state, MONITOR_ORDER));
        m.time_derivative = m.time_derivative.max(time_derivative_norm(state, law, MONITOR_ORDER)?);
        let norm = state.pair().sobolev_norm(ENERGY_ORDER);
        m.state_norm = m.state_norm.max(norm);
        if norm > NORM_GUARD * m.e0 {
            guard_tripped = true;
        }
        m.samples += 1;
        Ok(())
    };

    sample(0, &state, &scalars, &mut m)?;
    let n_out = n_ref / s;
    for j in 1..=n_out {
        let t_target = j as f64 * out_dt;
        let sub = intervals_per_output(out_dt, cfl_limit(&state, law)?, config.substeps);
        let start = state.time;
        let dt = (t_target - start) / sub as f64;
        for k in 1..=sub {
            state = step_with_scalars(&state, &mut scalars, dt, law)?;
            state.time = start + k as f64 * dt;
            m.steps += 1;
        }
        state.time = t_target;
        sample(j, &state, &scalars, &mut m)?;
    }
    let summary = monitor.summary();
    m.averaged_slow_fast = summary.sup_slow_fast;
    m.averaged_fast = summary.fast_average_sup;
    m.averaged_fast_final = summary.fast_average_final;
    m.fast = summary.fast_sup;
    m.fast_final = summary.fast_final;
    m.cadence_warning = summary.cadence_warning;
    m.scaled_velocity_error = eps * m.velocity_error_final;
    if m.cadence_warning {
        flags.push("cadence".to_string());
    }
    if guard_tripped {
        flags.push("norm_guard".to_string());
    }
    Ok((m, flags))
}

/// Run the sweep described by `config`. Failures for one epsilon are
/// recorded in its row and the sweep continues.
pub fn run_convergence_sweep(config: &RunConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let grid = config.grid()?;
    let law = config.law()?;
    let init = config.initial_state(&grid, config.eps[0])?;
    let e0 = energies(&init, &law, ENERGY_ORDER)?.e0;
    let t_final = match config.t_final {
        Some(t) => t,
        None if e0 > 0.0 => config.t_factor / e0,
        None => return Err(Error::Config("zero initial data: set t_final explicitly".into())),
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(config.threads))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let started = Instant::now();
    let reference = run_reference(config, &grid, &init.v, t_final)?;
    let reference_runtime_s = started.elapsed().as_secs_f64();

    let rows: Vec<ConvergenceRow> = pool.install(|| {
        config
            .eps
            .par_iter()
            .map(|&eps| {
                let t0 = Instant::now();
                let outcome = run_eps(config, &grid, &law, eps, &reference);
                let runtime_s = t0.elapsed().as_secs_f64();
                match outcome {
                    Ok((metrics, flags)) => ConvergenceRow {
                        eps,
                        valid: !flags.iter().any(|f| f == "norm_guard"),
                        metrics: Some(metrics),
                        flags,
                        error: None,
                        runtime_s,
                    },
                    Err(e) => ConvergenceRow {
                        eps,
                        metrics: None,
                        valid: false,
                        flags: vec!["failed".to_string()],
                        error: Some(e.to_string()),
                        runtime_s,
                    },
                }
            })
            .collect()
    });

    let mut warnings = Vec::new();
    for r in &rows {
        if let Some(e) = &r.error {
            warnings.push(format!("eps = {}: run failed: {e}", r.eps));
        } else if !r.valid {
            warnings.push(format!(
                "eps = {}: H^3 norm exceeded {NORM_GUARD} E0; row excluded from fits",
                r.eps
            ));
        }
        if r.flags.iter().any(|f| f == "cadence") {
            warnings.push(format!("eps = {}: output spacing exceeds eps/4", r.eps));
        }
    }

    let valid: Vec<(f64, &EpsMetrics)> = rows
        .iter()
        .filter(|r| r.valid)
        .filter_map(|r| r.metrics.as_ref().map(|m| (r.eps, m)))
        .collect();
    let mut slopes = BTreeMap::new();
    if valid.len() < 3 {
        warnings.push(format!(
            "only {} valid epsilon value(s); slopes need at least 3",
            valid.len()
        ));
    } else {
        let eps: Vec<f64> = valid.iter().map(|(e, _)| *e).collect();
        for name in SERIES {
            let vals: Vec<f64> = valid
                .iter()
                .map(|(_, m)| m.series(name).expect("known series"))
                .collect();
            if let Ok(fit) = fit_rate(&eps, &vals) {
                slopes.insert(name.to_string(), fit);
            }
        }
        if valid
            .windows(2)
            .any(|w| w[1].1.leray_error >= w[0].1.leray_error)
        {
            warnings.push("sup ||Pv - v~|| does not decrease monotonically with eps".into());
        }
    }

    let checks = config
        .effective_checks()
        .into_iter()
        .map(|(name, band)| {
            let slope = slopes.get(&name).map(|f: &RateFit| f.slope);
            CheckOutcome {
                pass: slope.is_some_and(|s| band.contains(s)),
                name,
                band,
                slope,
            }
        })
        .collect();

    Ok(ConvergenceReport {
        config: config.clone(),
        metadata: ReportMetadata {
            config_hash: config.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            t_final,
            e0,
            reference_cadence: reference.cadence,
            reference_steps: reference.steps,
            reference_runtime_s,
        },
        rows,
        slopes,
        warnings,
        checks,
    })
}

/// Summary of one compressible run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleRunSummary {
    pub eps: f64,
    pub t_final: f64,
    pub e0: f64,
    pub et0: f64,
    pub steps: usize,
    pub samples: usize,
    pub min_total_density: f64,
    pub max_lin_op: f64,
    pub max_time_derivative: f64,
    pub final_state_norm: f64,
    pub final_divergence: f64,
    pub snapshots: Vec<PathBuf>,
}

/// One compressible run at `eps`; with `checkpoint_dir`, `(rho, u, w)` is
/// written at every output time as `snap_NNNNN.bin`.
pub fn run_single(config: &RunConfig, eps: f64, checkpoint_dir: Option<&Path>) -> Result<SingleRunSummary> {
    config.validate()?;
    crate::compressible::check_epsilon(eps)?;
    let grid = config.grid()?;
    let law = config.law()?;
    let mut state = config.initial_state(&grid, eps)?;
    let en = energies(&state, &law, ENERGY_ORDER)?;
    let t_final = match config.t_final {
        Some(t) => t,
        None if en.e0 > 0.0 => config.t_factor / en.e0,
        None => return Err(Error::Config("zero initial data: set t_final explicitly".into())),
    };
    if let Some(dir) = checkpoint_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let n_out = ((t_final / (config.cadence * eps)) - 1e-9).ceil().max(1.0) as usize;
    let out_dt = t_final / n_out as f64;
    let mut summary = SingleRunSummary {
        eps,
        t_final,
        e0: en.e0,
        et0: en.et0,
        steps: 0,
        samples: 0,
        min_total_density: f64::INFINITY,
        max_lin_op: 0.0,
        max_time_derivative: 0.0,
        final_state_norm: 0.0,
        final_divergence: 0.0,
        snapshots: Vec::new(),
    };
    let record = |j: usize, state: &CompressibleState, s: &mut SingleRunSummary| -> Result<()> {
        s.samples += 1;
        s.min_total_density = s.min_total_density.min(state.min_total_density());
        s.max_lin_op = s.max_lin_op.max(lin_op_norm(state, MONITOR_ORDER));
        s.max_time_derivative = s
            .max_time_derivative
            .max(time_derivative_norm(state, &law, MONITOR_ORDER)?);
        s.final_state_norm = state.pair().sobolev_norm(ENERGY_ORDER);
        s.final_divergence = state.v.divergence().l2_norm();
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(format!("snap_{j:05}.bin"));
            write_snapshot(&path, state.time, &[&state.rho, &state.v.u, &state.v.w])?;
            s.snapshots.push(path);
        }
        Ok(())
    };
    record(0, &state, &mut summary)?;
    for j in 1..=n_out {
        let t_target = j as f64 * out_dt;
        let sub = intervals_per_output(out_dt, cfl_limit(&state, &law)?, config.substeps);
        let start = state.time;
        let dt = (t_target - start) / sub as f64;
        for k in 1..=sub {
            state = step_with_scalars(&state, &mut [], dt, &law)?;
            state.time = start + k as f64 * dt;
            summary.steps += 1;
        }
        state.time = t_target;
        record(j, &state, &mut summary)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReportFormat {
    Csv,
    Json,
    Svg,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "svg" => Ok(ReportFormat::Svg),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

impl ReportFormat {
    /// Parse a comma-separated list such as `csv,json,svg`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
    }
}

/// CSV header, one row per epsilon. Metric cells are empty for failed
/// runs; `runtime_s` is the only column that varies between identical runs.
///
/// | column | meaning |
/// |---|---|
/// | `eps` | Mach number |
/// | `valid` | row enters the slope fits |
/// | `flags` | `;`-separated: `cadence`, `norm_guard`, `failed` |
/// | `leray_error` ... `time_derivative` | see [`EpsMetrics`] |
/// | `e0`, `et0` | initial `H^3` energy and `H^2` norm of `d_t(rho, v)` |
/// | `state_norm` | `sup ||(rho, v)||_{H^3}` |
/// | `samples`, `steps` | output samples and time steps |
/// | `cadence_warning` | output spacing above `eps/4` |
/// | `error` | failure message |
/// | `runtime_s` | wall time of the run |
pub const CSV_COLUMNS: [&str; 27] = [
    "eps",
    "valid",
    "flags",
    "leray_error",
    "leray_error_h1",
    "velocity_error",
    "velocity_error_final",
    "scaled_velocity_error",
    "integrated_error",
    "integrated_error_final",
    "scalar_error",
    "scalar_leray_error",
    "averaged_slow_fast",
    "averaged_fast",
    "averaged_fast_final",
    "fast",
    "fast_final",
    "lin_op",
    "time_derivative",
    "e0",
    "et0",
    "state_norm",
    "samples",
    "steps",
    "cadence_warning",
    "error",
    "runtime_s",
];

fn csv_row(r: &ConvergenceRow) -> Vec<String> {
    let mut out = vec![format!("{:e}", r.eps), r.valid.to_string(), r.flags.join(";")];
    match &r.metrics {
        Some(m) => {
            for name in SERIES {
                out.push(format!("{:e}", m.series(name).expect("known series")));
            }
            out.push(format!("{:e}", m.e0));
            out.push(format!("{:e}", m.et0));
            out.push(format!("{:e}", m.state_norm));
            out.push(m.samples.to_string());
            out.push(m.steps.to_string());
            out.push(m.cadence_warning.to_string());
        }
        None => out.extend(std::iter::repeat_n(String::new(), SERIES.len() + 6)),
    }
    out.push(r.error.clone().unwrap_or_default());
    out.push(format!("{:.3}", r.runtime_s));
    out
}

pub fn write_report_csv(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_COLUMNS)?;
    for r in &report.rows {
        w.write_record(csv_row(r))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_report_json(report: &ConvergenceReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Pretty JSON for any serializable value.
pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

pub fn read_report_json(path: &Path) -> Result<ConvergenceReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

const COLORS: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#ff7f0e", "#17becf"];

/// Log-log plot of the tracked series against epsilon: one `<polyline>`
/// per series with data and a dashed `<line>` per fitted slope.
pub fn render_svg(report: &ConvergenceReport) -> String {
    let (w, h, pad) = (720.0, 480.0, 60.0);
    let points: Vec<(&str, Vec<(f64, f64)>)> = TRACKED_SERIES
        .iter()
        .map(|name| {
            let pts = report
                .valid_rows()
                .filter_map(|(e, m)| m.series(name).filter(|v| *v > 0.0).map(|v| (e.log10(), v.log10())))
                .collect();
            (*name, pts)
        })
        .filter(|(_, p): &(&str, Vec<(f64, f64)>)| !p.is_empty())
        .collect();
    let all = points.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in all {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-2.0, -1.0, -2.0, -1.0);
    }
    if x1 - x0 < 1e-9 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">log10 eps ({x0:.2} .. {x1:.2})</text>"#,
        w / 2.0,
        h - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{}" font-size="14" transform="rotate(-90 15 {})">log10 error ({y0:.2} .. {y1:.2})</text>"#,
        h / 2.0,
        h / 2.0
    );
    for (i, (name, pts)) in points.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline data-series="{name}" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        if let Some(fit) = report.slopes.get(*name) {
            let ln10 = std::f64::consts::LN_10;
            let fy = |x: f64| (fit.slope * x * ln10 + fit.intercept) / ln10;
            let _ = writeln!(
                s,
                r#"<line data-fit="{name}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="4 3"/>"#,
                sx(x0),
                sy(fy(x0)),
                sx(x1),
                sy(fy(x1))
            );
        }
        let slope = report.slope(name).map_or(String::from("n/a"), |v| format!("{v:.2}"));
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name} (slope {slope})</text>"#,
            pad + 10.0,
            pad + 18.0 * (i as f64 + 1.0)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Write `report.{csv,json,svg}` into `dir`.
pub fn emit_report(report: &ConvergenceReport, formats: &[ReportFormat], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        let path = match f {
            ReportFormat::Csv => {
                let p = dir.join("report.csv");
                write_report_csv(report, &p)?;
                p
            }
            ReportFormat::Json => {
                let p = dir.join("report.json");
                write_report_json(report, &p)?;
                p
            }
            ReportFormat::Svg => {
                let p = dir.join("report.svg");
                fs::write(&p, render_svg(report)).map_err(|e| Error::io(&p, e))?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}
