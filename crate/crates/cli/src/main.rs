use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use machlab::averaging::{forcing_sensitivity_experiment, BilinearODE, SensitivityConfig, SensitivityReport};
use machlab::harness::{emit_report, run_convergence_sweep, run_single, Prep, ReportFormat, RunConfig};
use machlab::leray::projection_survey;
use machlab::spectral::Geometry;

#[derive(Parser)]
#[command(name = "machlab", version, about = "Low-Mach limit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Epsilon sweep with rate fits; exits nonzero if a configured check fails.
    Sweep(RunArgs),
    /// Forcing-sensitivity demo for the bilinear ODE.
    DemoAveraging(DemoArgs),
    /// Projection identities on random fields.
    CheckProjections(ProjectionArgs),
    /// One compressible run at the first epsilon, with optional snapshots.
    SingleRun(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated epsilon values, descending.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    geometry: Option<Geometry>,
    /// `well` or `ill`.
    #[arg(long)]
    prep: Option<Prep>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, default_value = "csv,json,svg")]
    format: String,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
    eps: Vec<f64>,
    /// Also write `averaging.json` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectionArgs {
    /// Both geometries when absent.
    #[arg(long)]
    geometry: Option<Geometry>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 32)]
    n: usize,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p).with_context(|| format!("loading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(e) = &self.eps {
            cfg.eps = e.clone();
        }
        if let Some(g) = self.geometry {
            cfg.geometry = g;
        }
        if let Some(p) = self.prep {
            cfg.prep = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let formats = ReportFormat::parse_list(&args.format)?;
    let report = run_convergence_sweep(&cfg)?;
    println!(
        "geometry {}  prep {:?}  T = {:.5}  E0 = {:.5}",
        cfg.geometry, cfg.prep, report.metadata.t_final, report.metadata.e0
    );
    println!(
        "{:>8} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "eps", "valid", "|Pv-v~|", "|v-v~|", "|int v-v~|", "|th-th~|", "|<vQ>|H3", "time[s]"
    );
    for r in &report.rows {
        match &r.metrics {
            Some(m) => println!(
                "{:>8} {:>6} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.2}",
                r.eps, r.valid, m.leray_error, m.velocity_error, m.integrated_error, m.scalar_error, m.averaged_fast, r.runtime_s
            ),
            None => println!("{:>8} failed: {}", r.eps, r.error.as_deref().unwrap_or("")),
        }
    }
    for (name, fit) in &report.slopes {
        println!("slope {name:<24} {:>7.3}  (residual {:.2e})", fit.slope, fit.residual);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for c in &report.checks {
        let slope = c.slope.map_or("n/a".to_string(), |s| format!("{s:.3}"));
        println!(
            "check {:<24} slope {slope:>7} in [{}, {}]: {}",
            c.name,
            c.band.min.map_or("-inf".into(), |v| v.to_string()),
            c.band.max.map_or("inf".into(), |v| v.to_string()),
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    for p in emit_report(&report, &formats, &args.out)? {
        println!("wrote {}", p.display());
    }
    Ok(report.all_checks_pass())
}

fn single(args: &RunArgs) -> Result<bool> {
    let cfg = args.config()?;
    let eps = cfg.eps[0];
    let dir = args.out.join(format!("eps_{eps}"));
    let s = run_single(&cfg, eps, Some(&dir))?;
    println!("eps {eps}  T = {:.5}  steps {}  samples {}", s.t_final, s.steps, s.samples);
    println!("E0 = {:.5e}  Et0 = {:.5e}", s.e0, s.et0);
    println!("min(1 + eps rho) = {:.6}", s.min_total_density);
    println!("max |L(rho, v)|_H2 = {:.5e}", s.max_lin_op);
    println!("max |d_t(rho, v)|_H2 = {:.5e}", s.max_time_derivative);
    println!("final |(rho, v)|_H3 = {:.5e}  |div v| = {:.5e}", s.final_state_norm, s.final_divergence);
    println!("wrote {} snapshots to {}", s.snapshots.len(), dir.display());
    Ok(true)
}

fn print_sensitivity(label: &str, r: &SensitivityReport) {
    for row in &r.rows {
        println!(
            "{label:<10} eps {:>8}  sup|u1-u2| {:.4e}  sup|<df>| {:.4e}  bound {:.4e}",
            row.eps, row.sup_error, row.sup_average_forcing, row.bound
        );
    }
    match &r.fit {
        Some(f) => println!("{label:<10} slope {:.3}", f.slope),
        None => println!("{label:<10} slope n/a"),
    }
}

fn demo(args: &DemoArgs) -> Result<bool> {
    let system = BilinearODE::non_skew_example();
    let oscillating = forcing_sensitivity_experiment(&system, &args.eps, &SensitivityConfig::default())?;
    let control = forcing_sensitivity_experiment(
        &system,
        &args.eps,
        &SensitivityConfig {
            zero_frequency: true,
            ..SensitivityConfig::default()
        },
    )?;
    print_sensitivity("sin(t/e)", &oscillating);
    print_sensitivity("constant", &control);
    let ok = oscillating.fit.as_ref().is_some_and(|f| f.slope >= 0.9)
        && control.fit.as_ref().is_some_and(|f| f.slope.abs() <= 0.1);
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("averaging.json");
        let json = serde_json_pair(&oscillating, &control)?;
        std::fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(ok)
}

fn serde_json_pair(a: &SensitivityReport, b: &SensitivityReport) -> Result<String> {
    Ok(machlab::harness::to_json_pretty(&[a, b])?)
}

fn projections(args: &ProjectionArgs) -> Result<bool> {
    if args.samples == 0 {
        bail!("--samples must be positive");
    }
    let geometries = match args.geometry {
        Some(g) => vec![g],
        None => vec![Geometry::Torus2D, Geometry::Channel2D],
    };
    let mut ok = true;
    for g in geometries {
        let s = projection_survey(g, args.n, args.samples, args.n / 3, args.seed)?;
        println!("{g}: {} random fields on {}x{}", s.samples, args.n, args.n);
        for (name, v) in [
            ("idempotence", s.idempotence),
            ("orthogonality", s.orthogonality),
            ("curl preservation", s.curl_defect),
            ("divergence", s.divergence),
            ("gradient annihilation", s.gradient_annihilation),
            ("decoupling", s.decoupling),
        ] {
            println!("  {name:<22} {v:.3e}");
        }
        ok &= s.max() <= 1e-10;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Sweep(a) => sweep(a),
        Command::DemoAveraging(a) => demo(a),
        Command::CheckProjections(a) => projections(a),
        Command::SingleRun(a) => single(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
