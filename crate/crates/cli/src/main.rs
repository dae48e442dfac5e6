//! `rbk`: simulate the truncated cluster-eating system, verify runs against
//! moment identities and closed forms, and export scaling and convergence data.
//!
//! Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 integrator failure.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rbk_core::diagnostics::{
    run_suite, scaling_diagnostics, truncation_convergence, DiagnosticsError, Suite, SuiteOptions,
};
use rbk_core::{
    grid, integrate, GrowthClass, InitialCondition, IntegratorConfig, IntegratorError, IntegratorStats, Kernel,
    RhsPath, Trajectory,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rbk", version, about = "Cluster-eating coagulation kinetics in exact finite truncation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate and write trajectory.csv, moments.csv and metadata.json.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Output grid: "t0,t1,count[,log]" or "@file".
        #[arg(long, default_value = "0,10,101")]
        grid: String,
    },
    /// Integrate, run a diagnostic suite and write report.json.
    Verify {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "0,10,101")]
        grid: String,
        /// moments, support, oracles or all.
        #[arg(long, default_value = "all")]
        suite: Suite,
        /// Positivity threshold for the support check.
        #[arg(long, default_value_t = rbk_core::diagnostics::DEFAULT_SUPPORT_THRESHOLD)]
        threshold: f64,
    },
    /// Write scaling.csv with t*nu, t*nu_odd and t*c_j for a constant kernel.
    Scaling {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "1e-3,1e3,61,log")]
        grid: String,
        /// Largest cluster size tabulated.
        #[arg(long, default_value_t = 5)]
        jmax: usize,
    },
    /// Compare runs over a ladder of truncation sizes and write convergence.csv.
    Convergence {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "0,10,11")]
        grid: String,
        /// Strictly increasing truncation sizes, e.g. 32,64,128.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// "const:K", "product:K,beta" or "expr:<expression in j, k>".
    #[arg(long)]
    kernel: String,
    /// "mono:p,lambda", "geom:A0,alpha" or "explicit:<csv path>".
    #[arg(long)]
    ic: String,
    #[arg(long, default_value_t = 1e-8)]
    rel_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    abs_tol: f64,
    /// naive, fast or auto.
    #[arg(long, default_value = "auto")]
    rhs: RhsPath,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Truncation size; defaults to the largest initial index for compactly supported data.
    #[arg(long)]
    n: Option<usize>,
}

enum Failure {
    ChecksFailed,
    Config(String),
    Integrator(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::ChecksFailed => 1,
            Failure::Config(_) => 2,
            Failure::Integrator(_) => 3,
        }
    }
}

impl From<IntegratorError> for Failure {
    fn from(e: IntegratorError) -> Self {
        match e {
            IntegratorError::StepSizeUnderflow { .. } => Failure::Integrator(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for Failure {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Integrator(e) => e.into(),
            e => Failure::Config(e.to_string()),
        }
    }
}

fn config<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Config(e.to_string())
}

struct Setup {
    kernel: Kernel,
    ic: InitialCondition,
    grid: Vec<f64>,
    cfg: IntegratorConfig,
}

fn setup(common: &CommonArgs, grid_spec: &str, validation_grid: usize) -> Result<Setup, Failure> {
    let kernel = Kernel::from_spec(&common.kernel, validation_grid.max(64)).map_err(config)?;
    let ic = InitialCondition::from_spec(&common.ic).map_err(config)?;
    let grid = grid::parse(grid_spec).map_err(config)?;
    rbk_core::validate_grid(&grid).map_err(config)?;
    let cfg = IntegratorConfig {
        rel_tol: common.rel_tol,
        abs_tol: common.abs_tol,
        rhs_path: common.rhs,
        ..IntegratorConfig::default()
    };
    cfg.validate().map_err(config)?;
    Ok(Setup { kernel, ic, grid, cfg })
}

fn truncation(run: &RunArgs) -> Result<usize, Failure> {
    let n = match run.n {
        Some(n) => n,
        None => {
            // Peek at the data before the kernel is built, since validation depends on n.
            let ic = InitialCondition::from_spec(&run.common.ic).map_err(config)?;
            ic.max_index()
                .ok_or_else(|| Failure::Config(format!("--n is required for initial condition {ic}")))?
        }
    };
    if n == 0 {
        return Err(Failure::Config("--n must be >= 1".into()));
    }
    Ok(n)
}

fn simulate_run(run: &RunArgs, grid_spec: &str) -> Result<(Setup, Trajectory), Failure> {
    let n = truncation(run)?;
    let s = setup(&run.common, grid_spec, n)?;
    let traj = integrate(&s.kernel, &s.ic, n, &s.grid, &s.cfg)?;
    Ok((s, traj))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    output::write(dir, name, contents)
        .map_err(|e| Failure::Config(format!("cannot write {}: {e}", dir.join(name).display())))
}

#[derive(Serialize)]
struct Metadata<'a> {
    kernel: String,
    growth_class: GrowthClass,
    initial_condition: String,
    n: usize,
    grid_points: usize,
    t_start: f64,
    t_end: f64,
    /// Mass and number of geometric data beyond the truncation.
    truncated_mass: Option<f64>,
    truncated_number: Option<f64>,
    rhs: &'static str,
    rel_tol: f64,
    abs_tol: f64,
    stats: &'a IntegratorStats,
}

fn metadata(s: &Setup, traj: &Trajectory) -> String {
    let n = traj.n();
    let geometric = matches!(s.ic, InitialCondition::Geometric { .. });
    output::json(&Metadata {
        kernel: s.kernel.spec(),
        growth_class: s.kernel.classify_growth(n.max(64)),
        initial_condition: s.ic.to_string(),
        n,
        grid_points: traj.states.len(),
        t_start: traj.first().t,
        t_end: traj.last().t,
        truncated_mass: geometric.then(|| s.ic.truncated_mass(n)),
        truncated_number: geometric.then(|| s.ic.truncated_number(n)),
        rhs: if traj.fast_rhs { "fast" } else { "naive" },
        rel_tol: s.cfg.rel_tol,
        abs_tol: s.cfg.abs_tol,
        stats: &traj.stats,
    })
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { run, grid } => {
            let (s, traj) = simulate_run(&run, &grid)?;
            let dir = &run.common.out_dir;
            write(dir, "trajectory.csv", &output::trajectory_csv(&traj))?;
            write(dir, "moments.csv", &output::moments_csv(&traj))?;
            write(dir, "metadata.json", &metadata(&s, &traj))?;
            println!(
                "simulated N = {} to t = {} ({} steps accepted); wrote {}",
                traj.n(),
                traj.last().t,
                traj.stats.accepted_steps,
                dir.display()
            );
            Ok(())
        }
        Command::Verify {
            run,
            grid,
            suite,
            threshold,
        } => {
            if !(threshold >= 0.0 && threshold.is_finite()) {
                return Err(Failure::Config(format!("--threshold must be finite and >= 0, got {threshold}")));
            }
            let (_, traj) = simulate_run(&run, &grid)?;
            let opts = SuiteOptions {
                support_threshold: threshold,
                ..SuiteOptions::default()
            };
            let reports = run_suite(&traj, suite, &opts);
            write(&run.common.out_dir, "report.json", &output::json(&reports))?;
            for r in &reports {
                println!("{r}");
            }
            if reports.iter().all(|r| r.pass || r.skipped) {
                Ok(())
            } else {
                Err(Failure::ChecksFailed)
            }
        }
        Command::Scaling { run, grid, jmax } => {
            let kernel = Kernel::from_spec(&run.common.kernel, 64).map_err(config)?;
            if kernel.constant_value().is_none() {
                return Err(Failure::Config(format!(
                    "scaling diagnostics require a constant kernel, got {}",
                    kernel.spec()
                )));
            }
            let (_, traj) = simulate_run(&run, &grid)?;
            let rows = scaling_diagnostics(&traj, jmax)?;
            write(&run.common.out_dir, "scaling.csv", &output::scaling_csv(&rows, jmax))?;
            if let Some(last) = rows.last() {
                println!("t = {}: t*nu = {}, t*nu_odd = {}", last.t, last.t_nu, last.t_nu_odd);
            }
            Ok(())
        }
        Command::Convergence { common, grid, sizes } => {
            let largest = sizes.iter().copied().max().unwrap_or(0);
            let s = setup(&common, &grid, largest)?;
            let res = truncation_convergence(&s.kernel, &s.ic, &sizes, &s.grid, &s.cfg)?;
            write(&common.out_dir, "convergence.csv", &output::convergence_csv(&res.sizes, &res.distances))?;
            for (n, d) in res.sizes.iter().zip(&res.distances) {
                println!("D({n}) = {}", output::num(*d));
            }
            if res.report.pass {
                Ok(())
            } else {
                println!("{}", res.report);
                Err(Failure::ChecksFailed)
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::ChecksFailed => eprintln!("one or more checks failed"),
                Failure::Config(msg) => eprintln!("configuration error: {msg}"),
                Failure::Integrator(msg) => eprintln!("integrator failure: {msg}"),
            }
            ExitCode::from(f.code())
        }
    }
}
