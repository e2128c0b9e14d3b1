//! Command-line front end over the simulation drivers.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 verification
//! failure (a check or comparison ran fine but found residuals above its
//! bound), 3 runtime error (domain exit, degenerate geometry, stiffness).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bundlemech::driver::{self, PartialConfig, SimConfig};
use bundlemech::CoreError;

#[derive(Parser)]
#[command(
    name = "bundlemech",
    version,
    about = "Reduced mechanics on principal bundles: simulate, verify, cross-validate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the verification sweep (geometry identities, derivative
    /// cross-checks, metric positivity) at seeded random points and emit a
    /// JSON report.
    Check(JobArgs),
    /// Integrate the reduced equations of motion and emit the trajectory.
    Simulate(JobArgs),
    /// Integrate reduced and full equations from the same initial data and
    /// report the worst gaps after projecting the full run back.
    Compare(JobArgs),
}

#[derive(Args)]
struct JobArgs {
    /// Built-in model name (abelian_disk, so3_coupled).
    #[arg(long)]
    model: Option<String>,
    /// TOML configuration file; command-line flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Final integration time.
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Output grid spacing (also the RK4 step).
    #[arg(long)]
    dt: Option<f64>,
    /// Mode tolerance: identity residual bound for `check`, adaptive local
    /// error for `simulate`, comparison bound for `compare`.
    #[arg(long)]
    tol: Option<f64>,
    /// Integrator: rk4 or rkf45.
    #[arg(long)]
    integrator: Option<String>,
    /// Seed for the check-point sampler.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled check points.
    #[arg(long)]
    samples: Option<usize>,
    /// Output file; results go to stdout when omitted.
    #[arg(long)]
    output: Option<String>,
    /// Trajectory format: csv or json.
    #[arg(long)]
    format: Option<String>,
}

enum Mode {
    Check,
    Simulate,
    Compare,
}

impl JobArgs {
    fn resolve(self, mode: Mode) -> Result<SimConfig, CoreError> {
        let file = match &self.config {
            Some(path) => PartialConfig::from_toml_file(path)?,
            None => PartialConfig::default(),
        };
        let mut flags = PartialConfig {
            model: self.model,
            dt: self.dt,
            t_final: self.t_final,
            integrator: self.integrator,
            seed: self.seed,
            samples: self.samples,
            output: self.output,
            format: self.format,
            ..Default::default()
        };
        match mode {
            Mode::Check => flags.check_tol = self.tol,
            Mode::Simulate => flags.tol = self.tol,
            Mode::Compare => flags.compare_tol = self.tol,
        }
        flags.or(file).resolve()
    }
}

/// Runs one job; `Ok(false)` means the job completed but its verdict is a
/// failure (exit 2).
fn run(command: Command) -> Result<bool, CoreError> {
    match command {
        Command::Check(args) => {
            let cfg = args.resolve(Mode::Check)?;
            let report = driver::run_check(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", report.to_json());
            } else {
                println!(
                    "check {}: {} entries over {} points, verdict {}",
                    report.model,
                    report.entries.len(),
                    report.samples,
                    if report.pass { "pass" } else { "FAIL" }
                );
            }
            Ok(report.pass)
        }
        Command::Simulate(args) => {
            let cfg = args.resolve(Mode::Simulate)?;
            let traj = driver::run_simulate(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", traj.render(cfg.format));
            } else {
                println!(
                    "simulate {}: {} rows to t = {}{}",
                    traj.model,
                    traj.times.len(),
                    traj.times.last().unwrap_or(&0.0),
                    match &traj.truncated {
                        Some(r) => format!(" (truncated: {r})"),
                        None => String::new(),
                    }
                );
            }
            Ok(true)
        }
        Command::Compare(args) => {
            let cfg = args.resolve(Mode::Compare)?;
            let report = driver::run_compare(&cfg)?;
            if cfg.output.is_none() {
                print!("{}", report.to_json());
            } else {
                println!(
                    "compare {}: max |Δx| = {:.3e}, |Δf| = {:.3e}, |ΔE| = {:.3e} over {} rows, \
                     bound {:.1e}, verdict {}",
                    report.model,
                    report.max_dx,
                    report.max_df,
                    report.max_de,
                    report.rows_compared,
                    report.bound,
                    if report.pass { "pass" } else { "FAIL" }
                );
            }
            Ok(report.pass)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are successes; everything else is usage.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                CoreError::Config(_) | CoreError::Parse(_) | CoreError::Shape(_) => 1,
                CoreError::CheckFailed(_) => 2,
                CoreError::Domain(_)
                | CoreError::Degenerate(_)
                | CoreError::NoConvergence(_)
                | CoreError::Stiffness(_) => 3,
            };
            ExitCode::from(code)
        }
    }
}
