mod commands;
mod error;
mod export;

use clap::{Args, Parser, Subcommand};
use commands::{MlTable, Overrides};
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

/// Terminal control synthesis for Caputo fractional systems.
///
/// Exit codes: 0 ok, 2 not controllable, 3 input error, 4 no convergence or
/// failed verification, 5 I/O error.
#[derive(Parser, Debug)]
#[command(name = "fracctl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Problem specification (JSON).
    spec: PathBuf,
    #[arg(long)]
    n_steps: Option<usize>,
    #[arg(long)]
    fp_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { n_steps: self.n_steps, fp_tol: self.fp_tol, max_iter: self.max_iter, damping: self.damping, seed: self.seed }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimum-energy control of the system with f frozen at f(0).
    Linear(Common),
    /// Fixed-point synthesis for the nonlinear system.
    Nonlinear(Common),
    /// Re-simulate the control stored in --out-dir by the nonlinear command.
    Verify(Common),
    /// Tabulate E_{α,β}(x) on a uniform grid.
    TabulateMl {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long, default_value_t = -5.0, allow_hyphen_values = true)]
        from: f64,
        #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
        to: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Linear(c) => {
            let spec = commands::load_problem(&c.spec, &c.overrides())?;
            let r = commands::run_linear(&spec, &c.out_dir)?;
            println!(
                "linear: |y(T) - y_T| = {:.3e}, ||u|| = {:.6}, lambda_min(W) = {:.3e}",
                r.terminal_error, r.control_l2_norm, r.gramian.min_eigenvalue
            );
        }
        Command::Nonlinear(c) => {
            let spec = commands::load_problem(&c.spec, &c.overrides())?;
            let r = commands::run_nonlinear(&spec, &c.out_dir)?;
            println!(
                "nonlinear: converged after {} iterations, |y(T) - y_T| = {:.3e}, audits {}",
                r.iterations.len(),
                r.terminal_error,
                if r.audits_pass { "pass" } else { "FAIL" }
            );
        }
        Command::Verify(c) => {
            let spec = commands::load_problem(&c.spec, &c.overrides())?;
            let r = commands::run_verify(&spec, &c.out_dir)?;
            println!(
                "verify: |y(T) - y_T| = {:.3e} against reported {:.3e} (ratio {:.2})",
                r.verify_terminal_error, r.report_terminal_error, r.ratio
            );
        }
        Command::TabulateMl { alpha, beta, from, to, points, out_dir } => {
            let path = commands::run_tabulate(&MlTable { alpha, beta, from, to, points }, &out_dir)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 3 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
