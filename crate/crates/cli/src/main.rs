mod config;
mod error;
mod manifest;
mod portrait;
mod simulate;
mod thd;
mod validate;

use std::f64::consts::TAU;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lcmpc_core::analysis::{DEFAULT_THD_ORDER, VOLTAGE_THD_LIMIT};
use lcmpc_core::simulator::{Bootstrap, Mode};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "lcmpc", version = manifest::VERSION, about = "Limit-cycle MPC for harmonic compensation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Compensated,
    Uncompensated,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum BootstrapArg {
    Oracle,
    Zero,
}

#[derive(Subcommand)]
enum Command {
    /// Run the grid scenario with and/or without compensation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        mode: ModeArg,
        /// Overrides the disturbance assumed before the first measured period.
        #[arg(long, value_enum)]
        bootstrap: Option<BootstrapArg>,
    },
    /// Phase portraits of the normal forms, or of a simulation log.
    PhasePortrait {
        #[arg(long)]
        out: PathBuf,
        /// Plot the normal-form states `xt1, xt2` of a samples CSV instead.
        #[arg(long, conflicts_with = "hopf")]
        log: Option<PathBuf>,
        /// Continuous Hopf field instead of the discrete map.
        #[arg(long)]
        hopf: bool,
        /// Map default 0.05; Hopf default 1.
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
        /// Map default −0.05; Hopf default 1.
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
        /// Map default 2π·50 rad/s; Hopf default 1.
        #[arg(long)]
        omega: Option<f64>,
        /// Map sampling time (default 0.2 ms), or RK4 step with `--hopf`
        /// (default 0.01).
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
    },
    /// Run built-in consistency checks.
    Validate {
        #[arg(value_enum)]
        suite: validate::Suite,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// THD of the last fundamental period of CSV columns.
    Thd {
        csv: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "v_c,i_l")]
        columns: Vec<String>,
        #[arg(long, default_value_t = 50.0)]
        f: f64,
        /// Sampling time; inferred from the `t` column when omitted.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_THD_ORDER)]
        max_order: usize,
        #[arg(long, default_value_t = VOLTAGE_THD_LIMIT)]
        vc_limit: f64,
    },
}

fn dispatch(cmd: Command) -> Result<ExitCode, CliError> {
    match cmd {
        Command::Simulate {
            config,
            out,
            mode,
            bootstrap,
        } => {
            let modes: &[Mode] = match mode {
                ModeArg::Compensated => &[Mode::Compensated],
                ModeArg::Uncompensated => &[Mode::Uncompensated],
                ModeArg::Both => &[Mode::Uncompensated, Mode::Compensated],
            };
            let bootstrap = bootstrap.map(|b| match b {
                BootstrapArg::Oracle => Bootstrap::Oracle,
                BootstrapArg::Zero => Bootstrap::Zero,
            });
            simulate::run(&config, &out, modes, bootstrap)
        }
        Command::PhasePortrait {
            out,
            log,
            hopf,
            mu,
            alpha,
            omega,
            tau,
            steps,
        } => {
            let source = match (&log, hopf) {
                (Some(path), _) => portrait::Source::Log(path),
                (None, true) => portrait::Source::Hopf {
                    mu_c: mu.unwrap_or(1.0),
                    alpha_c: alpha.unwrap_or(1.0),
                    omega: omega.unwrap_or(1.0),
                    dt: tau.unwrap_or(0.01),
                    steps,
                },
                (None, false) => portrait::Source::Map {
                    mu: mu.unwrap_or(0.05),
                    alpha: alpha.unwrap_or(-0.05),
                    omega: omega.unwrap_or(TAU * 50.0),
                    tau: tau.unwrap_or(0.0002),
                    steps,
                },
            };
            portrait::run(source, &out)
        }
        Command::Validate { suite, seed } => {
            let checks = validate::run_suite(suite, seed);
            for c in &checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Thd {
            csv,
            columns,
            f,
            tau,
            max_order,
            vc_limit,
        } => thd::run(&thd::ThdArgs {
            csv: &csv,
            columns: &columns,
            f,
            tau,
            max_order,
            vc_limit,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
