use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use herdopt_cli::commands::{
    cmd_estimate, cmd_merton, cmd_opinion, cmd_simulate, cmd_solve, cmd_sweep, cmd_verify,
    SweepDoc, VerifyOptions,
};
use herdopt_cli::config::RunConfig;
use herdopt_cli::CliError;

/// Analytical solution and validation tooling for dual-agent optimal
/// investment with herd behaviour.
#[derive(Parser)]
#[command(name = "herdopt", version, about)]
struct Cli {
    /// Run configuration document (JSON)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory for emitted CSV/JSON files
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Seed for stochastic commands
    #[arg(long, global = true, value_name = "N", default_value_t = 42)]
    seed: u64,

    /// Override the time-grid resolution (even, >= 10)
    #[arg(long, global = true, value_name = "N")]
    grid_n: Option<usize>,

    /// Override the eta solver tolerance
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate GBM market parameters from a date,close price CSV
    Estimate {
        /// Price CSV (header `date,close`, ISO-8601 dates)
        csv: PathBuf,
        /// Risk-free rate to pair with the estimates
        #[arg(long, value_name = "R")]
        risk_free: f64,
        /// Year fraction per price step
        #[arg(long, value_name = "F", default_value_t = 1.0 / 252.0)]
        dt: f64,
    },
    /// Solve for the optimal decision, its decomposition, and the opinion
    Solve,
    /// Standalone Merton baseline for both agents (the theta = 0 case)
    Merton,
    /// Opinion dynamics: backward ODE integration vs the closed form
    Opinion,
    /// Euler-Maruyama Monte Carlo validation of the optimal decision
    Simulate {
        /// Number of simulated wealth paths
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Time steps per path
        #[arg(long, default_value_t = 1000)]
        steps: usize,
    },
    /// Run the full verification bundle (variational, oracle, ODE, MC)
    Verify {
        /// Number of perturbation directions for the first-variation check
        #[arg(long, default_value_t = 100)]
        directions: usize,
        /// Grid resolution of the brute-force oracle
        #[arg(long, default_value_t = 50)]
        coarse_n: usize,
        /// Monte Carlo paths for the 3-sigma utility check
        #[arg(long, default_value_t = 50_000)]
        mc_paths: usize,
        /// Replace the solved eta with eta_lower * SCALE (test hook)
        #[arg(long, hide = true, value_name = "SCALE")]
        inject_eta_scale: Option<f64>,
    },
    /// Parameter sweep from a sweep specification document
    Sweep {
        /// Sweep specification (JSON with base config, parameter, values)
        spec: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| {
        CliError::Validation("this command needs --config PATH".into())
    })?;
    RunConfig::load(path)
}

fn out_dir(cli: &Cli, config: Option<&RunConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.and_then(|c| c.out.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Estimate { csv, risk_free, dt } => {
            cmd_estimate(csv, *risk_free, *dt, &out_dir(cli, None))?;
        }
        Command::Solve => {
            let config = load_config(cli)?;
            let problem = config.to_problem(cli.grid_n, cli.tol)?;
            cmd_solve(&problem, &out_dir(cli, Some(&config)))?;
        }
        Command::Merton => {
            let config = load_config(cli)?;
            let problem = config.to_problem(cli.grid_n, cli.tol)?;
            cmd_merton(&problem, &out_dir(cli, Some(&config)))?;
        }
        Command::Opinion => {
            let config = load_config(cli)?;
            let problem = config.to_problem(cli.grid_n, cli.tol)?;
            cmd_opinion(&problem, &out_dir(cli, Some(&config)))?;
        }
        Command::Simulate { paths, steps } => {
            let config = load_config(cli)?;
            let problem = config.to_problem(cli.grid_n, cli.tol)?;
            cmd_simulate(&problem, *paths, *steps, cli.seed, &out_dir(cli, Some(&config)))?;
        }
        Command::Verify {
            directions,
            coarse_n,
            mc_paths,
            inject_eta_scale,
        } => {
            let config = load_config(cli)?;
            let problem = config.to_problem(cli.grid_n, cli.tol)?;
            let options = VerifyOptions {
                directions: *directions,
                coarse_n: *coarse_n,
                mc_paths: *mc_paths,
                seed: cli.seed,
                inject_eta_scale: *inject_eta_scale,
            };
            let report = cmd_verify(&problem, &options, &out_dir(cli, Some(&config)))?;
            if !report.all_pass {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.pass)
                    .map(|c| c.name)
                    .collect();
                return Err(CliError::Verification(failed.join(", ")));
            }
        }
        Command::Sweep { spec } => {
            let doc = SweepDoc::load(spec)?;
            let dir = cli
                .out
                .clone()
                .or_else(|| doc.base.out.clone())
                .unwrap_or_else(|| PathBuf::from("."));
            cmd_sweep(&doc, cli.grid_n, cli.tol, &dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("herdopt: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
