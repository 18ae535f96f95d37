//! `cran`: parameter sweeps, the headline optimization comparison and the
//! property-check suite.
//!
//! Exit status is 0 on success, 1 on usage or runtime errors and 2 when a
//! headline or validation check fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cran_core::experiment::{
    reproduce_headline, run_sweep, validate, write_csv, write_csv_file, OptimizerSettings, RunOptions, SweepSpec,
    ValidateOptions, HEADLINE_MIN_GAIN_PERCENT, ORACLE_TOLERANCE,
};
use cran_core::sysmodel::SystemConfig;

#[derive(Parser)]
#[command(name = "cran", version, about = "Two-layer massive-MIMO C-RAN uplink experiments")]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true, env = "CRAN_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OptimizerArgs {
    /// Optimizer population size.
    #[arg(long, default_value_t = 40)]
    population: usize,
    /// Optimizer generations per run.
    #[arg(long, default_value_t = 300)]
    generations: usize,
    /// Independent optimizer runs per point; the best is kept.
    #[arg(long, default_value_t = 4)]
    restarts: usize,
}

impl OptimizerArgs {
    fn settings(&self) -> OptimizerSettings {
        OptimizerSettings { population: self.population, generations: self.generations, restarts: self.restarts }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sweep one parameter and write a CSV of sum-rates.
    Sweep {
        /// Key-value configuration file; absent keys keep their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// One of M, N, K, R, rho, k_rice_db.
        #[arg(long)]
        param: String,
        /// Ascending comma-separated values.
        #[arg(long)]
        values: String,
        /// Subset of closed_nonopt, closed_opt, mc_nonopt, mc_opt.
        #[arg(long, default_value = "closed_nonopt,closed_opt")]
        modes: String,
        #[arg(long, default_value = "0")]
        seeds: String,
        /// Monte-Carlo realizations per point.
        #[arg(long, default_value_t = 400)]
        realizations: usize,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Record wall time per row (makes files non-reproducible).
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Optimized versus all-0.5 sum-rate at the configured deployment.
    Headline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Topology and optimizer seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        optimizer: OptimizerArgs,
    },
    /// Run the property suite and print a pass/fail table.
    Validate {
        /// Fewer trials and realizations.
        #[arg(long)]
        quick: bool,
        /// Relative tolerance of the closed-form versus oracle check.
        #[arg(long, default_value_t = ORACLE_TOLERANCE)]
        oracle_tolerance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<SystemConfig, String> {
    match path {
        None => Ok(SystemConfig::default()),
        Some(p) => SystemConfig::from_file(p).map_err(|e| format!("cannot load config {}: {e}", p.display())),
    }
}

/// Success flag of the command, or an error message.
fn run(cli: Cli) -> Result<bool, String> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())?;
    }
    match cli.command {
        Command::Sweep { config, param, values, modes, seeds, realizations, out, timing, optimizer } => {
            let cfg = load_config(&config)?;
            let spec = SweepSpec::parse(&param, &values, &modes, &seeds, realizations).map_err(|e| e.to_string())?;
            let opts = RunOptions { optimizer: optimizer.settings(), timing };
            let rows = run_sweep(&cfg, &spec, &opts).map_err(|e| e.to_string())?;
            match out {
                Some(path) => write_csv_file(&rows, &path).map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => write_csv(&rows, std::io::stdout().lock()).map_err(|e| e.to_string())?,
            }
            Ok(true)
        }
        Command::Headline { config, seed, optimizer } => {
            let cfg = load_config(&config)?;
            let report = reproduce_headline(&cfg, seed, &optimizer.settings()).map_err(|e| e.to_string())?;
            println!("baseline sum-rate (eta = 0.5): {:.4} bps/Hz", report.baseline);
            println!("optimized sum-rate:            {:.4} bps/Hz", report.optimized);
            println!("gain:                          {:.2}%", report.gain_percent);
            let genes: Vec<String> = report.eta.to_genes().iter().map(|g| format!("{g:.4}")).collect();
            println!("eta (access then fronthaul):   {}", genes.join(" "));
            if !report.passed() {
                eprintln!("gain below {HEADLINE_MIN_GAIN_PERCENT}%");
            }
            Ok(report.passed())
        }
        Command::Validate { quick, oracle_tolerance, seed } => {
            let checks = validate(&ValidateOptions { quick, oracle_tolerance, seed }).map_err(|e| e.to_string())?;
            let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
            for c in &checks {
                let verdict = if c.passed { "PASS" } else { "FAIL" };
                println!("{verdict}  {:width$}  {}", c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(msg) => {
            eprintln!("error: {msg}");
            eprintln!("run `cran --help` for usage");
            ExitCode::from(1)
        }
    }
}
