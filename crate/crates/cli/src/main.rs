//! `latticediff`: command-line front end.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 1 for
//! numerical failures. Errors are reported as JSON on stderr.

mod commands;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] latticediff::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if !e.is_config_error() => 1,
            _ => 2,
        }
    }

    fn report(&self) -> serde_json::Value {
        match self {
            CliError::Core(e) => {
                let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
                if let latticediff::Error::InvalidModel { failures } = e {
                    body["failures"] = json!(failures);
                }
                json!({ "error": body })
            }
            CliError::Usage(m) => json!({ "error": { "kind": "usage", "message": m } }),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "latticediff",
    version,
    about = "Diffusion of a lattice particle coupled to a thermal boson bath"
)]
struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, env = "LATTICEDIFF_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the model's standing assumptions.
    Validate(ValidateArgs),
    /// Correlation function ψ(x,t) on a time grid, with optional decay checks.
    Psi(PsiArgs),
    /// Jump rates, escape rates and Lamb shifts.
    Rates(RatesArgs),
    /// Perron eigenvalue f(p) and spectral gap along a ray in p.
    Spectrum(SpectrumArgs),
    /// Diffusion tensor by finite differences, by the perturbative formula and by KMC.
    Diffusion(DiffusionArgs),
    /// Kinetic Monte Carlo ensemble.
    Simulate(SimulateArgs),
    /// Pairing diagrams: enumeration and integral bounds.
    Diagrams(DiagramsArgs),
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct PsiArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Lattice point, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, default_value_t = 100.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub tmin: f64,
    #[arg(long, default_value_t = 0.25)]
    pub dt: f64,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Write decay-law checks (power law, subluminal cone, integrability) here.
    #[arg(long)]
    pub decay: Option<std::path::PathBuf>,
    /// Cone speed for the subluminal fit.
    #[arg(long, default_value_t = 0.5)]
    pub v_star: f64,
}

#[derive(Args, Debug)]
pub struct RatesArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Write the p = 0 population block as CSV (row, col, re, im).
    #[arg(long)]
    pub dump_matrix: Option<std::path::PathBuf>,
}

#[derive(Args, Debug)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub pmax: f64,
    #[arg(long, default_value_t = 32)]
    pub steps: usize,
    /// Axis of the ray in p.
    #[arg(long, default_value_t = 0)]
    pub axis: usize,
    /// Skip the full spectra (no gap column).
    #[arg(long)]
    pub no_gap: bool,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug)]
pub struct DiffusionArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Finite-difference step of the Hessian.
    #[arg(long, default_value_t = 0.05)]
    pub h: f64,
    /// Trajectories for the KMC estimate; 0 disables it.
    #[arg(long, default_value_t = 20_000)]
    pub kmc_traj: usize,
    /// KMC horizon; defaults to 200 relaxation times.
    #[arg(long)]
    pub kmc_tfinal: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: std::path::PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: std::path::PathBuf,
    #[arg(long, default_value_t = 100_000)]
    pub traj: usize,
    #[arg(long, default_value_t = 200.0)]
    pub tfinal: f64,
    /// CGF probe momentum, comma separated; repeatable.
    #[arg(long, allow_hyphen_values = true)]
    pub probe: Vec<String>,
    /// Intermediate observation times for the CGF slope; repeatable.
    #[arg(long)]
    pub checkpoint: Vec<f64>,
    #[arg(long, default_value_t = 32)]
    pub k_bins: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Jump-by-jump paths of the first trajectories as CSV.
    #[arg(long)]
    pub dump_paths: Option<std::path::PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub paths_traj: usize,
    #[arg(long, default_value_t = 10_000)]
    pub paths_events: usize,
}

#[derive(Args, Debug)]
pub struct DiagramsArgs {
    /// Pair count for `--list`.
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    /// Print every pairing shape with its class.
    #[arg(long)]
    pub list: bool,
    /// Monte Carlo check of the irreducible-class bounds.
    #[arg(long)]
    pub check_bounds: bool,
    /// Monte Carlo integral over all diagrams in [0, t].
    #[arg(long)]
    pub unconstrained: bool,
    /// Pair kernel, `c*exp(-l*t)`.
    #[arg(long, default_value = "0.05*exp(-t)")]
    pub k: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, default_value_t = 5.0)]
    pub t: f64,
    #[arg(long, default_value_t = 4)]
    pub n_max: usize,
    /// Monte Carlo samples per pair count; accepts `1e6`.
    #[arg(long, default_value = "1e6")]
    pub samples: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

fn run(cli: Cli, argv: &[String]) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Validate(a) => commands::validate(&a, argv),
        Command::Psi(a) => commands::psi(&a, argv),
        Command::Rates(a) => commands::rates(&a, argv),
        Command::Spectrum(a) => commands::spectrum(&a, argv),
        Command::Diffusion(a) => commands::diffusion(&a, argv),
        Command::Simulate(a) => commands::simulate(&a, argv),
        Command::Diagrams(a) => commands::diagrams(&a, argv),
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.report());
            return ExitCode::from(err.exit_code());
        }
    };
    match run(cli, &argv[1..]) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code())
        }
    }
}
