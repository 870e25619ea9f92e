//! Command-line front end for `lamelab-core`: subcommands, configuration
//! files, JSON/CSV output and exit codes (0 success, 1 check failed,
//! 2 usage or input error).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lamelab_core::LabError;

pub mod commands;
pub mod config;
pub mod output;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, files or parameters.
    Usage(String),
    /// A numerical check or solver failed.
    Check(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Check(_) => EXIT_CHECK_FAILED,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Check(m) => f.write_str(m),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::NoConvergence { .. } | LabError::BracketFailure(_) | LabError::ToleranceExceeded { .. } => {
                CliError::Check(e.to_string())
            }
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Resolution {
    Default,
    Refined,
}

#[derive(Debug, Parser)]
#[command(
    name = "lamelab",
    version,
    about = "Weighted positivity, capacity and regularity experiments for the Lamé system"
)]
pub struct Cli {
    /// key = value file; flags on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Write the result here (atomically) instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roots bounding the positivity window and the necessary condition.
    Region(RegionArgs),
    /// Identity residuals and coercivity ratios for seeded test fields.
    Form(FormArgs),
    /// Harmonic capacity of a voxel set or a voxelized ball.
    Capacity(CapacityArgs),
    /// Dirichlet solve, decay profile and Wiener fit near the origin.
    Probe(ProbeArgs),
    /// Write an analytic test domain as a voxdom v1 file.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct RegionArgs {
    /// Bracket width for the roots.
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FormArgs {
    /// One value or a comma-separated list.
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Number of seeded fields (seeds 0..n).
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long, value_enum)]
    pub resolution: Option<Resolution>,
    /// Add the coercivity ratio and its lower bound.
    #[arg(long)]
    pub coercivity: bool,
    /// Relative identity tolerance.
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CapacityArgs {
    /// voxdom v1 file; the set K is its '1' voxels.
    pub voxfile: Option<PathBuf>,
    /// Use the voxelized closed ball of this radius instead of a file.
    #[arg(long, allow_hyphen_values = true)]
    pub ball: Option<f64>,
    /// Voxel size for --ball, e.g. 1/64.
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
    /// Take K as the '0' voxels of the file (the complement of the domain).
    #[arg(long)]
    pub complement: bool,
    /// Also solve with the constraint f >= 1 on K and compare.
    #[arg(long)]
    pub equivalence: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// voxdom v1 file with '1' marking the domain.
    pub voxfile: Option<PathBuf>,
    /// half-space, cone, spike or point, sampled on [-1, 1]³.
    #[arg(long)]
    pub fixture: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// Number of halvings below the outer radius.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Outer radius R of the dyadic levels.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Voxel size for --fixture.
    #[arg(long)]
    pub h: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    pub name: String,
    #[arg(long)]
    pub h: Option<String>,
    /// Half-width of the sampled cube.
    #[arg(long)]
    pub extent: Option<f64>,
}

/// Rendered command output and whether its checks passed.
#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub passed: bool,
}

/// Runs a parsed command, honouring `LAMELAB_THREADS`.
pub fn execute(cli: &Cli) -> Result<Rendered, CliError> {
    match std::env::var("LAMELAB_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Usage(format!("LAMELAB_THREADS must be a positive integer, got '{v}'")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            pool.install(|| commands::dispatch(cli))
        }
        Err(_) => commands::dispatch(cli),
    }
}

/// Parses arguments, runs, writes output and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(r) => {
            let written = match &cli.out {
                Some(path) => output::write_atomic(path, &r.text),
                None => {
                    print!("{}", r.text);
                    Ok(())
                }
            };
            match written {
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
                Ok(()) if r.passed => EXIT_OK,
                Ok(()) => {
                    eprintln!("error: checks failed");
                    EXIT_CHECK_FAILED
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
