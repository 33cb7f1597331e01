mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Simulation and statistical checks for exp-1-stable point processes.
///
/// Exit status: 0 when every check is consistent, 1 when a statistical test
/// rejects, 2 on usage or runtime errors.
#[derive(Debug, Parser)]
#[command(name = "expstable", version)]
pub struct Cli {
    /// TOML experiment config; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub output_dir: PathBuf,

    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "EXPSTABLE_WORKERS")]
    pub workers: Option<usize>,

    /// Run replicas in order on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Base seed; required here or in the config.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Replicas per side.
    #[arg(long, default_value_t = 10_000)]
    pub replicas: u64,

    /// Lower end of the sampling window.
    #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
    pub window_lo: f64,

    /// Upper end of the sampling window.
    #[arg(long, default_value_t = f64::INFINITY, allow_negative_numbers = true)]
    pub window_hi: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DecorationArgs {
    /// Decoration law: dirac0, dirac, finite-cluster, staircase, two-point,
    /// up-cluster, exp-growth, null, empirical.
    #[arg(long, default_value = "dirac0")]
    pub decoration: String,

    /// Decoration parameter as key=value; repeatable.
    #[arg(long = "param", value_parser = parse_param, allow_negative_numbers = true)]
    pub params: Vec<(String, f64)>,

    /// JSON file with an empirical decoration law.
    #[arg(long)]
    pub decoration_file: Option<PathBuf>,

    /// Coefficient c of the density part c e^{-x} dx.
    #[arg(long, default_value_t = 0.0)]
    pub density_coeff: f64,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v: f64 = v
        .trim()
        .parse()
        .map_err(|_| format!("parameter `{k}`: `{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Poisson process with intensity e^{-x} dx on the window.
    Ppp {
        #[command(flatten)]
        common: Common,
    },
    /// Decorated Poisson point process on the window.
    Dppp {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoration: DecorationArgs,
    },
    /// Cumulant battery: Monte Carlo estimate against the formula.
    Cumulant {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoration: DecorationArgs,
        /// Decoration draws per formula evaluation.
        #[arg(long, default_value_t = 100_000)]
        mc_inner: u64,
        /// Agreement threshold in combined standard errors.
        #[arg(long, default_value_t = 3.0)]
        sigmas: f64,
        /// Fraction of functions that must agree.
        #[arg(long, default_value_t = 0.95)]
        agree_fraction: f64,
    },
    /// Stability battery: Z against T_a Z + T_b Z' with e^a + e^b = 1.
    Stability {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoration: DecorationArgs,
        /// Values of alpha (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "-0.6931471805599453", allow_hyphen_values = true)]
        alpha: Vec<f64>,
        /// Also compare Z + Z' against T_{log 2} Z.
        #[arg(long)]
        superposition: bool,
        /// Use the non-stable Poisson process with intensity e^{-x^2} dx.
        #[arg(long)]
        negative_control: bool,
    },
    /// Canonical pair (m, D) of a decoration by exponential tilting.
    Canonicalize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoration: DecorationArgs,
        /// Pool size.
        #[arg(long, default_value_t = 100_000)]
        pool: u64,
        /// Run the stability battery on DPPP(D') against T_m DPPP(D).
        #[arg(long)]
        verify: bool,
    },
    /// Branching Brownian motion snapshots and martingale traces.
    Bbm {
        /// Base seed; required here or in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Horizon.
        #[arg(long, default_value_t = 10.0)]
        t: f64,
        /// Independent paths.
        #[arg(long, default_value_t = 100)]
        replicas: u64,
        /// Times at which W_t and N_t are recorded (comma separated).
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<f64>,
    },
    /// Intensity E[Z(A)] and the growth scan over [-k, 0].
    Intensity {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        decoration: DecorationArgs,
        /// Lower end of A.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        area_lo: f64,
        /// Upper end of A.
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        area_hi: f64,
        /// Depths k of the scan (comma separated).
        #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
        depths: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let matches = Cli::command().get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run::run(&cli, &matches) {
        Ok(code) => code.into(),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
