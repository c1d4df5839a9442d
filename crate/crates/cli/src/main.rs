mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "eqsdp",
    version,
    about = "Equilibrium-based SDP feasibility solver"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Instance file to read; stdin when absent.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,

    /// Where to write the report (or the instance, for `gen`); stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[arg(long, global = true)]
    pub delta: Option<f64>,

    /// Guess value `c` for feasibility runs.
    #[arg(long, global = true)]
    pub guess: Option<f64>,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Comma-separated register dimensions for `gen`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub dims: Vec<usize>,

    #[arg(long, global = true)]
    pub iterations_cap: Option<usize>,

    /// Reference oracle for `verify`; defaults to the one suited to the instance kind.
    #[arg(long, global = true, value_enum)]
    pub oracle: Option<OracleChoice>,

    /// Frank-Wolfe iterations used by `verify`.
    #[arg(long, global = true, default_value_t = 20_000)]
    pub oracle_iterations: usize,

    /// Grid spacing used by `verify` and the game-value oracle.
    #[arg(long, global = true, default_value_t = 0.02)]
    pub resolution: f64,

    /// Leave timings out of the report so reruns are byte-identical.
    #[arg(long, global = true, num_args = 0..=1, default_value_t = false, default_missing_value = "true")]
    pub deterministic: bool,

    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Json)]
    pub report: ReportFormat,

    /// Instance family for `gen`.
    #[arg(long, global = true, value_enum, default_value_t = KindChoice::Qip2)]
    pub kind: KindChoice,

    /// Promise pair `completeness,soundness` attached by `gen`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub promise: Option<Vec<f64>>,

    /// Best-response solver for `qrg2`.
    #[arg(long, global = true, value_enum, default_value_t = InnerChoice::Auto)]
    pub inner: InnerChoice,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Generate a seeded random instance.
    Gen,
    /// Decide feasibility of a qip2 instance at `--guess`, or its promise problem.
    Solve,
    /// Locate the optimum of a qip2 instance by bisection.
    Optimum,
    /// Solve or decide a two-register instance.
    Qmam,
    /// Decide a refereed game by the sign of its value.
    Qrg2,
    /// Compare the solver against reference oracles.
    Verify,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleChoice {
    Fw,
    Grid,
    Both,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindChoice {
    Qip2,
    Qmam,
    Qrg2,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerChoice {
    Auto,
    Nested,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let precision = err.chain().any(|cause| {
        matches!(
            cause.downcast_ref::<eqsdp::Error>(),
            Some(eqsdp::Error::PrecisionNotReached { .. })
        )
    });
    if precision {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
