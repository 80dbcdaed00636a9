mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use klay_core::parse::CircuitFormat;
use klay_core::BuiltinSemiring;

use error::CliError;

/// Layered, tensorized evaluation of compiled Boolean circuits.
///
/// Exit codes: 0 success, 1 `check` mismatch, 2 malformed input or shape
/// mismatch, 3 I/O failure. `KLAY_THREADS` caps evaluation parallelism.
#[derive(Debug, Parser)]
#[command(name = "klay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge source circuits into one multi-rooted `.klay` file.
    Compile {
        /// c2d/d4 `.nnf` or `.sdd` files; roots keep the given order.
        #[arg(required = true, value_parser = path_arg)]
        inputs: Vec<PathBuf>,
        #[arg(short, long, value_parser = path_arg)]
        out: PathBuf,
        /// Smooth every input first, so that all-ones weights count models.
        #[arg(long)]
        smooth: bool,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Print size and sparsity of a `.klay` or source circuit as JSON.
    Stats {
        #[arg(value_parser = path_arg)]
        circuit: PathBuf,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Evaluate the roots of a circuit.
    Eval(EvalArgs),
    /// Evaluate the roots and their gradients with respect to every input.
    Grad(EvalArgs),
    /// Compare layered evaluation with the post-order and enumeration oracles.
    Check {
        /// Source circuit.
        #[arg(value_parser = path_arg)]
        circuit: PathBuf,
        /// Check this `.klay` file instead of layering the source afresh.
        #[arg(long, value_parser = path_arg)]
        klay: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        source: SourceArgs,
    },
    /// Random 3-CNF benchmark; writes one JSON line per instance.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Clone, Copy)]
struct SourceArgs {
    /// Source format (c2d, d4, sdd); by default from extension or content.
    #[arg(long)]
    format: Option<CircuitFormat>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// `.klay` file, or a source circuit layered on the fly.
    #[arg(value_parser = path_arg)]
    circuit: PathBuf,
    /// JSON weights; every probability is 0.5 when omitted.
    #[arg(value_parser = path_arg)]
    weights: Option<PathBuf>,
    /// Evaluate in the log domain (same as `--semiring log`).
    #[arg(long)]
    log: bool,
    /// Log-domain sum smoothing.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Number of weight rows; a single row is repeated to this size.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value = "real")]
    semiring: BuiltinSemiring,
    /// Single precision.
    #[arg(long)]
    f32: bool,
    /// Write the JSON dump here instead of stdout.
    #[arg(short, long, visible_alias = "dump-json")]
    out: Option<PathBuf>,
    #[command(flatten)]
    source: SourceArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Variable counts of the sweep.
    #[arg(long, value_delimiter = ',', default_values_t = [20u32, 30, 40])]
    vars: Vec<u32>,
    /// Clauses per variable.
    #[arg(long, default_value_t = 4.0)]
    ratio: f64,
    /// Instances per variable count.
    #[arg(long, default_value_t = 3)]
    instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// External compiler command with `{in}` and `{out}` placeholders.
    #[arg(long)]
    compiler: Option<String>,
    /// Compiler timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// Write the JSON lines here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Also write the cumulative runtime table here.
    #[arg(long)]
    table: Option<PathBuf>,
}

/// Accepts any string, the empty one included, so that a missing file is
/// reported as an I/O failure rather than a usage error.
fn path_arg(s: &str) -> Result<PathBuf, std::convert::Infallible> {
    Ok(PathBuf::from(s))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("KLAY_THREADS") else { return Ok(()) };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::invalid(format!("KLAY_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(CliError::invalid)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Compile { inputs, out, smooth, source } => commands::compile(&inputs, &out, smooth, source.format),
        Command::Stats { circuit, source } => commands::stats(&circuit, source.format),
        Command::Eval(args) => commands::eval(&args, false),
        Command::Grad(args) => commands::eval(&args, true),
        Command::Check { circuit, klay, trials, seed, source } => {
            commands::check(&circuit, klay.as_deref(), trials, seed, source.format)
        }
        Command::Bench(args) => commands::bench(&args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("klay: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
