//! `dpalign`: check, infer, transform, verify and test programs of the
//! alignment language.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome, TestArgs, TestMode, EXIT_USAGE};
use config::{FileConfig, Format, Overrides, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dpalign",
    version,
    about = "Verifier for randomness-alignment privacy proofs"
)]
struct Cli {
    /// SMT solver binary (reads SMT-LIB 2 on stdin).
    #[arg(long, global = true, env = "LDP_SOLVER")]
    solver: Option<PathBuf>,
    /// Per-query solver timeout in seconds.
    #[arg(long, global = true)]
    timeout: Option<f64>,
    /// Root seed for sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of sampled runs for `test`.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Constant substituted for unbounded counters during minimization.
    #[arg(long = "big-m", global = true)]
    big_m: Option<i64>,
    /// Write every SMT script to this directory.
    #[arg(long = "keep-smt", global = true)]
    keep_smt: Option<PathBuf>,
    /// Restrict distance variables to integers when minimizing.
    #[arg(long = "integer-distances", global = true)]
    integer_distances: bool,
    /// Print a JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// TOML file with default settings.
    #[arg(long, global = true, env = "DPALIGN_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Infer missing annotations, transform, and verify constraints and budget.
    Check {
        file: PathBuf,
        /// Budget to verify instead of the declared one.
        #[arg(long)]
        budget: Option<String>,
    },
    /// Show the inferred environment and residual constraints.
    Infer {
        file: PathBuf,
        /// Choose the cheapest values for remaining distance variables.
        #[arg(long)]
        minimize: bool,
    },
    /// Print the instrumented target program.
    Transform { file: PathBuf },
    /// Verify the budget obligations of the target program.
    Verify {
        file: PathBuf,
        #[arg(long)]
        budget: Option<String>,
    },
    /// Run the interpreter checks on concrete inputs.
    Test {
        file: PathBuf,
        #[arg(long, value_enum)]
        mode: TestMode,
        /// JSON memory for the first run.
        #[arg(long)]
        m1: PathBuf,
        /// JSON memory for the adjacent run.
        #[arg(long)]
        m2: Option<PathBuf>,
        /// Privacy claim tested by `--mode mc`; defaults to the budget.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Write the draws of one run as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(Outcome, Format), (CliError, Format)> {
    let file_cfg = match &cli.config {
        Some(p) => {
            FileConfig::load(p).map_err(|e| (CliError::Usage(e.to_string()), Format::Text))?
        }
        None => FileConfig::default(),
    };
    let overrides = Overrides {
        solver: cli.solver,
        timeout: cli.timeout,
        big_m: cli.big_m,
        seed: cli.seed,
        trials: cli.trials,
        json: cli.json,
        keep_smt: cli.keep_smt,
        integer_distances: cli.integer_distances,
    };
    let fmt_hint = if cli.json { Format::Json } else { Format::Text };
    let cfg = RunConfig::resolve(file_cfg, overrides)
        .map_err(|e| (CliError::Usage(e.to_string()), fmt_hint))?;
    let fmt = cfg.format;
    let out = match &cli.command {
        Command::Check { file, budget } => commands::check(file, budget.as_deref(), &cfg),
        Command::Infer { file, minimize } => commands::infer(file, *minimize, &cfg),
        Command::Transform { file } => commands::transform(file),
        Command::Verify { file, budget } => commands::verify(file, budget.as_deref(), &cfg),
        Command::Test {
            file,
            mode,
            m1,
            m2,
            epsilon,
            trace,
        } => commands::test(
            file,
            &TestArgs {
                mode: *mode,
                m1: m1.clone(),
                m2: m2.clone(),
                epsilon: *epsilon,
                trace: trace.clone(),
            },
            &cfg,
        ),
    };
    out.map(|o| (o, fmt)).map_err(|e| (e, fmt))
}

/// Write to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_USAGE as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok((o, Format::Json)) => {
            emit(&format!(
                "{}\n",
                serde_json::to_string_pretty(&o.json).unwrap_or_default()
            ));
            ExitCode::from(o.exit as u8)
        }
        Ok((o, Format::Text)) => {
            emit(&o.text);
            ExitCode::from(o.exit as u8)
        }
        Err((e, Format::Json)) => {
            let j = serde_json::json!({"error": e.to_string(), "exit_code": EXIT_USAGE});
            emit(&format!(
                "{}\n",
                serde_json::to_string_pretty(&j).unwrap_or_default()
            ));
            ExitCode::from(EXIT_USAGE as u8)
        }
        Err((e, Format::Text)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE as u8)
        }
    }
}
