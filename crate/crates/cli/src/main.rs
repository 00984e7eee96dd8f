//! Command-line front end: one binary, five subcommands, deterministic CSV.

mod config;
mod presets;
mod run;
mod table;

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Experiment, SolverChoice};
use run::{Failure, RunOptions};

#[derive(Parser)]
#[command(
    name = "relay-sep",
    version,
    about = "Average symbol-error probability and relay power allocation \
             for two-hop decode-and-forward networks over Rayleigh fading"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the Monte-Carlo base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the Monte-Carlo trial count.
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Write the output (CSV, or preset TOML) here instead of the configured
    /// destination; `sweep` without any destination prints CSV to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Suppress progress lines on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Fill the wall_ms CSV column (off by default: timings differ between
    /// runs, and the column must stay empty for byte-identical output).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the SEP of the configured power vector by every analytic
    /// method (plus Monte-Carlo when validation is enabled).
    SepEval,
    /// Solve one allocation instance with the chosen solver(s).
    Allocate {
        /// Solver to run; repeat the flag to compare several.
        #[arg(long = "solver", value_enum, default_values_t = vec![SolverArg::Exact])]
        solver: Vec<SolverArg>,
    },
    /// Monte-Carlo-estimate the SEP of the configured power vector.
    Simulate,
    /// Run the configured sweep and emit the result table as CSV.
    Sweep,
    /// Print a built-in experiment configuration.
    Preset {
        /// One of: fig1, fig2, fig3.
        name: String,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SolverArg {
    Exact,
    Approx,
    Equal,
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Exact => SolverChoice::Exact,
            SolverArg::Approx => SolverChoice::Approx,
            SolverArg::Equal => SolverChoice::Equal,
        }
    }
}

fn load_experiment(cli: &Cli) -> Result<Experiment, Failure> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Failure::Config("--config <PATH> is required for this command".into()))?;
    config::load(path).map_err(|e| Failure::Config(e.to_string()))
}

fn real_main(cli: &Cli) -> Result<(), Failure> {
    let opts = RunOptions {
        seed: cli.seed,
        trials: cli.trials,
        timing: cli.timing,
        quiet: cli.quiet,
    };
    let stdout = std::io::stdout();
    match &cli.command {
        Command::SepEval => {
            let exp = load_experiment(cli)?;
            run::run_sep_eval(&exp, &opts, &mut stdout.lock())
        }
        Command::Allocate { solver } => {
            let exp = load_experiment(cli)?;
            let solvers: Vec<SolverChoice> = solver.iter().map(|&s| s.into()).collect();
            run::run_allocate(&exp, &opts, &solvers, &mut stdout.lock())
        }
        Command::Simulate => {
            let exp = load_experiment(cli)?;
            run::run_simulate(&exp, &opts, &mut stdout.lock())
        }
        Command::Sweep => {
            let exp = load_experiment(cli)?;
            run::run_sweep_cmd(&exp, &opts, cli.out.as_deref())
        }
        Command::Preset { name } => {
            let text = presets::by_name(name).ok_or_else(|| {
                Failure::Config(format!("unknown preset \"{name}\" (try fig1, fig2, fig3)"))
            })?;
            match &cli.out {
                Some(path) => std::fs::write(path, text).map_err(|e| {
                    Failure::Io(format!("cannot write {}: {e}", path.display()))
                })?,
                None => stdout.lock().write_all(text.as_bytes())?,
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(failure) = real_main(&cli) {
        eprintln!("error: {}", failure.message());
        std::process::exit(failure.exit_code());
    }
}
