use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sparseperm_cli::config::ModeName;
use sparseperm_cli::{cmd_benchmark, cmd_fit, cmd_simulate, cmd_summarize, CliError, Overrides};

#[derive(Parser)]
#[command(name = "sparseperm", version, about = "Fractional-posterior regression with sparsely permuted data")]
struct Cli {
    /// Suppress progress and report output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set with a reversed leading block.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a data set with the Gibbs sampler or MC-EM.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// truth.json from `simulate`, to score the fit.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Run the (n, alpha) simulation grid.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize stored draws and write per-coefficient histograms.
    Summarize {
        #[arg(long)]
        draws: PathBuf,
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Directory for the histogram files; defaults to the draws directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Mode {
    Gibbs,
    Mcem,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let say = |msg: String| {
        if !cli.quiet {
            println!("{msg}");
        }
    };
    match cli.command {
        Command::Simulate { config, out, seed } => {
            let r = cmd_simulate(&config, &out, &Overrides { seed, mode: None })?;
            say(format!(
                "simulated n = {} observations, {} displaced; wrote {}",
                r.truth.pi0.len(),
                r.truth.displaced,
                out.display()
            ));
        }
        Command::Fit {
            data,
            config,
            out,
            truth,
            seed,
            mode,
        } => {
            let mode = mode.map(|m| match m {
                Mode::Gibbs => ModeName::Gibbs,
                Mode::Mcem => ModeName::Mcem,
            });
            let r = cmd_fit(&data, &config, &out, truth.as_deref(), &Overrides { seed, mode })?;
            say(format!("{} draws summarized; wrote {}", r.summary.draws, out.display()));
        }
        Command::Benchmark { config, out, seed } => {
            let r = cmd_benchmark(&config, &out, &Overrides { seed, mode: None })?;
            for row in r.report.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!(
                    "cell n = {}, alpha = {}: {}",
                    row.n,
                    row.alpha,
                    row.error.as_deref().unwrap_or_default()
                );
            }
            say(format!("{} cells; wrote {}", r.report.rows.len(), out.display()));
        }
        Command::Summarize { draws, truth, out } => {
            let r = cmd_summarize(&draws, truth.as_deref(), out.as_deref())?;
            say(r.text);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
