use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dlvsim::panel::DEFAULT_FLOOR;
use dlvsim_cli::{CliError, FixtureKind, GenerateRequest};

#[derive(Parser)]
#[command(name = "dlvsim", version, about = "Train and evaluate simulators of log DLV panels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a raw DLV CSV and write the canonical log panel plus a summary.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = DEFAULT_FLOOR)]
        floor: f64,
        /// Keep only these grid points (`K=<strike>|M=<days>`, repeatable).
        #[arg(long)]
        grid: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic log panel.
    Fixture {
        /// var-sv, factor or ar1.
        #[arg(long)]
        kind: FixtureKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        len: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the model described by a JSON run config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample paths from a checkpoint.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Initial states; defaults to the history saved with the run.
        #[arg(long)]
        hist: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        m: usize,
        /// Rows per path; the history length when omitted.
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated paths against a historical log panel.
    Evaluate {
        #[arg(long)]
        hist: PathBuf,
        /// Directory written by `generate`, or a single log-panel CSV.
        #[arg(long)]
        gen: PathBuf,
        /// Metrics config JSON.
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate the scores of several runs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    dlvsim_cli::init_threads()?;
    match cli.command {
        Command::Ingest { data, floor, grid, out } => {
            let s = dlvsim_cli::cmd_ingest(&data, floor, &grid, &out)?;
            println!("T={} N_X={} floored={}", s.rows, s.n_x, s.floored_count);
        }
        Command::Fixture { kind, seed, len, out } => {
            let lp = dlvsim_cli::cmd_fixture(kind, seed, len, &out)?;
            println!("wrote {} ({} x {})", out.display(), lp.len(), lp.dim());
        }
        Command::Train { config } => {
            let s = dlvsim_cli::cmd_train(&config)?;
            let best = s.log.best.map(|i| s.log.records[i].update);
            println!("{}: {} updates, best at {:?}, artifacts in {}", s.label, s.log.updates, best, s.dir.display());
            if let Some(r) = s.scores {
                print!("{}", dlvsim::metrics::render_table(&[(s.label, r)]));
            }
        }
        Command::Generate { checkpoint, hist, m, len, seed, out } => {
            let set = dlvsim_cli::cmd_generate(&checkpoint, hist.as_deref(), &GenerateRequest { paths: m, length: len, seed }, &out)?;
            println!("{} paths of {} rows in {} ({} failed)", set.len(), set.path_len(), out.display(), set.failures.len());
        }
        Command::Evaluate { hist, gen, metrics, out } => {
            let r = dlvsim_cli::cmd_evaluate(&hist, &gen, metrics.as_deref(), out.as_deref())?;
            print!("{}", dlvsim::metrics::render_table(&[(r.model.clone(), r)]));
        }
        Command::Report { runs, out } => print!("{}", dlvsim_cli::cmd_report(&runs, out.as_deref())?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
