//! Command-line harness: generate instances, run certificate sweeps, and
//! summarize results.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use haarmw_cli::config::ExperimentConfig;
use haarmw_cli::{formats, report, runner};

#[derive(Parser)]
#[command(
    name = "haarmw",
    about = "Certificate harness for matrix-weighted Haar shift inequalities on finite trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write instance files (tree, measures, operator) for every sweep tuple.
    Gen {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the selected certificates; exit nonzero if any fails.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep only certificates whose name matches this glob.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Summarize a certificate run from its JSONL output.
    Report {
        /// Path to certificates.jsonl (or a directory containing it).
        results: PathBuf,
        /// Also write raw slack values for histogramming.
        #[arg(long)]
        hist: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("HAARMW_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(s) = seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("haarmw-out"))
}

/// Print without panicking when the consumer closes the pipe early.
fn print_or_pipe(text: &str) {
    let stdout = std::io::stdout();
    let _ = stdout.lock().write_all(text.as_bytes());
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen { config, out, seed } => {
            let cfg = load_config(&config, seed)?;
            let dir = out_dir(&cfg, out);
            let n = runner::generate_files(&cfg, &dir)?;
            println!("wrote {n} instance triples to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            config,
            out,
            seed,
            filter,
        } => {
            let cfg = load_config(&config, seed)?;
            let dir = out_dir(&cfg, out);
            std::fs::create_dir_all(&dir)?;
            let mut records = runner::run_config(&cfg)?;
            if let Some(pat) = &filter {
                records.retain(|r| report::glob_match(pat, &r.name));
            }
            formats::write_jsonl(&dir.join("certificates.jsonl"), &records)?;
            formats::write_csv(&dir.join("summary.csv"), &records)?;
            print_or_pipe(&report::render(&records));
            let failed = records.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                if let Some(wdir) = runner::dump_witness(&cfg, &records, &dir)? {
                    eprintln!("{failed} failing certificates; witness in {}", wdir.display());
                }
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { results, hist } => {
            let path = if results.is_dir() {
                results.join("certificates.jsonl")
            } else {
                results
            };
            let records =
                formats::read_jsonl(&path).context("reading certificate records")?;
            print_or_pipe(&report::render(&records));
            if let Some(hpath) = hist {
                report::write_slack_csv(&records, &hpath)?;
                println!("slack data written to {}", hpath.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
