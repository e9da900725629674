use std::path::PathBuf;
use std::process::ExitCode;

use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use darkmine::cli::{run, CliOptions, Command};

/// Darknet/deepnet threat-intelligence pipeline.
#[derive(Parser)]
#[command(name = "darkmine", version, about)]
struct Args {
    /// Run-config file driving every subcommand.
    #[arg(long, global = true, default_value = "darkmine.json")]
    config: PathBuf,

    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Freeze the clock at an ISO-8601 instant for byte-stable outputs.
    #[arg(long, global = true, value_name = "ISO8601")]
    fixed_clock: Option<String>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Crawl configured sites into the raw page store.
    Crawl,
    /// Parse stored pages into validated record files.
    Parse,
    /// Apply the configured label file to stored records.
    Label,
    /// Train the configured (semi-)supervised model.
    Train,
    /// Stamp classifier labels on unlabeled records.
    Classify,
    /// Run the configured cross-validation protocol.
    Evaluate,
    /// Build cross-site graph, histogram, and zero-day exports.
    Analyze,
    /// Summarize existing artifacts into a plain-text report.
    Report,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let fixed_clock: Option<DateTime<Utc>> = match &args.fixed_clock {
        None => None,
        Some(raw) => match DateTime::parse_from_rfc3339(raw) {
            Ok(at) => Some(at.with_timezone(&Utc)),
            Err(e) => {
                eprintln!("error: bad --fixed-clock value `{raw}`: {e}");
                return ExitCode::from(2);
            }
        },
    };
    let command = match args.command {
        Cmd::Crawl => Command::Crawl,
        Cmd::Parse => Command::Parse,
        Cmd::Label => Command::Label,
        Cmd::Train => Command::Train,
        Cmd::Classify => Command::Classify,
        Cmd::Evaluate => Command::Evaluate,
        Cmd::Analyze => Command::Analyze,
        Cmd::Report => Command::Report,
    };
    let options = CliOptions { config: args.config, seed: args.seed, fixed_clock };
    ExitCode::from(run(command, &options) as u8)
}
