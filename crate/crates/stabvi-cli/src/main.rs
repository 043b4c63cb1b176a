//! `stabvi` — run value-iteration experiment pipelines from a config file.

use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

use clap::Parser;

use stabvi_cli::config::validate_config;
use stabvi_cli::pipelines::run_pipeline;
use stabvi_cli::{ExitCode, HarnessError};

/// Value-iteration experiment harness.
///
/// Reads a line-oriented config (see docs/config.md), runs the selected
/// pipeline, writes CSV artifacts and verdict.json into the output
/// directory, and exits 0 only if every enabled check passed.
#[derive(Parser)]
#[command(name = "stabvi", version, about)]
struct Cli {
    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,

    /// Output directory for artifacts (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Override the config's pipeline id.
    #[arg(long)]
    pipeline: Option<String>,

    /// Override the config's root seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Print per-check lines.
    #[arg(short, long)]
    verbose: bool,
}

/// Drops any line assigning `key` so a CLI override can be appended without
/// tripping the duplicate-key rule.
fn strip_key(text: &str, key: &str) -> String {
    text.lines()
        .filter(|line| {
            let head = line.trim_start();
            !(head.starts_with(key)
                && head[key.len()..].trim_start().starts_with('='))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn run(cli: &Cli) -> Result<ExitCode, HarnessError> {
    let mut text = std::fs::read_to_string(&cli.config)?;
    if let Some(p) = &cli.pipeline {
        text = strip_key(&text, "pipeline");
        text.push_str(&format!("\npipeline = {p}\n"));
    }
    if let Some(s) = cli.seed {
        text = strip_key(&text, "seed");
        text.push_str(&format!("\nseed = {s}\n"));
    }

    let cfg = validate_config(&text)?;
    let outcome = run_pipeline(&cfg, &cli.out)?;
    for check in &outcome.report.checks {
        let status = if check.pass { "PASS" } else { "FAIL" };
        if cli.verbose || !check.pass {
            match check.margin {
                Some(m) => println!("[{status}] {} (margin {m:.3e}): {}", check.id, check.detail),
                None => println!("[{status}] {}: {}", check.id, check.detail),
            }
        }
    }
    println!(
        "pipeline {} finished: {}/{} checks passed; artifacts in {}",
        outcome.report.pipeline,
        outcome.report.checks.iter().filter(|c| c.pass).count(),
        outcome.report.checks.len(),
        cli.out.display()
    );
    Ok(outcome.exit)
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ProcessExit::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ProcessExit::from(e.exit_code() as u8)
        }
    }
}
