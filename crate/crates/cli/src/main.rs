#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN-rejecting range checks

mod config;
mod joint;
mod localize;
mod output;
mod synth;
mod video;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig, CONFIG_ENV};

#[derive(Debug, Parser)]
#[command(name = "egofov", version, about = "Localize where a wearer is looking by matching first-person images against reference imagery")]
struct Cli {
    /// JSON config file; flags override its values.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Localize one POV image, or every pair of a synthetic dataset.
    Localize(localize::LocalizeArgs),
    /// Localize every sampled frame of a POV video, with camera selection.
    Video(video::VideoArgs),
    /// Pairwise joint attention over a multi-person session.
    Joint(joint::JointArgs),
    /// Render an exhibit heatmap from viewer counts.
    Heatmap(joint::HeatmapArgs),
    /// Generate synthetic pairs, sessions or camera videos.
    Synth(synth::SynthArgs),
    /// Score localization records against ground truth.
    Eval(synth::EvalArgs),
    /// Print the effective configuration.
    Config,
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.jobs {
        anyhow::ensure!(n >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    let config = RunConfig::resolve(cli.config.as_ref(), &cli.overrides)?;
    match cli.command {
        Command::Localize(a) => localize::run(&config, a),
        Command::Video(a) => video::run(&config, a),
        Command::Joint(a) => joint::run(&config, a),
        Command::Heatmap(a) => joint::heatmap(&config, a),
        Command::Synth(a) => synth::run(a),
        Command::Eval(a) => synth::eval(a),
        Command::Config => {
            let text = serde_json::to_string_pretty(&config)?;
            match writeln!(std::io::stdout(), "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(0),
            }
        }
    }
}

/// Error chain joined by `: `, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(1)
        }
    }
}
