//! `cda` command-line front end.
//!
//! Subcommands wire the pipeline end to end:
//! `synth` → `split` → `train` → `score` → `eval`, plus `heatmap` for
//! visual inspection and `bench` for per-image latency.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

pub mod bench;
pub mod commands;
pub mod config;

pub use config::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "cda",
    version,
    about = "Color-reconstruction anomaly detection"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic leaf fixture (healthy/, diseased/, masks/).
    Synth(commands::SynthArgs),
    /// Build a seeded train/test manifest from healthy/ and diseased/.
    Split(commands::SplitArgs),
    /// Fit the lookup colorizer on the manifest's healthy training images.
    Train(commands::TrainArgs),
    /// Score every test image and write `image_id,label,method,score` CSV.
    Score(commands::ScoreArgs),
    /// Evaluate a score CSV into a JSON report.
    Eval(commands::EvalArgs),
    /// Render ΔE00 heat maps for the test images.
    Heatmap(commands::HeatmapArgs),
    /// Time reconstruction and scoring per test image.
    Bench(bench::BenchArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Score(_) => "score",
            Command::Eval(_) => "eval",
            Command::Heatmap(_) => "heatmap",
            Command::Bench(_) => "bench",
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let stage = cli.command.name();
    let result = RunConfig::resolve(&cli.common).and_then(|cfg| match &cli.command {
        Command::Synth(a) => commands::synth(&cfg, a),
        Command::Split(a) => commands::split(&cfg, a),
        Command::Train(a) => commands::train(&cfg, a),
        Command::Score(a) => commands::score(&cfg, a),
        Command::Eval(a) => commands::eval(&cfg, a),
        Command::Heatmap(a) => commands::heatmap(&cfg, a),
        Command::Bench(a) => bench::bench(&cfg, a).map(|_| ()),
    });
    result.with_context(|| format!("`{stage}` failed"))
}

/// Parses `args` (without the program name) and runs.
pub fn run_args<I, S>(args: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let argv =
        std::iter::once(std::ffi::OsString::from("cda")).chain(args.into_iter().map(Into::into));
    run(Cli::try_parse_from(argv)?)
}

/// Writes through a sibling temp file and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create output directory {}", parent.display()))?;
    }
    let name = path
        .file_name()
        .with_context(|| format!("output path {} has no file name", path.display()))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp: PathBuf = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)
        .with_context(|| format!("cannot write output {}", path.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("cannot write output {}", path.display()))?;
    Ok(())
}
