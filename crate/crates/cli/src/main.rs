//! `facecloud` command-line front end.

mod bench;
mod eval;
mod generate;
mod import;
mod train;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use facecloud::io::{NetworkPreset, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "facecloud", version, about = "Point-cloud face recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic face dataset.
    Generate(generate::GenerateArgs),
    /// Train the network and keep the checkpoint with the lowest verification loss.
    Train(train::TrainArgs),
    /// Evaluate a checkpoint on gallery and probe manifests.
    Eval(eval::EvalArgs),
    /// Write embeddings of point clouds.
    Embed(eval::EmbedArgs),
    /// Rank gallery identities for probe embeddings.
    Match(eval::MatchArgs),
    /// Convert a PLY file into an S3PC point cloud.
    ImportPly(import::ImportArgs),
    /// Time geometry kernels and the forward pass.
    Bench(bench::BenchArgs),
}

/// Options shared by every command.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Common {
    /// Configuration file (or defaults) with the seed override applied.
    pub fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).map_err(|e| Usage(e.to_string()))?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

/// Invalid arguments or configuration; exits with code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn validated(cfg: RunConfig) -> Result<RunConfig> {
    cfg.validate().map_err(|e| Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn parse_preset(s: &str) -> Result<NetworkPreset> {
    match s {
        "full" => Ok(NetworkPreset::Full),
        "micro" => Ok(NetworkPreset::Micro),
        other => Err(Usage(format!("unknown preset {other:?} (expected full or micro)")).into()),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Whether a command finished on all of its inputs.
pub enum Outcome {
    Complete,
    Partial,
}

fn run(cli: Cli) -> Result<Outcome> {
    let common = match &cli.command {
        Command::Generate(a) => &a.common,
        Command::Train(a) => &a.common,
        Command::Eval(a) => &a.common,
        Command::Embed(a) => &a.common,
        Command::Match(a) => &a.common,
        Command::ImportPly(a) => &a.common,
        Command::Bench(a) => &a.common,
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Generate(a) => generate::run(a),
        Command::Train(a) => train::run(a),
        Command::Eval(a) => eval::run_eval(a),
        Command::Embed(a) => eval::run_embed(a),
        Command::Match(a) => eval::run_match(a),
        Command::ImportPly(a) => import::run(a),
        Command::Bench(a) => bench::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Complete) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
