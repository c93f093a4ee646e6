use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod bench;
mod config;
mod eval;
mod gen;
mod mask;
mod stats;

/// Syntax-aware fill-in-the-middle data tools.
#[derive(Debug, Parser)]
#[command(name = "astfim", version)]
struct Cli {
    /// More log output; repeat for debug.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample masks from one file and show them.
    Mask(mask::MaskArgs),
    /// Generate FIM/L2R training records from a corpus.
    Gen(gen::GenArgs),
    /// Build infilling benchmarks from commit history.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Prompt export, reference scoring and perplexity reports.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Per-language file counts and parse validity of a corpus.
    Stats(stats::StatsArgs),
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Extract add/edit examples from commits or before/after pairs.
    Build(bench::BuildArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Turn benchmark examples into scorer prompts.
    Prompts(eval::PromptsArgs),
    /// Score prompts with a character n-gram model.
    Ngram(eval::NgramArgs),
    /// Character-level perplexity from prompts and scores.
    Ppl(eval::PplArgs),
}

/// Config file plus the run settings every generating command accepts.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// TOML config, or a run manifest to replay.
    #[arg(long, env = "ASTFIM_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl CommonArgs {
    pub fn resolve(&self) -> anyhow::Result<config::RunConfig> {
        let mut cfg = config::RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

/// What a command produced; empty output maps to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    Empty,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Mask(a) => mask::run(a),
        Command::Gen(a) => gen::run(a),
        Command::Bench(BenchCommand::Build(a)) => bench::run(a),
        Command::Eval(EvalCommand::Prompts(a)) => eval::prompts(a),
        Command::Eval(EvalCommand::Ngram(a)) => eval::ngram(a),
        Command::Eval(EvalCommand::Ppl(a)) => eval::ppl(a),
        Command::Stats(a) => stats::run(a),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Empty) => {
            eprintln!("astfim: no output produced");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("astfim: {e:#}");
            ExitCode::from(1)
        }
    }
}
