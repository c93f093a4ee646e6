use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use astfim_core::benchgen::ConflictMarkers;
use astfim_core::evalkit::{aggregate, ngram_score, prompt_line, score_prompts, GroupSummary, PromptFormat, PromptLine, ScoreLine};
use astfim_core::{BenchExample, GroupKey};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::{file_digest, sidecar, write_json, Manifest};
use crate::{CommonArgs, Outcome, OutputFormat};

#[derive(Debug, Args)]
pub struct PromptsArgs {
    /// Benchmark JSONL from `bench build`.
    #[arg(long, env = "ASTFIM_BENCH")]
    pub bench: PathBuf,
    #[arg(long, default_value = "psm", value_parser = parse_format)]
    pub format: PromptFormat,
    #[arg(long, short, env = "ASTFIM_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct NgramArgs {
    #[arg(long, env = "ASTFIM_PROMPTS")]
    pub prompts: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Add-k smoothing constant.
    #[arg(long, default_value_t = 0.1)]
    pub k: f64,
    #[arg(long, short, env = "ASTFIM_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PplArgs {
    #[arg(long, env = "ASTFIM_PROMPTS")]
    pub prompts: PathBuf,
    #[arg(long, env = "ASTFIM_SCORES")]
    pub scores: PathBuf,
    /// Comma-separated grouping keys: split, lang.
    #[arg(long, value_delimiter = ',', value_parser = parse_key)]
    pub group_by: Vec<GroupKey>,
    /// Per-example perplexities as JSONL.
    #[arg(long, env = "ASTFIM_OUT")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
}

fn parse_format(s: &str) -> Result<PromptFormat, String> {
    s.parse()
}

fn parse_key(s: &str) -> Result<GroupKey, String> {
    s.parse()
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))
}

#[derive(Serialize)]
struct PromptParams {
    format: PromptFormat,
    markers: ConflictMarkers,
}

pub fn prompts(args: PromptsArgs) -> Result<Outcome> {
    let cfg = args.common.resolve()?;
    cfg.validate()?;
    let examples: Vec<BenchExample> = read_jsonl(&args.bench)?;
    let markers = ConflictMarkers::default();
    let lines: Vec<PromptLine> =
        examples.iter().map(|ex| prompt_line(ex, args.format, &cfg.sentinels, &markers)).collect();
    write_jsonl(&args.out, &lines)?;
    let mut m = Manifest::new("eval prompts", &cfg, PromptParams { format: args.format, markers });
    m.inputs.push(file_digest(&args.bench)?);
    m.outputs.push(args.out.display().to_string());
    write_json(&sidecar(&args.out, "manifest.json"), &m)?;
    Ok(if lines.is_empty() { Outcome::Empty } else { Outcome::Done })
}

pub fn ngram(args: NgramArgs) -> Result<Outcome> {
    anyhow::ensure!(args.order >= 1, "--order must be at least 1");
    anyhow::ensure!(args.k > 0.0, "--k must be positive");
    let prompts: Vec<PromptLine> = read_jsonl(&args.prompts)?;
    let mut scores = Vec::with_capacity(prompts.len());
    for p in &prompts {
        match ngram_score(&p.id, &p.middle, &p.prompt, args.order, args.k) {
            Ok(sm) => scores.push(ScoreLine { id: sm.id, tokens: sm.scores }),
            Err(e) => log::warn!("{}: {e}", p.id),
        }
    }
    write_jsonl(&args.out, &scores)?;
    Ok(if scores.is_empty() { Outcome::Empty } else { Outcome::Done })
}

pub fn ppl(args: PplArgs) -> Result<Outcome> {
    let prompts: Vec<PromptLine> = read_jsonl(&args.prompts)?;
    let scores: Vec<ScoreLine> = read_jsonl(&args.scores)?;
    let (records, failed) = score_prompts(&prompts, &scores);
    for (id, e) in &failed {
        log::warn!("{id}: {e}");
    }
    if let Some(out) = &args.out {
        write_jsonl(out, &records)?;
    }
    let groups = aggregate(&records, &args.group_by);
    match args.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&groups)?),
        OutputFormat::Text => print!("{}", render_table(&args.group_by, &groups)),
    }
    if !failed.is_empty() {
        eprintln!("{} of {} prompts could not be scored", failed.len(), prompts.len());
    }
    Ok(if records.is_empty() { Outcome::Empty } else { Outcome::Done })
}

fn render_table(keys: &[GroupKey], groups: &[GroupSummary]) -> String {
    let mut out = String::from("|");
    for k in keys {
        let _ = write!(out, " {k} |");
    }
    out.push_str(" n | mean ppl | median ppl | pooled ppl |\n|");
    out.push_str(&"---|".repeat(keys.len() + 4));
    out.push('\n');
    for g in groups {
        out.push('|');
        for v in &g.group {
            let _ = write!(out, " {v} |");
        }
        let _ = writeln!(out, " {} | {:.6} | {:.6} | {:.6} |", g.count, g.mean_ppl, g.median_ppl, g.pooled_ppl);
    }
    out
}
