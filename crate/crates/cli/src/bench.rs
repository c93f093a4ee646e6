use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use astfim_core::benchgen::{
    build_benchmark, commit_pairs_from_dir, commit_pairs_from_git, discover_repos, ContextWindow, IngestError,
    REFERENCE_COUNTS,
};
use astfim_core::{BenchFilters, BenchStats, CommitFilePair, LanguageId};
use chrono::NaiveDate;
use clap::Args;
use serde::Serialize;

use crate::config::{file_digest, sidecar, write_json, InputDigest, Manifest, StreamDigest};
use crate::{CommonArgs, Outcome};

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// A local clone, or a directory whose subdirectories are clones.
    #[arg(long, env = "ASTFIM_REPOS", conflicts_with = "pairs", required_unless_present = "pairs")]
    pub repos: Option<PathBuf>,
    /// JSONL of commit-file pairs, or a directory of before/after cases.
    #[arg(long, env = "ASTFIM_PAIRS")]
    pub pairs: Option<PathBuf>,
    /// First commit date to include (YYYY-MM-DD).
    #[arg(long)]
    pub since: Option<NaiveDate>,
    /// Last commit date to include (YYYY-MM-DD).
    #[arg(long)]
    pub until: Option<NaiveDate>,
    /// Comma-separated languages to keep.
    #[arg(long, value_delimiter = ',')]
    pub langs: Option<Vec<String>>,
    /// Lines of context on each side of the hunk; full file when omitted.
    #[arg(long)]
    pub context_lines: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_middle_chars: usize,
    #[arg(long)]
    pub max_middle_chars: Option<usize>,
    /// Output JSONL of benchmark examples.
    #[arg(long, short, env = "ASTFIM_OUT")]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct Params<'a> {
    filters: &'a BenchFilters,
    source: String,
}

#[derive(Serialize)]
struct StatsFile<'a> {
    #[serde(flatten)]
    stats: &'a BenchStats,
    total: astfim_core::benchgen::SplitCounts,
    /// Published benchmark size, for comparison only.
    reference: astfim_core::benchgen::SplitCounts,
}

type Pairs = Vec<Result<CommitFilePair, IngestError>>;

pub fn run(args: BuildArgs) -> Result<Outcome> {
    let cfg = args.common.resolve()?;
    cfg.validate()?;
    let registry = cfg.registry();
    let filters = BenchFilters {
        langs: args.langs.as_ref().map(|l| l.iter().map(LanguageId::new).collect()),
        min_middle_chars: args.min_middle_chars,
        max_middle_chars: args.max_middle_chars,
        since: args.since,
        until: args.until,
        context: args.context_lines.map_or(ContextWindow::Full, ContextWindow::Lines),
    };

    let (pairs, inputs, source) = match (&args.repos, &args.pairs) {
        (Some(root), _) => {
            let repos = discover_repos(root)?;
            if repos.is_empty() {
                bail!("no git clones found under {}", root.display());
            }
            let mut all = Vec::new();
            let mut inputs = Vec::new();
            for repo in &repos {
                let pairs = commit_pairs_from_git(repo, args.since, args.until, &registry)?;
                inputs.push(digest_pairs(repo, &pairs));
                all.extend(pairs);
            }
            (all, inputs, root.display().to_string())
        }
        (None, Some(p)) if p.is_dir() => {
            let pairs = commit_pairs_from_dir(p, &registry)?;
            let d = digest_pairs(p, &pairs);
            (pairs, vec![d], p.display().to_string())
        }
        (None, Some(p)) => (read_pairs_jsonl(p)?, vec![file_digest(p)?], p.display().to_string()),
        (None, None) => bail!("one of --repos or --pairs is required"),
    };

    let (examples, stats) = build_benchmark(pairs, &filters, &registry);
    let f = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = BufWriter::new(f);
    for ex in &examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush().with_context(|| format!("writing {}", args.out.display()))?;

    let stats_path = sidecar(&args.out, "stats.json");
    write_json(&stats_path, &StatsFile { stats: &stats, total: stats.total(), reference: REFERENCE_COUNTS })?;
    let table = stats.render_table();
    let table_path = sidecar(&args.out, "table.md");
    std::fs::write(&table_path, &table).with_context(|| format!("writing {}", table_path.display()))?;
    let mut m = Manifest::new("bench build", &cfg, Params { filters: &filters, source });
    m.inputs = inputs;
    m.outputs = [&args.out, &stats_path, &table_path].iter().map(|p| p.display().to_string()).collect();
    write_json(&sidecar(&args.out, "manifest.json"), &m)?;

    let total = stats.total();
    print!("{table}");
    println!(
        "{} add, {} edit (reference: {} add, {} edit)",
        total.add, total.edit, REFERENCE_COUNTS.add, REFERENCE_COUNTS.edit
    );
    Ok(if examples.is_empty() { Outcome::Empty } else { Outcome::Done })
}

fn digest_pairs(path: &Path, pairs: &Pairs) -> InputDigest {
    let mut d = StreamDigest::new();
    for p in pairs.iter().flatten() {
        let name = format!("{}@{}:{}", p.repo, p.sha, p.path);
        d.update(&name, p.before.as_bytes());
        d.update(&name, p.after.as_bytes());
    }
    d.finish(path)
}

fn read_pairs_jsonl(path: &Path) -> Result<Pairs> {
    let f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str::<CommitFilePair>(&line)
                .map_err(|e| IngestError::Invalid(format!("{}:{}: {e}", path.display(), i + 1))),
        );
    }
    Ok(out)
}
