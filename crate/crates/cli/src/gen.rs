use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use astfim_core::{open_corpus, GenReport, Generator};
use clap::Args;
use serde::Serialize;

use crate::config::{sidecar, write_json, Manifest, StreamDigest};
use crate::{CommonArgs, Outcome};

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Corpus directory or JSONL file of {path, lang, content}.
    #[arg(env = "ASTFIM_CORPUS")]
    pub corpus: PathBuf,
    /// Output JSONL; `-` writes to stdout.
    #[arg(long, short, env = "ASTFIM_OUT")]
    pub out: PathBuf,
    /// Stats sidecar; defaults to `<out>.stats.json`.
    #[arg(long, env = "ASTFIM_STATS")]
    pub stats: Option<PathBuf>,
    /// Run manifest; defaults to `<out>.manifest.json`.
    #[arg(long, env = "ASTFIM_MANIFEST")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub fim_rate: Option<f64>,
    #[arg(long)]
    pub ast_fraction: Option<f64>,
    #[arg(long)]
    pub psm_fraction: Option<f64>,
    #[arg(long)]
    pub single_node_fraction: Option<f64>,
    /// Chunk size in code points.
    #[arg(long)]
    pub context_budget: Option<usize>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct Params {
    corpus: String,
}

pub fn run(args: GenArgs) -> Result<Outcome> {
    let mut cfg = args.common.resolve()?;
    let overrides = [
        (args.fim_rate, &mut cfg.mix.fim_rate),
        (args.ast_fraction, &mut cfg.mix.ast_fraction),
        (args.psm_fraction, &mut cfg.mix.psm_fraction),
        (args.single_node_fraction, &mut cfg.mix.mask.single_node_fraction),
    ];
    for (flag, slot) in overrides {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(b) = args.context_budget {
        cfg.mix.context_budget = b;
    }
    cfg.validate()?;

    let to_stdout = args.out.as_os_str() == "-";
    let stats_path = args.stats.clone().or_else(|| (!to_stdout).then(|| sidecar(&args.out, "stats.json")));
    let manifest_path = args.manifest.clone().or_else(|| (!to_stdout).then(|| sidecar(&args.out, "manifest.json")));

    let docs = open_corpus(&args.corpus, &cfg.registry())?;
    let mut digest = StreamDigest::new();
    let docs = docs.inspect(|d| {
        if let Ok(d) = d {
            digest.update(&d.path, d.content.as_bytes());
        }
    });
    let generator = Generator::new(cfg.mix.clone(), cfg.sentinels.clone(), cfg.seed);
    let stats = if to_stdout {
        let mut w = BufWriter::new(std::io::stdout().lock());
        let s = generator.write_jsonl(docs, cfg.workers, &mut w)?;
        w.flush()?;
        s
    } else {
        let f = std::fs::File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        let mut w = BufWriter::new(f);
        let s = generator
            .write_jsonl(docs, cfg.workers, &mut w)
            .with_context(|| format!("writing {}", args.out.display()))?;
        w.flush()?;
        s
    };

    let records = stats.records();
    let report = GenReport::from(stats);
    if let Some(p) = &stats_path {
        write_json(p, &report)?;
    }
    if let Some(p) = &manifest_path {
        let mut m = Manifest::new("gen", &cfg, Params { corpus: args.corpus.display().to_string() });
        m.inputs.push(digest.finish(&args.corpus));
        m.outputs = std::iter::once(&args.out).chain(stats_path.iter()).map(|p| p.display().to_string()).collect();
        write_json(p, &m)?;
    }
    log::info!(
        "{} documents, {} records, fim rate {:?}",
        report.counts.documents,
        records,
        report.rates.fim_rate
    );
    Ok(if records == 0 { Outcome::Empty } else { Outcome::Done })
}
