use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use astfim_core::masking::{aligned_span_mask, rand_char_mask, select_mask, single_node_mask};
use astfim_core::{CharSpan, LanguageId, MaskSpan, SourceDocument, StreamRng};
use clap::{Args, ValueEnum};
use serde::Serialize;

use crate::{CommonArgs, Outcome, OutputFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// The generation policy: syntax-aware when the file parses.
    Auto,
    #[value(name = "single_node")]
    SingleNode,
    #[value(name = "aligned_span")]
    AlignedSpan,
    #[value(name = "rand_char")]
    RandChar,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    pub file: PathBuf,
    /// Language; detected from the extension when omitted.
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long, value_enum, default_value = "auto")]
    pub strategy: StrategyArg,
    /// Number of masks to draw.
    #[arg(long, short, default_value_t = 1)]
    pub n: usize,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    /// Characters of context shown around each mask.
    #[arg(long, default_value_t = 40)]
    pub context: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Serialize)]
struct MaskLine<'a> {
    index: usize,
    strategy: &'static str,
    start: usize,
    end: usize,
    node_kinds: &'a [String],
    middle: &'a str,
}

#[derive(Serialize)]
struct Report<'a> {
    file: String,
    lang: &'a LanguageId,
    parse_valid: bool,
    seed: u64,
    masks: Vec<MaskLine<'a>>,
}

pub fn run(args: MaskArgs) -> Result<Outcome> {
    let cfg = args.common.resolve()?;
    cfg.validate()?;
    let bytes = std::fs::read(&args.file).with_context(|| format!("reading {}", args.file.display()))?;
    let lang = match &args.lang {
        Some(l) => LanguageId::new(l),
        None => cfg.registry().detect(&args.file).unwrap_or_else(LanguageId::unknown),
    };
    let doc = SourceDocument::from_bytes(args.file.display().to_string(), lang, bytes)?;
    let tree = astfim_core::parse(&doc).ok().filter(|t| !t.has_error());
    if matches!(args.strategy, StrategyArg::SingleNode | StrategyArg::AlignedSpan) && tree.is_none() {
        bail!("{} does not parse as {}; use --strategy rand_char or auto", doc.path, doc.lang);
    }
    let region = CharSpan::full(&doc.content);
    let mut masks: Vec<MaskSpan> = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let mut rng = StreamRng::new(cfg.seed, &format!("mask#{i}"));
        let m = match args.strategy {
            StrategyArg::Auto => select_mask(&doc.content, tree.as_ref(), region, &cfg.mix.mask, &mut rng),
            StrategyArg::SingleNode => single_node_mask(tree.as_ref().expect("checked"), region, &mut rng),
            StrategyArg::AlignedSpan => {
                aligned_span_mask(tree.as_ref().expect("checked"), &doc.content, region, &cfg.mix.mask, &mut rng)
            }
            StrategyArg::RandChar => rand_char_mask(&doc.content, region, &mut rng),
        };
        match m {
            Ok(m) => masks.push(m),
            Err(e) => log::warn!("draw {i}: {e}"),
        }
    }
    let report = Report {
        file: doc.path.clone(),
        lang: &doc.lang,
        parse_valid: tree.is_some(),
        seed: cfg.seed,
        masks: masks
            .iter()
            .enumerate()
            .map(|(index, m)| MaskLine {
                index,
                strategy: m.strategy.as_str(),
                start: m.span.start,
                end: m.span.end,
                node_kinds: &m.node_kinds,
                middle: m.span.slice(&doc.content),
            })
            .collect(),
    };
    match args.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutputFormat::Text => print!("{}", render_text(&report, &doc.content, args.context)),
    }
    Ok(if masks.is_empty() { Outcome::Empty } else { Outcome::Done })
}

fn render_text(r: &Report<'_>, content: &str, context: usize) -> String {
    let mut out = format!(
        "{} ({}, {}) seed {}\n",
        r.file,
        r.lang,
        if r.parse_valid { "parses" } else { "does not parse" },
        r.seed
    );
    for m in &r.masks {
        let kinds = if m.node_kinds.is_empty() { "-".to_string() } else { m.node_kinds.join(" ") };
        let _ = writeln!(out, "[{}] {} [{}, {}) {}", m.index, m.strategy, m.start, m.end, kinds);
        let before: String = {
            let tail: Vec<char> = content[..m.start].chars().rev().take(context).collect();
            tail.into_iter().rev().collect()
        };
        let after: String = content[m.end..].chars().take(context).collect();
        let _ = writeln!(
            out,
            "    {}\u{27e6}{}\u{27e7}{}",
            before.escape_debug(),
            m.middle.escape_debug(),
            after.escape_debug()
        );
    }
    out
}
