use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::Result;
use astfim_core::{open_corpus, parse};
use clap::Args;
use serde::Serialize;

use crate::{CommonArgs, Outcome, OutputFormat};

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus directory or JSONL file.
    #[arg(env = "ASTFIM_CORPUS")]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: OutputFormat,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Default, Clone, Serialize)]
struct LangStats {
    files: usize,
    bytes: u64,
    parse_valid: usize,
    parse_invalid: usize,
    /// Files with no grammar (plain text, unknown languages).
    unparsed: usize,
}

impl LangStats {
    fn add(&mut self, o: &LangStats) {
        self.files += o.files;
        self.bytes += o.bytes;
        self.parse_valid += o.parse_valid;
        self.parse_invalid += o.parse_invalid;
        self.unparsed += o.unparsed;
    }

    fn validity(&self) -> Option<f64> {
        let n = self.parse_valid + self.parse_invalid;
        (n > 0).then(|| self.parse_valid as f64 / n as f64)
    }
}

#[derive(Serialize)]
struct Report {
    languages: BTreeMap<String, LangStats>,
    total: LangStats,
    parse_validity_rate: Option<f64>,
    unreadable: usize,
}

pub fn run(args: StatsArgs) -> Result<Outcome> {
    let cfg = args.common.resolve()?;
    let mut languages: BTreeMap<String, LangStats> = BTreeMap::new();
    let mut unreadable = 0;
    for doc in open_corpus(&args.corpus, &cfg.registry())? {
        let doc = match doc {
            Ok(d) => d,
            Err(e) if e.is_per_document() => {
                log::warn!("skipping document: {e}");
                unreadable += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let s = languages.entry(doc.lang.to_string()).or_default();
        s.files += 1;
        s.bytes += doc.content.len() as u64;
        match parse(&doc) {
            Ok(t) if t.has_error() => s.parse_invalid += 1,
            Ok(_) => s.parse_valid += 1,
            Err(_) => s.unparsed += 1,
        }
    }
    let mut total = LangStats::default();
    for s in languages.values() {
        total.add(s);
    }
    let report = Report { parse_validity_rate: total.validity(), languages, total, unreadable };
    match args.format {
        OutputFormat::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        OutputFormat::Text => print!("{}", render(&report)),
    }
    Ok(Outcome::Done)
}

fn render(r: &Report) -> String {
    let mut out = String::from("| lang | files | bytes | parse valid | parse invalid | no grammar | validity |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    let rows = r.languages.iter().map(|(k, v)| (k.as_str(), v)).chain([("total", &r.total)]);
    for (name, s) in rows {
        let rate = s.validity().map_or("-".to_string(), |v| format!("{:.1}%", v * 100.0));
        let _ = writeln!(
            out,
            "| {name} | {} | {} | {} | {} | {} | {rate} |",
            s.files, s.bytes, s.parse_valid, s.parse_invalid, s.unparsed
        );
    }
    if r.unreadable > 0 {
        let _ = writeln!(out, "{} unreadable files skipped", r.unreadable);
    }
    out
}
