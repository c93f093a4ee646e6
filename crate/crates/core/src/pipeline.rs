//! Corpus-scale generation: parse, chunk, mask and render every document,
//! in parallel, with output order and content independent of worker count.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusError;
use crate::fimgen::{chunk_document, transform, CodePoints, MixConfig, ParseContext, RecordKind, SentinelSet, TrainingRecord, UnitCounter};
use crate::masking::MaskStrategy;
use crate::rng::StreamRng;
use crate::syntax::{parse, ParseError, SourceDocument};

/// Counters accumulated over a generation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenStats {
    pub documents: usize,
    pub unreadable_documents: usize,
    pub chunks: usize,
    pub records_by_kind: BTreeMap<String, usize>,
    pub records_by_strategy: BTreeMap<String, usize>,
    pub records_by_mode: BTreeMap<String, usize>,
    pub records_by_lang: BTreeMap<String, usize>,
    pub docs_parse_valid: usize,
    pub docs_parse_invalid: usize,
    pub docs_unsupported: usize,
    pub docs_natural_language: usize,
    /// Documents containing a sentinel string verbatim.
    pub docs_with_sentinels: usize,
    /// FIM records from parse-valid documents, and how many of those are
    /// syntax-aware.
    pub fim_parse_valid: usize,
    pub ast_parse_valid: usize,
    /// Syntax-aware masks requested but replaced by random characters.
    pub fallbacks: usize,
    /// FIM draws that ended up as L2R because no mask could be drawn.
    pub degenerate: usize,
}

fn bump(map: &mut BTreeMap<String, usize>, key: &str) {
    *map.entry(key.to_string()).or_default() += 1;
}

fn merge_map(into: &mut BTreeMap<String, usize>, from: &BTreeMap<String, usize>) {
    for (k, v) in from {
        *into.entry(k.clone()).or_default() += v;
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Realized mixing ratios.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenRates {
    pub fim_rate: Option<f64>,
    /// Syntax-aware share of all FIM records.
    pub ast_fraction: Option<f64>,
    /// Syntax-aware share of FIM records from parse-valid documents.
    pub ast_fraction_parse_valid: Option<f64>,
    pub psm_fraction: Option<f64>,
    /// Single-node share of syntax-aware records.
    pub single_node_fraction: Option<f64>,
    pub parse_validity_rate: Option<f64>,
}

impl GenStats {
    pub fn merge(&mut self, o: &GenStats) {
        self.documents += o.documents;
        self.unreadable_documents += o.unreadable_documents;
        self.chunks += o.chunks;
        merge_map(&mut self.records_by_kind, &o.records_by_kind);
        merge_map(&mut self.records_by_strategy, &o.records_by_strategy);
        merge_map(&mut self.records_by_mode, &o.records_by_mode);
        merge_map(&mut self.records_by_lang, &o.records_by_lang);
        self.docs_parse_valid += o.docs_parse_valid;
        self.docs_parse_invalid += o.docs_parse_invalid;
        self.docs_unsupported += o.docs_unsupported;
        self.docs_natural_language += o.docs_natural_language;
        self.docs_with_sentinels += o.docs_with_sentinels;
        self.fim_parse_valid += o.fim_parse_valid;
        self.ast_parse_valid += o.ast_parse_valid;
        self.fallbacks += o.fallbacks;
        self.degenerate += o.degenerate;
    }

    fn get(map: &BTreeMap<String, usize>, k: &str) -> usize {
        map.get(k).copied().unwrap_or(0)
    }

    pub fn records(&self) -> usize {
        self.records_by_kind.values().sum()
    }

    pub fn rates(&self) -> GenRates {
        let fim = Self::get(&self.records_by_kind, "fim");
        let single = Self::get(&self.records_by_strategy, MaskStrategy::SingleNode.as_str());
        let aligned = Self::get(&self.records_by_strategy, MaskStrategy::AlignedSpan.as_str());
        GenRates {
            fim_rate: ratio(fim, self.records()),
            ast_fraction: ratio(single + aligned, fim),
            ast_fraction_parse_valid: ratio(self.ast_parse_valid, self.fim_parse_valid),
            psm_fraction: ratio(Self::get(&self.records_by_mode, "psm"), fim),
            single_node_fraction: ratio(single, single + aligned),
            parse_validity_rate: ratio(self.docs_parse_valid, self.docs_parse_valid + self.docs_parse_invalid),
        }
    }
}

/// Stats sidecar written next to generated records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenReport {
    pub counts: GenStats,
    pub rates: GenRates,
}

impl From<GenStats> for GenReport {
    fn from(counts: GenStats) -> Self {
        let rates = counts.rates();
        GenReport { counts, rates }
    }
}

/// Records produced for one document.
#[derive(Debug, Clone, Default)]
pub struct DocumentOutput {
    pub records: Vec<TrainingRecord>,
    pub stats: GenStats,
}

/// Generation settings shared by all workers.
#[derive(Clone)]
pub struct Generator {
    pub mix: MixConfig,
    pub sentinels: SentinelSet,
    pub seed: u64,
    counter: Arc<dyn UnitCounter>,
}

impl Generator {
    pub fn new(mix: MixConfig, sentinels: SentinelSet, seed: u64) -> Self {
        Generator { mix, sentinels, seed, counter: Arc::new(CodePoints) }
    }

    /// Replaces the code-point counter used for chunking.
    pub fn with_counter(mut self, counter: Arc<dyn UnitCounter>) -> Self {
        self.counter = counter;
        self
    }

    /// Parses `doc` once, splits it into context chunks and transforms each
    /// chunk with its own random stream keyed by `path#chunk`.
    pub fn process_document(&self, doc: &SourceDocument) -> DocumentOutput {
        let mut stats = GenStats { documents: 1, ..GenStats::default() };
        let parsed;
        let ctx = if doc.lang.is_natural_language() {
            stats.docs_natural_language += 1;
            ParseContext::NaturalLanguage
        } else {
            parsed = parse(doc);
            match &parsed {
                Ok(t) if !t.has_error() => {
                    stats.docs_parse_valid += 1;
                    ParseContext::Valid(t)
                }
                Ok(_) | Err(ParseError::Aborted) => {
                    stats.docs_parse_invalid += 1;
                    ParseContext::Invalid
                }
                Err(ParseError::Unsupported(_)) => {
                    stats.docs_unsupported += 1;
                    ParseContext::Unsupported
                }
            }
        };
        if self.sentinels.occurs_in(&doc.content) {
            stats.docs_with_sentinels += 1;
        }

        let chunks = chunk_document(&doc.content, self.mix.context_budget, self.counter.as_ref());
        let mut records = Vec::with_capacity(chunks.len());
        for (i, chunk) in chunks.into_iter().enumerate() {
            let source_id = format!("{}#{}", doc.path, i);
            let mut rng = StreamRng::new(self.seed, &source_id);
            let (rec, notes) = transform(doc, chunk, ctx, &self.mix, &self.sentinels, &source_id, &mut rng);
            stats.chunks += 1;
            bump(&mut stats.records_by_kind, if rec.kind == RecordKind::Fim { "fim" } else { "l2r" });
            bump(&mut stats.records_by_lang, rec.lang.as_str());
            if let Some(s) = rec.strategy {
                bump(&mut stats.records_by_strategy, s.as_str());
            }
            if let Some(m) = rec.mode {
                bump(&mut stats.records_by_mode, m.as_str());
            }
            if rec.kind == RecordKind::Fim && matches!(ctx, ParseContext::Valid(_)) {
                stats.fim_parse_valid += 1;
                if rec.strategy.is_some_and(MaskStrategy::is_syntax_aware) {
                    stats.ast_parse_valid += 1;
                }
            }
            stats.fallbacks += notes.fell_back as usize;
            stats.degenerate += notes.degenerate as usize;
            records.push(rec);
        }
        DocumentOutput { records, stats }
    }

    /// Processes a document stream on `workers` threads, handing records to
    /// `sink` in corpus order. Unreadable documents are logged and counted;
    /// corpus-level I/O errors abort the run.
    pub fn run<I, F>(&self, docs: I, workers: usize, mut sink: F) -> io::Result<GenStats>
    where
        I: IntoIterator<Item = Result<SourceDocument, CorpusError>>,
        F: FnMut(&TrainingRecord) -> io::Result<()>,
    {
        const BATCH_BYTES: usize = 8 << 20;
        const BATCH_DOCS: usize = 1024;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(io::Error::other)?;
        let mut stats = GenStats::default();
        let mut batch: Vec<SourceDocument> = Vec::new();
        let mut batch_bytes = 0;
        let mut flush = |batch: &mut Vec<SourceDocument>, stats: &mut GenStats| -> io::Result<()> {
            let outputs: Vec<DocumentOutput> =
                pool.install(|| batch.par_iter().map(|d| self.process_document(d)).collect());
            batch.clear();
            for out in outputs {
                stats.merge(&out.stats);
                for r in &out.records {
                    sink(r)?;
                }
            }
            Ok(())
        };
        for item in docs {
            match item {
                Ok(doc) => {
                    batch_bytes += doc.content.len();
                    batch.push(doc);
                }
                Err(e) if e.is_per_document() => {
                    log::warn!("skipping document: {e}");
                    stats.unreadable_documents += 1;
                    continue;
                }
                Err(CorpusError::Io { path, source }) => {
                    return Err(io::Error::new(source.kind(), format!("{path}: {source}")));
                }
                Err(e) => return Err(io::Error::other(e.to_string())),
            }
            if batch_bytes >= BATCH_BYTES || batch.len() >= BATCH_DOCS {
                flush(&mut batch, &mut stats)?;
                batch_bytes = 0;
            }
        }
        flush(&mut batch, &mut stats)?;
        Ok(stats)
    }

    /// [`Generator::run`] writing one JSON object per line.
    pub fn write_jsonl<I, W>(&self, docs: I, workers: usize, out: &mut W) -> io::Result<GenStats>
    where
        I: IntoIterator<Item = Result<SourceDocument, CorpusError>>,
        W: Write,
    {
        self.run(docs, workers, |r| {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::LanguageId;

    fn docs() -> Vec<SourceDocument> {
        vec![
            SourceDocument::new("a.py", LanguageId::new("python"), "def f(x):\n    return x + 1\n"),
            SourceDocument::new("b.py", LanguageId::new("python"), "def g(:\n"),
            SourceDocument::new("c.cbl", LanguageId::new("cobol"), "MOVE A TO B.\n"),
            SourceDocument::new("d.md", LanguageId::new("markdown"), "# title\n"),
            SourceDocument::new("e.py", LanguageId::new("python"), ""),
        ]
    }

    #[test]
    fn document_classification() {
        let g = Generator::new(MixConfig::default(), SentinelSet::default(), 1);
        let stats = g
            .run(docs().into_iter().map(Ok), 2, |_| Ok(()))
            .unwrap();
        assert_eq!(stats.documents, 5);
        assert_eq!(stats.docs_parse_valid, 2);
        assert_eq!(stats.docs_parse_invalid, 1);
        assert_eq!(stats.docs_unsupported, 1);
        assert_eq!(stats.docs_natural_language, 1);
        assert_eq!(stats.records(), 4);
        assert_eq!(stats.rates().parse_validity_rate, Some(2.0 / 3.0));
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let g = Generator::new(MixConfig { fim_rate: 1.0, ..MixConfig::default() }, SentinelSet::default(), 9);
        let mut one = Vec::new();
        let mut four = Vec::new();
        g.write_jsonl(docs().into_iter().map(Ok), 1, &mut one).unwrap();
        g.write_jsonl(docs().into_iter().map(Ok), 4, &mut four).unwrap();
        assert_eq!(one, four);
        assert!(!one.is_empty());
    }
}
