//! Training-record generation: prefix/middle/suffix splitting, PSM/SPM
//! rendering and the FIM/L2R mixing policy applied per context chunk.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::masking::{rand_char_mask, select_mask, MaskConfig, MaskSpan, MaskStrategy};
use crate::syntax::{CharSpan, LanguageId, SourceDocument, SyntaxTree};

/// The four sentinel strings framing a FIM record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentinelSet {
    pub pre: String,
    pub suf: String,
    pub mid: String,
    pub eot: String,
}

impl Default for SentinelSet {
    fn default() -> Self {
        SentinelSet {
            pre: "[PRE]".into(),
            suf: "[SUF]".into(),
            mid: "[MID]".into(),
            eot: "[EOT]".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SentinelError {
    #[error("sentinel `{0}` is empty")]
    Empty(&'static str),
    #[error("sentinels `{0}` and `{1}` overlap")]
    Overlap(String, String),
}

impl SentinelSet {
    fn all(&self) -> [(&'static str, &str); 4] {
        [("pre", &self.pre), ("suf", &self.suf), ("mid", &self.mid), ("eot", &self.eot)]
    }

    /// Sentinels must be non-empty, distinct, and none may contain another.
    pub fn validate(&self) -> Result<(), SentinelError> {
        let all = self.all();
        for (name, s) in all {
            if s.is_empty() {
                return Err(SentinelError::Empty(name));
            }
        }
        for (i, (_, a)) in all.iter().enumerate() {
            for (j, (_, b)) in all.iter().enumerate() {
                if i != j && a.contains(*b) {
                    return Err(SentinelError::Overlap(a.to_string(), b.to_string()));
                }
            }
        }
        Ok(())
    }

    /// Whether any sentinel appears verbatim in `text`.
    pub fn occurs_in(&self, text: &str) -> bool {
        self.all().iter().any(|(_, s)| text.contains(*s))
    }

    fn overhead(&self) -> usize {
        self.all().iter().map(|(_, s)| s.chars().count()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FimMode {
    Psm,
    Spm,
}

impl FimMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FimMode::Psm => "psm",
            FimMode::Spm => "spm",
        }
    }
}

/// One prefix/middle/suffix split borrowed from its source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FimExample<'a> {
    pub prefix: &'a str,
    pub middle: &'a str,
    pub suffix: &'a str,
    pub mode: FimMode,
    pub lang: LanguageId,
    pub strategy: MaskStrategy,
    pub node_kinds: Vec<String>,
}

/// Byte-exact three-way split at the mask boundaries.
pub fn split_document(content: &str, mask: CharSpan) -> (&str, &str, &str) {
    (&content[..mask.start], &content[mask.start..mask.end], &content[mask.end..])
}

/// `pre prefix suf suffix mid middle eot`
pub fn render_psm(prefix: &str, middle: &str, suffix: &str, s: &SentinelSet) -> String {
    let mut out = String::with_capacity(prefix.len() + middle.len() + suffix.len() + 32);
    for part in [&s.pre[..], prefix, &s.suf, suffix, &s.mid, middle, &s.eot] {
        out.push_str(part);
    }
    out
}

/// `pre suf suffix mid prefix middle eot`
pub fn render_spm(prefix: &str, middle: &str, suffix: &str, s: &SentinelSet) -> String {
    let mut out = String::with_capacity(prefix.len() + middle.len() + suffix.len() + 32);
    for part in [&s.pre[..], &s.suf, suffix, &s.mid, prefix, middle, &s.eot] {
        out.push_str(part);
    }
    out
}

pub fn render(ex: &FimExample<'_>, s: &SentinelSet) -> String {
    match ex.mode {
        FimMode::Psm => render_psm(ex.prefix, ex.middle, ex.suffix, s),
        FimMode::Spm => render_spm(ex.prefix, ex.middle, ex.suffix, s),
    }
}

/// Recovers `(prefix, middle, suffix)` from a rendered record.
///
/// SPM places prefix and middle next to each other, so the prefix length
/// (the record's `mask_start`) is needed to separate them. Returns `None`
/// when the text does not have the expected sentinel layout.
pub fn unrender<'a>(
    text: &'a str,
    mode: FimMode,
    prefix_len: usize,
    s: &SentinelSet,
) -> Option<(&'a str, &'a str, &'a str)> {
    let body = text.strip_prefix(s.pre.as_str())?.strip_suffix(s.eot.as_str())?;
    match mode {
        FimMode::Psm => {
            let (prefix, rest) = body.split_once(s.suf.as_str())?;
            let (suffix, middle) = rest.split_once(s.mid.as_str())?;
            Some((prefix, middle, suffix))
        }
        FimMode::Spm => {
            let rest = body.strip_prefix(s.suf.as_str())?;
            let (suffix, joined) = rest.split_once(s.mid.as_str())?;
            if prefix_len > joined.len() || !joined.is_char_boundary(prefix_len) {
                return None;
            }
            let (prefix, middle) = joined.split_at(prefix_len);
            Some((prefix, middle, suffix))
        }
    }
}

/// Counts the length units that bound a context chunk.
pub trait UnitCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;

    /// Byte length of the longest prefix of `text` holding at most
    /// `budget` units. Must land on a code-point boundary.
    fn prefix_within(&self, text: &str, budget: usize) -> usize;
}

/// Counts Unicode code points.
#[derive(Debug, Clone, Copy, Default)]
pub struct CodePoints;

impl UnitCounter for CodePoints {
    fn count(&self, text: &str) -> usize {
        text.chars().count()
    }

    fn prefix_within(&self, text: &str, budget: usize) -> usize {
        text.char_indices().nth(budget).map_or(text.len(), |(i, _)| i)
    }
}

/// Splits `content` into consecutive spans of at most `budget` units.
/// An empty document yields no chunks.
pub fn chunk_document(content: &str, budget: usize, counter: &dyn UnitCounter) -> Vec<CharSpan> {
    assert!(budget >= 1, "chunk budget must be positive");
    let mut chunks = Vec::new();
    let mut start = 0;
    while start < content.len() {
        let mut take = counter.prefix_within(&content[start..], budget);
        if take == 0 {
            // a single unit wider than the budget still has to go somewhere
            take = content[start..].chars().next().map_or(0, char::len_utf8);
        }
        chunks.push(CharSpan::new(start, start + take));
        start += take;
    }
    chunks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixConfig {
    /// Probability that a chunk becomes a FIM record (the FIM rate).
    pub fim_rate: f64,
    /// Probability of a syntax-aware mask among FIM records of parse-valid code.
    pub ast_fraction: f64,
    pub psm_fraction: f64,
    pub mask: MaskConfig,
    /// Maximum chunk length in units (code points by default).
    pub context_budget: usize,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            fim_rate: 0.7,
            ast_fraction: 0.9,
            psm_fraction: 0.5,
            mask: MaskConfig::default(),
            context_budget: 8192,
        }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("fim_rate", self.fim_rate),
            ("ast_fraction", self.ast_fraction),
            ("psm_fraction", self.psm_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.context_budget == 0 {
            return Err("context_budget must be positive".into());
        }
        self.mask.validate()
    }

    /// Upper bound on a record's length in units.
    pub fn max_record_units(&self, s: &SentinelSet) -> usize {
        self.context_budget + s.overhead()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Fim,
    L2r,
}

/// One line of the training JSONL stream. Mask offsets are byte offsets
/// relative to the chunk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub kind: RecordKind,
    pub text: String,
    pub lang: LanguageId,
    pub strategy: Option<MaskStrategy>,
    pub mode: Option<FimMode>,
    pub source_id: String,
    pub mask_start: Option<usize>,
    pub mask_end: Option<usize>,
}

/// Parse state of the document a chunk belongs to.
#[derive(Debug, Clone, Copy)]
pub enum ParseContext<'a> {
    Valid(&'a SyntaxTree),
    /// Parsed, but with error nodes.
    Invalid,
    Unsupported,
    NaturalLanguage,
}

impl<'a> ParseContext<'a> {
    fn tree(&self) -> Option<&'a SyntaxTree> {
        match self {
            ParseContext::Valid(t) => Some(t),
            _ => None,
        }
    }
}

/// What happened while transforming a chunk, for statistics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TransformNotes {
    /// The draw asked for a syntax-aware mask.
    pub ast_requested: bool,
    /// ...but random characters were used instead.
    pub fell_back: bool,
    /// Masking failed entirely and the chunk was emitted as L2R.
    pub degenerate: bool,
}

/// Turns one chunk of `doc` into a training record.
///
/// Draws in a fixed order: FIM vs L2R, syntax-aware vs random, PSM vs SPM,
/// then the mask itself. Natural-language documents are always L2R.
pub fn transform<R: Rng + ?Sized>(
    doc: &SourceDocument,
    chunk: CharSpan,
    parse: ParseContext<'_>,
    cfg: &MixConfig,
    sentinels: &SentinelSet,
    source_id: &str,
    rng: &mut R,
) -> (TrainingRecord, TransformNotes) {
    let text = chunk.slice(&doc.content);
    let l2r = || TrainingRecord {
        kind: RecordKind::L2r,
        text: format!("{text}{}", sentinels.eot),
        lang: doc.lang.clone(),
        strategy: None,
        mode: None,
        source_id: source_id.to_string(),
        mask_start: None,
        mask_end: None,
    };
    let mut notes = TransformNotes::default();
    if matches!(parse, ParseContext::NaturalLanguage) || chunk.is_empty() {
        return (l2r(), notes);
    }
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let w: f64 = rng.random();
    if u >= cfg.fim_rate {
        return (l2r(), notes);
    }
    notes.ast_requested = v < cfg.ast_fraction;
    let mode = if w < cfg.psm_fraction { FimMode::Psm } else { FimMode::Spm };

    let masked = if notes.ast_requested {
        select_mask(&doc.content, parse.tree(), chunk, &cfg.mask, rng)
    } else {
        rand_char_mask(&doc.content, chunk, rng)
    };
    let MaskSpan { span, strategy, .. } = match masked {
        Ok(m) => m,
        Err(e) => {
            log::debug!("{source_id}: {e}; emitting L2R");
            notes.degenerate = true;
            return (l2r(), notes);
        }
    };
    notes.fell_back = notes.ast_requested && !strategy.is_syntax_aware();

    let local = CharSpan::new(span.start - chunk.start, span.end - chunk.start);
    let (prefix, middle, suffix) = split_document(text, local);
    let rendered = match mode {
        FimMode::Psm => render_psm(prefix, middle, suffix, sentinels),
        FimMode::Spm => render_spm(prefix, middle, suffix, sentinels),
    };
    let record = TrainingRecord {
        kind: RecordKind::Fim,
        text: rendered,
        lang: doc.lang.clone(),
        strategy: Some(strategy),
        mode: Some(mode),
        source_id: source_id.to_string(),
        mask_start: Some(local.start),
        mask_end: Some(local.end),
    };
    (record, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamRng;
    use crate::syntax::parse;
    use proptest::prelude::*;

    #[test]
    fn split_examples() {
        assert_eq!(split_document("abcdef", CharSpan::new(2, 4)), ("ab", "cd", "ef"));
        assert_eq!(split_document("abcdef", CharSpan::new(0, 6)), ("", "abcdef", ""));
    }

    #[test]
    fn psm_and_spm_layouts() {
        let s = SentinelSet::default();
        assert_eq!(render_psm("a", "b", "c", &s), "[PRE]a[SUF]c[MID]b[EOT]");
        assert_eq!(render_psm("a", "b", "", &s), "[PRE]a[SUF][MID]b[EOT]");
        assert_eq!(render_spm("a", "b", "c", &s), "[PRE][SUF]c[MID]ab[EOT]");
        assert_eq!(render_spm("", "", "", &s), "[PRE][SUF][MID][EOT]");
    }

    #[test]
    fn sentinel_validation() {
        assert!(SentinelSet::default().validate().is_ok());
        let bad = SentinelSet { mid: "[PRE]x".into(), ..SentinelSet::default() };
        assert!(matches!(bad.validate(), Err(SentinelError::Overlap(..))));
        let empty = SentinelSet { eot: String::new(), ..SentinelSet::default() };
        assert_eq!(empty.validate(), Err(SentinelError::Empty("eot")));
    }

    #[test]
    fn chunk_sizes() {
        let spans = chunk_document("abcdefghij", 4, &CodePoints);
        let lens: Vec<_> = spans.iter().map(|c| c.len()).collect();
        assert_eq!(lens, [4, 4, 2]);
        assert_eq!(chunk_document("abc", 10, &CodePoints), [CharSpan::new(0, 3)]);
        assert!(chunk_document("", 10, &CodePoints).is_empty());
        // budget counts code points, not bytes
        let spans = chunk_document("ééé", 2, &CodePoints);
        assert_eq!(spans, [CharSpan::new(0, 4), CharSpan::new(4, 6)]);
    }

    #[test]
    fn zero_fim_rate_is_all_l2r() {
        let src = "def f(x):\n    return x\n";
        let doc = SourceDocument::new("a.py", LanguageId::new("python"), src);
        let tree = parse(&doc).unwrap();
        let cfg = MixConfig { fim_rate: 0.0, ..MixConfig::default() };
        let s = SentinelSet::default();
        for i in 0..100 {
            let mut rng = StreamRng::new(i, "a.py#0");
            let (r, _) = transform(&doc, CharSpan::full(src), ParseContext::Valid(&tree), &cfg, &s, "a.py#0", &mut rng);
            assert_eq!(r.kind, RecordKind::L2r);
            assert_eq!(r.text, format!("{src}[EOT]"));
        }
    }

    #[test]
    fn natural_language_is_l2r() {
        let doc = SourceDocument::new("README.md", LanguageId::new("markdown"), "# hi\n");
        let cfg = MixConfig { fim_rate: 1.0, ..MixConfig::default() };
        let mut rng = StreamRng::new(0, "r");
        let (r, _) = transform(&doc, CharSpan::full(&doc.content), ParseContext::NaturalLanguage, &cfg, &SentinelSet::default(), "r", &mut rng);
        assert_eq!(r.kind, RecordKind::L2r);
    }

    proptest! {
        #[test]
        fn chunks_concatenate(text in "\\PC{0,200}", budget in 1usize..40) {
            let spans = chunk_document(&text, budget, &CodePoints);
            let joined: String = spans.iter().map(|c| c.slice(&text)).collect();
            prop_assert_eq!(joined, text.clone());
            for c in &spans {
                prop_assert!(c.slice(&text).chars().count() <= budget);
            }
        }

        #[test]
        fn split_round_trips(text in "\\PC{0,80}", a in 0usize..100, b in 0usize..100) {
            let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
            let x = bounds[a % bounds.len()];
            let y = bounds[b % bounds.len()];
            let (p, m, s) = split_document(&text, CharSpan::new(x.min(y), x.max(y)));
            prop_assert_eq!(format!("{p}{m}{s}"), text);
        }

        #[test]
        fn unrender_inverts_render(p in "[^\\[\\]]{0,30}", m in "[^\\[\\]]{0,30}", s in "[^\\[\\]]{0,30}", psm in any::<bool>()) {
            let set = SentinelSet::default();
            let (mode, text) = if psm {
                (FimMode::Psm, render_psm(&p, &m, &s, &set))
            } else {
                (FimMode::Spm, render_spm(&p, &m, &s, &set))
            };
            let got = unrender(&text, mode, p.len(), &set).unwrap();
            prop_assert_eq!(got, (p.as_str(), m.as_str(), s.as_str()));
        }
    }
}
