//! Character-level perplexity of ground-truth middles.
//!
//! Models are kept out of process: the harness writes prompts as JSONL
//! (`{id, prompt, middle, ...}`) and reads back per-token log-probabilities
//! (`{id, tokens: [{text, logprob}]}`). Token texts must be clipped to the
//! middle; a token straddling the boundary keeps its full log-probability.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchgen::{prompt_context, BenchExample, ConflictMarkers};
use crate::fimgen::{FimExample, SentinelSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub text: String,
    /// Natural-log probability.
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("middle is empty")]
    EmptyMiddle,
    #[error("token texts do not reassemble the middle")]
    CoverageMismatch,
    #[error("token {0} has positive or non-finite log-probability {1}")]
    InvalidLogprob(usize, f64),
    #[error("token {0} has empty text")]
    EmptyToken(usize),
}

/// Token scores covering exactly one middle.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMiddle {
    pub id: String,
    pub scores: Vec<TokenScore>,
    /// Code points in the middle.
    pub middle_char_count: usize,
}

impl ScoredMiddle {
    /// Checks that the tokens tile `middle` and carry valid log-probabilities.
    pub fn new(id: impl Into<String>, middle: &str, scores: Vec<TokenScore>) -> Result<Self, EvalError> {
        if middle.is_empty() {
            return Err(EvalError::EmptyMiddle);
        }
        let mut rest = middle;
        for (i, t) in scores.iter().enumerate() {
            if t.text.is_empty() {
                return Err(EvalError::EmptyToken(i));
            }
            if t.logprob.is_nan() || t.logprob > 0.0 {
                return Err(EvalError::InvalidLogprob(i, t.logprob));
            }
            rest = rest.strip_prefix(t.text.as_str()).ok_or(EvalError::CoverageMismatch)?;
        }
        if !rest.is_empty() {
            return Err(EvalError::CoverageMismatch);
        }
        Ok(ScoredMiddle { id: id.into(), scores, middle_char_count: middle.chars().count() })
    }

    pub fn total_logprob(&self) -> f64 {
        self.scores.iter().map(|t| t.logprob).sum()
    }
}

/// `exp(-(sum of token log-probs) / characters in the middle)`
pub fn char_ppl(sm: &ScoredMiddle) -> Result<f64, EvalError> {
    if sm.middle_char_count == 0 {
        return Err(EvalError::EmptyMiddle);
    }
    Ok((-sm.total_logprob() / sm.middle_char_count as f64).exp())
}

/// Per-example result carried into aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplRecord {
    pub id: String,
    pub split: Option<String>,
    pub lang: Option<String>,
    pub ppl: f64,
    pub total_logprob: f64,
    pub chars: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKey {
    Split,
    Lang,
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroupKey::Split => "split",
            GroupKey::Lang => "lang",
        })
    }
}

impl std::str::FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "split" => Ok(GroupKey::Split),
            "lang" | "language" => Ok(GroupKey::Lang),
            other => Err(format!("unknown group key `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// One value per requested key, `"*"` when the record lacks it.
    pub group: Vec<String>,
    pub count: usize,
    /// Arithmetic mean of per-example perplexities.
    pub mean_ppl: f64,
    pub median_ppl: f64,
    /// Corpus-level perplexity: total log-prob over total characters.
    pub pooled_ppl: f64,
}

/// Groups records by `keys` (all records form one group when `keys` is
/// empty). Groups come out sorted by key values.
pub fn aggregate(records: &[PplRecord], keys: &[GroupKey]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<Vec<String>, Vec<&PplRecord>> = BTreeMap::new();
    for r in records {
        let group = keys
            .iter()
            .map(|k| {
                let v = match k {
                    GroupKey::Split => &r.split,
                    GroupKey::Lang => &r.lang,
                };
                v.clone().unwrap_or_else(|| "*".into())
            })
            .collect();
        groups.entry(group).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(group, rs)| {
            let mut ppls: Vec<f64> = rs.iter().map(|r| r.ppl).collect();
            ppls.sort_by(f64::total_cmp);
            let n = ppls.len();
            let median = if n % 2 == 1 { ppls[n / 2] } else { (ppls[n / 2 - 1] + ppls[n / 2]) / 2.0 };
            let lp: f64 = rs.iter().map(|r| r.total_logprob).sum();
            let chars: usize = rs.iter().map(|r| r.chars).sum();
            GroupSummary {
                group,
                count: n,
                mean_ppl: ppls.iter().sum::<f64>() / n as f64,
                median_ppl: median,
                pooled_ppl: (-lp / chars.max(1) as f64).exp(),
            }
        })
        .collect()
}

/// Anything with a prefix and a suffix around a middle to fill.
pub trait InfillContext {
    fn prefix(&self) -> &str;
    fn suffix(&self) -> &str;
}

impl InfillContext for FimExample<'_> {
    fn prefix(&self) -> &str {
        self.prefix
    }

    fn suffix(&self) -> &str {
        self.suffix
    }
}

impl InfillContext for BenchExample {
    fn prefix(&self) -> &str {
        &self.prefix
    }

    fn suffix(&self) -> &str {
        &self.suffix
    }
}

/// Prompt for models trained without sentinels: the suffix, two newlines,
/// then the prefix. The model continues with the middle.
pub fn render_l2r_prompt(ex: &impl InfillContext) -> String {
    format!("{}\n\n{}", ex.suffix(), ex.prefix())
}

/// Prompt layout used when exporting a benchmark for scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptFormat {
    /// Sentinel PSM prompt (conflict-merge layout for edits).
    Psm,
    /// Suffix, blank line, prefix; no sentinels.
    L2r,
}

impl std::str::FromStr for PromptFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "psm" => Ok(PromptFormat::Psm),
            "l2r" => Ok(PromptFormat::L2r),
            other => Err(format!("unknown prompt format `{other}`")),
        }
    }
}

/// One line of the prompt file handed to an external scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptLine {
    pub id: String,
    pub prompt: String,
    pub middle: String,
    #[serde(default)]
    pub split: Option<String>,
    #[serde(default)]
    pub lang: Option<String>,
}

/// One line of the score file returned by an external scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub id: String,
    pub tokens: Vec<TokenScore>,
}

pub fn prompt_line(ex: &BenchExample, format: PromptFormat, s: &SentinelSet, m: &ConflictMarkers) -> PromptLine {
    let prompt = match format {
        PromptFormat::Psm => crate::benchgen::render_conflict_prompt(ex, s, m),
        PromptFormat::L2r => {
            let (prefix, suffix) = prompt_context(ex, m);
            format!("{suffix}\n\n{prefix}")
        }
    };
    PromptLine {
        id: ex.id.clone(),
        prompt,
        middle: ex.middle.clone(),
        split: Some(ex.split.as_str().to_string()),
        lang: Some(ex.metadata.lang.to_string()),
    }
}

/// Scores every prompt that has a matching score line. Prompts without
/// scores and invalid score lines are reported as errors per id.
pub fn score_prompts(
    prompts: &[PromptLine],
    scores: &[ScoreLine],
) -> (Vec<PplRecord>, Vec<(String, EvalError)>) {
    let by_id: HashMap<&str, &ScoreLine> = scores.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for p in prompts {
        let Some(s) = by_id.get(p.id.as_str()) else {
            failed.push((p.id.clone(), EvalError::CoverageMismatch));
            continue;
        };
        let result = ScoredMiddle::new(&p.id, &p.middle, s.tokens.clone())
            .and_then(|sm| char_ppl(&sm).map(|ppl| (sm, ppl)));
        match result {
            Ok((sm, ppl)) => ok.push(PplRecord {
                id: p.id.clone(),
                split: p.split.clone(),
                lang: p.lang.clone(),
                ppl,
                total_logprob: sm.total_logprob(),
                chars: sm.middle_char_count,
            }),
            Err(e) => failed.push((p.id.clone(), e)),
        }
    }
    (ok, failed)
}

/// Add-k smoothed character n-gram model, a stand-in scorer that lets the
/// evaluation run end to end without a neural model.
#[derive(Debug, Clone)]
pub struct CharNgram {
    order: usize,
    k: f64,
    counts: HashMap<String, HashMap<char, u64>>,
    totals: HashMap<String, u64>,
    vocab: HashSet<char>,
}

impl CharNgram {
    pub fn fit(context: &str, order: usize, k: f64) -> Self {
        assert!(order >= 1, "n-gram order must be at least 1");
        assert!(k > 0.0, "smoothing constant must be positive");
        let chars: Vec<char> = context.chars().collect();
        let mut model = CharNgram {
            order,
            k,
            counts: HashMap::new(),
            totals: HashMap::new(),
            vocab: chars.iter().copied().collect(),
        };
        for i in 0..chars.len() {
            let h = model.history(&chars[..i]);
            *model.counts.entry(h.clone()).or_default().entry(chars[i]).or_default() += 1;
            *model.totals.entry(h).or_default() += 1;
        }
        model
    }

    fn history(&self, before: &[char]) -> String {
        let n = self.order - 1;
        before[before.len().saturating_sub(n)..].iter().collect()
    }

    fn logprob(&self, history: &str, c: char, vocab_size: usize) -> f64 {
        let count = self.counts.get(history).and_then(|m| m.get(&c)).copied().unwrap_or(0) as f64;
        let total = self.totals.get(history).copied().unwrap_or(0) as f64;
        ((count + self.k) / (total + self.k * vocab_size as f64)).ln()
    }
}

/// Scores `middle` one character per token with a model fit on `context`.
/// The vocabulary is the set of characters in context and middle; history
/// for each middle character runs back through `context`.
pub fn ngram_score(id: &str, middle: &str, context: &str, order: usize, k: f64) -> Result<ScoredMiddle, EvalError> {
    let model = CharNgram::fit(context, order, k);
    let vocab_size = model.vocab.iter().chain(middle.chars().collect::<HashSet<_>>().iter()).collect::<HashSet<_>>().len();
    let mut seen: Vec<char> = context.chars().collect();
    let mut scores = Vec::with_capacity(middle.len());
    for c in middle.chars() {
        let h = model.history(&seen);
        scores.push(TokenScore { text: c.to_string(), logprob: model.logprob(&h, c, vocab_size).min(0.0) });
        seen.push(c);
    }
    ScoredMiddle::new(id, middle, scores)
}
