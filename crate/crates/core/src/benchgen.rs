//! Code-completion benchmark examples derived from commit history.
//!
//! Each changed file in a commit is line-diffed. Pure insertions become
//! `Add` examples (the inserted lines are the middle), replacements become
//! `Edit` examples (the new lines are the middle and the removed lines are
//! shown to the model in a conflict-merge block). Deletions are skipped.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;
use std::process::Command;

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use similar::{capture_diff_slices, Algorithm, DiffOp};
use thiserror::Error;

use crate::fimgen::SentinelSet;
use crate::syntax::{LanguageId, LanguageRegistry};

/// A file's contents before and after one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitFilePair {
    pub repo: String,
    pub sha: String,
    pub path: String,
    #[serde(default = "LanguageId::unknown")]
    pub lang: LanguageId,
    pub before: String,
    pub after: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HunkKind {
    Insert,
    Replace,
    Delete,
}

/// A maximal run of changed lines. Ranges are 0-based, half-open line
/// indices; an insert has an empty `before` range located at the line the
/// new text goes in front of.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffHunk {
    pub kind: HunkKind,
    pub before: Range<usize>,
    pub after: Range<usize>,
}

/// Lines with their terminators kept, so joining them restores the text.
pub fn split_lines(text: &str) -> Vec<&str> {
    text.split_inclusive('\n').collect()
}

/// Shortest-edit-script line diff; adjacent deletions and insertions are
/// merged into one replace hunk.
pub fn line_diff(before: &str, after: &str) -> Vec<DiffHunk> {
    let old = split_lines(before);
    let new = split_lines(after);
    let mut hunks: Vec<DiffHunk> = Vec::new();
    let mut open: Option<(Range<usize>, Range<usize>)> = None;
    // Positions come from running cursors; the op's own new_index is not
    // reliable for deletions.
    let (mut oi, mut ni) = (0usize, 0usize);
    for op in capture_diff_slices(Algorithm::Myers, &old, &new) {
        let (ol, nl) = (op.old_range().len(), op.new_range().len());
        let (b, a) = (oi..oi + ol, ni..ni + nl);
        oi += ol;
        ni += nl;
        if let DiffOp::Equal { .. } = op {
            if ol > 0 {
                if let Some((b, a)) = open.take() {
                    hunks.push(make_hunk(b, a));
                }
            }
            continue;
        }
        open = Some(match open.take() {
            Some((ob, oa)) => (ob.start..b.end, oa.start..a.end),
            None => (b, a),
        });
    }
    if let Some((b, a)) = open {
        hunks.push(make_hunk(b, a));
    }
    hunks
}

fn make_hunk(before: Range<usize>, after: Range<usize>) -> DiffHunk {
    let kind = match (before.is_empty(), after.is_empty()) {
        (true, false) => HunkKind::Insert,
        (false, true) => HunkKind::Delete,
        _ => HunkKind::Replace,
    };
    DiffHunk { kind, before, after }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PatchError {
    #[error("hunk {0} is out of order or out of bounds")]
    BadRange(usize),
    #[error("unchanged line {before_line} differs from after line {after_line}")]
    ContextMismatch { before_line: usize, after_line: usize },
}

/// Applies a hunk script to `before`, taking replacement lines from `after`.
/// Unchanged lines are copied from `before` and checked against `after`, so
/// a successful result proves the script is consistent with both texts.
pub fn apply_hunks(before: &str, after: &str, hunks: &[DiffHunk]) -> Result<String, PatchError> {
    let old = split_lines(before);
    let new = split_lines(after);
    let mut out = String::with_capacity(after.len());
    let (mut bi, mut ai) = (0usize, 0usize);
    let copy_equal = |upto_b: usize, bi: &mut usize, ai: &mut usize, out: &mut String| {
        while *bi < upto_b {
            if new.get(*ai) != Some(&old[*bi]) {
                return Err(PatchError::ContextMismatch { before_line: *bi, after_line: *ai });
            }
            out.push_str(old[*bi]);
            *bi += 1;
            *ai += 1;
        }
        Ok(())
    };
    for (k, h) in hunks.iter().enumerate() {
        if h.before.start < bi || h.before.end > old.len() || h.after.end > new.len() || h.before.start > h.before.end {
            return Err(PatchError::BadRange(k));
        }
        copy_equal(h.before.start, &mut bi, &mut ai, &mut out)?;
        if ai != h.after.start {
            return Err(PatchError::BadRange(k));
        }
        for line in &new[h.after.clone()] {
            out.push_str(line);
        }
        bi = h.before.end;
        ai = h.after.end;
    }
    copy_equal(old.len(), &mut bi, &mut ai, &mut out)?;
    if ai != new.len() {
        return Err(PatchError::ContextMismatch { before_line: bi, after_line: ai });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Add,
    Edit,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Add => "add",
            Split::Edit => "edit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BenchMetadata {
    pub repo: String,
    pub sha: String,
    pub path: String,
    pub lang: LanguageId,
    pub hunk_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchExample {
    pub id: String,
    pub split: Split,
    pub prefix: String,
    pub middle: String,
    pub suffix: String,
    /// Removed lines; only present for `Edit`.
    pub original: Option<String>,
    pub metadata: BenchMetadata,
}

/// How much unchanged text surrounds the middle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContextWindow {
    #[default]
    Full,
    /// At most this many lines on each side.
    Lines(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("expected a {expected:?} hunk, got {got:?}")]
    HunkKindMismatch { expected: HunkKind, got: HunkKind },
}

fn context_parts(after: &str, hunk: &DiffHunk, window: ContextWindow) -> (String, String, String) {
    let lines = split_lines(after);
    let (lo, hi) = match window {
        ContextWindow::Full => (0, lines.len()),
        ContextWindow::Lines(n) => (
            hunk.after.start.saturating_sub(n),
            (hunk.after.end + n).min(lines.len()),
        ),
    };
    (
        lines[lo..hunk.after.start].concat(),
        lines[hunk.after.clone()].concat(),
        lines[hunk.after.end..hi].concat(),
    )
}

fn metadata(pair: &CommitFilePair, hunk_index: usize) -> (String, BenchMetadata) {
    let id = format!("{}@{}:{}#{}", pair.repo, pair.sha, pair.path, hunk_index);
    let meta = BenchMetadata {
        repo: pair.repo.clone(),
        sha: pair.sha.clone(),
        path: pair.path.clone(),
        lang: pair.lang.clone(),
        hunk_index,
    };
    (id, meta)
}

/// An insertion becomes an `Add` example whose context is the after text.
pub fn make_add_example(
    pair: &CommitFilePair,
    hunk: &DiffHunk,
    hunk_index: usize,
    window: ContextWindow,
) -> Result<BenchExample, BenchError> {
    if hunk.kind != HunkKind::Insert {
        return Err(BenchError::HunkKindMismatch { expected: HunkKind::Insert, got: hunk.kind });
    }
    let (prefix, middle, suffix) = context_parts(&pair.after, hunk, window);
    let (id, metadata) = metadata(pair, hunk_index);
    Ok(BenchExample { id, split: Split::Add, prefix, middle, suffix, original: None, metadata })
}

/// A replacement becomes an `Edit` example. Context comes from the after
/// text, so other hunks of the same commit appear in their new state.
pub fn make_edit_example(
    pair: &CommitFilePair,
    hunk: &DiffHunk,
    hunk_index: usize,
    window: ContextWindow,
) -> Result<BenchExample, BenchError> {
    if hunk.kind != HunkKind::Replace {
        return Err(BenchError::HunkKindMismatch { expected: HunkKind::Replace, got: hunk.kind });
    }
    let (prefix, middle, suffix) = context_parts(&pair.after, hunk, window);
    let original = split_lines(&pair.before)[hunk.before.clone()].concat();
    let (id, metadata) = metadata(pair, hunk_index);
    Ok(BenchExample { id, split: Split::Edit, prefix, middle, suffix, original: Some(original), metadata })
}

/// Marker lines of the conflict-merge block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConflictMarkers {
    pub original: String,
    pub separator: String,
    pub updated: String,
}

impl Default for ConflictMarkers {
    fn default() -> Self {
        ConflictMarkers {
            original: "<<<<<<< ORIGINAL\n".into(),
            separator: "=======\n".into(),
            updated: ">>>>>>> UPDATED\n".into(),
        }
    }
}

/// Effective prefix and suffix shown to the model. For `Edit` examples the
/// removed code sits between the original and separator markers at the end
/// of the prefix; the updated marker opens the suffix.
pub fn prompt_context(ex: &BenchExample, m: &ConflictMarkers) -> (String, String) {
    match (&ex.split, &ex.original) {
        (Split::Edit, Some(original)) => (
            format!("{}{}{}{}", ex.prefix, m.original, original, m.separator),
            format!("{}{}", m.updated, ex.suffix),
        ),
        _ => (ex.prefix.clone(), ex.suffix.clone()),
    }
}

/// PSM prompt ending at the middle sentinel; the model's target is
/// `ex.middle`.
pub fn render_conflict_prompt(ex: &BenchExample, s: &SentinelSet, m: &ConflictMarkers) -> String {
    let (prefix, suffix) = prompt_context(ex, m);
    format!("{}{}{}{}{}", s.pre, prefix, s.suf, suffix, s.mid)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchFilters {
    /// Allowed languages; `None` accepts all.
    pub langs: Option<Vec<LanguageId>>,
    pub min_middle_chars: usize,
    pub max_middle_chars: Option<usize>,
    /// Inclusive date window on the commit timestamp.
    pub since: Option<NaiveDate>,
    pub until: Option<NaiveDate>,
    pub context: ContextWindow,
}

impl BenchFilters {
    fn accepts_pair(&self, pair: &CommitFilePair) -> bool {
        let date = pair.timestamp.date_naive();
        self.langs.as_ref().is_none_or(|l| l.contains(&pair.lang))
            && self.since.is_none_or(|d| date >= d)
            && self.until.is_none_or(|d| date <= d)
    }

    fn accepts_middle(&self, middle: &str) -> bool {
        let n = middle.chars().count();
        n >= self.min_middle_chars.max(1) && self.max_middle_chars.is_none_or(|m| n <= m)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub add: usize,
    pub edit: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchStats {
    pub pairs_seen: usize,
    pub pairs_failed: usize,
    pub pairs_filtered: usize,
    pub insert_hunks: usize,
    pub replace_hunks: usize,
    pub delete_hunks: usize,
    /// Hunks dropped by the middle-length filter.
    pub middles_filtered: usize,
    pub examples_by_lang: BTreeMap<LanguageId, SplitCounts>,
}

impl BenchStats {
    pub fn total(&self) -> SplitCounts {
        self.examples_by_lang.values().fold(SplitCounts::default(), |acc, c| SplitCounts {
            add: acc.add + c.add,
            edit: acc.edit + c.edit,
        })
    }

    /// Per-language counts as a Markdown table, languages ordered by total
    /// example count.
    pub fn render_table(&self) -> String {
        let mut langs: Vec<_> = self.examples_by_lang.iter().collect();
        langs.sort_by(|a, b| (b.1.add + b.1.edit).cmp(&(a.1.add + a.1.edit)).then(a.0.cmp(b.0)));
        let mut out = String::from("| Split |");
        for (l, _) in &langs {
            out.push_str(&format!(" {} |", l.display_name()));
        }
        out.push_str(" Total |\n|---|");
        out.push_str(&"---|".repeat(langs.len() + 1));
        out.push('\n');
        let total = self.total();
        for (name, pick, t) in [
            ("Add", (|c: &SplitCounts| c.add) as fn(&SplitCounts) -> usize, total.add),
            ("Edit", |c: &SplitCounts| c.edit, total.edit),
            ("All", |c: &SplitCounts| c.add + c.edit, total.add + total.edit),
        ] {
            out.push_str(&format!("| {name} |"));
            for (_, c) in &langs {
                out.push_str(&format!(" {} |", pick(c)));
            }
            out.push_str(&format!(" {t} |\n"));
        }
        out
    }
}

/// Example counts of the published benchmark, kept for reporting next to
/// locally built numbers. They cannot be reproduced without the original
/// commit scrape.
pub const REFERENCE_COUNTS: SplitCounts = SplitCounts { add: 17_879, edit: 13_922 };

struct PairOutcome {
    examples: Vec<BenchExample>,
    insert: usize,
    replace: usize,
    delete: usize,
    middles_filtered: usize,
}

fn process_pair(pair: &CommitFilePair, filters: &BenchFilters) -> PairOutcome {
    let hunks = line_diff(&pair.before, &pair.after);
    let mut out = PairOutcome { examples: Vec::new(), insert: 0, replace: 0, delete: 0, middles_filtered: 0 };
    for (i, h) in hunks.iter().enumerate() {
        let ex = match h.kind {
            HunkKind::Insert => {
                out.insert += 1;
                make_add_example(pair, h, i, filters.context)
            }
            HunkKind::Replace => {
                out.replace += 1;
                make_edit_example(pair, h, i, filters.context)
            }
            HunkKind::Delete => {
                out.delete += 1;
                log::debug!("{}@{}:{} hunk {i}: pure deletion skipped", pair.repo, pair.sha, pair.path);
                continue;
            }
        }
        .expect("hunk kind checked above");
        if filters.accepts_middle(&ex.middle) {
            out.examples.push(ex);
        } else {
            out.middles_filtered += 1;
        }
    }
    out
}

/// Builds examples from a stream of commit-file pairs. Failed or invalid
/// pairs are logged and skipped. Output is sorted by
/// (repo, sha, path, hunk index) so it does not depend on input order or
/// thread count.
pub fn build_benchmark<I, E>(
    pairs: I,
    filters: &BenchFilters,
    registry: &LanguageRegistry,
) -> (Vec<BenchExample>, BenchStats)
where
    I: IntoIterator<Item = Result<CommitFilePair, E>>,
    E: std::fmt::Display,
{
    let mut stats = BenchStats::default();
    let mut accepted = Vec::new();
    for item in pairs {
        stats.pairs_seen += 1;
        let mut pair = match item {
            Ok(p) => p,
            Err(e) => {
                log::warn!("skipping commit pair: {e}");
                stats.pairs_failed += 1;
                continue;
            }
        };
        if pair.before == pair.after {
            log::warn!("{}@{}:{}: before and after are identical", pair.repo, pair.sha, pair.path);
            stats.pairs_failed += 1;
            continue;
        }
        if pair.lang == LanguageId::unknown() {
            pair.lang = registry.detect(&pair.path).unwrap_or_else(LanguageId::unknown);
        }
        if !filters.accepts_pair(&pair) {
            stats.pairs_filtered += 1;
            continue;
        }
        accepted.push(pair);
    }

    let outcomes: Vec<PairOutcome> = accepted.par_iter().map(|p| process_pair(p, filters)).collect();
    let mut examples = Vec::new();
    for o in outcomes {
        stats.insert_hunks += o.insert;
        stats.replace_hunks += o.replace;
        stats.delete_hunks += o.delete;
        stats.middles_filtered += o.middles_filtered;
        for ex in &o.examples {
            let c = stats.examples_by_lang.entry(ex.metadata.lang.clone()).or_default();
            match ex.split {
                Split::Add => c.add += 1,
                Split::Edit => c.edit += 1,
            }
        }
        examples.extend(o.examples);
    }
    examples.sort_by(|a, b| a.metadata.cmp(&b.metadata));
    (examples, stats)
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("git {args}: {stderr}")]
    Git { args: String, stderr: String },
    #[error("{0}")]
    Invalid(String),
}

fn git(repo: &Path, args: &[&str]) -> Result<Vec<u8>, IngestError> {
    let out = Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .output()
        .map_err(|e| IngestError::Io { path: repo.display().to_string(), source: e })?;
    if !out.status.success() {
        return Err(IngestError::Git {
            args: args.join(" "),
            stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
        });
    }
    Ok(out.stdout)
}

/// Repositories under `root`: `root` itself if it is a clone, otherwise its
/// immediate subdirectories that are clones, sorted by name.
pub fn discover_repos(root: &Path) -> Result<Vec<std::path::PathBuf>, IngestError> {
    if root.join(".git").exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let io = |e| IngestError::Io { path: root.display().to_string(), source: e };
    let mut repos = Vec::new();
    for entry in std::fs::read_dir(root).map_err(io)? {
        let path = entry.map_err(io)?.path();
        if path.join(".git").exists() {
            repos.push(path);
        }
    }
    repos.sort();
    Ok(repos)
}

/// Walks non-merge commits of a local clone and returns before/after pairs
/// for every modified file in a known language. Dates are inclusive.
pub fn commit_pairs_from_git(
    repo: &Path,
    since: Option<NaiveDate>,
    until: Option<NaiveDate>,
    registry: &LanguageRegistry,
) -> Result<Vec<Result<CommitFilePair, IngestError>>, IngestError> {
    let repo_name = repo
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| repo.display().to_string());
    let mut args = vec!["log".to_string(), "--no-merges".into(), "--format=%H %cI".into()];
    if let Some(d) = since {
        args.push(format!("--since={d} 00:00:00"));
    }
    if let Some(d) = until {
        args.push(format!("--until={d} 23:59:59"));
    }
    let arg_refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let log = String::from_utf8_lossy(&git(repo, &arg_refs)?).into_owned();

    let mut pairs = Vec::new();
    for line in log.lines() {
        let Some((sha, stamp)) = line.split_once(' ') else { continue };
        let timestamp = match DateTime::parse_from_rfc3339(stamp) {
            Ok(t) => t.with_timezone(&Utc),
            Err(e) => {
                pairs.push(Err(IngestError::Invalid(format!("{sha}: bad timestamp {stamp}: {e}"))));
                continue;
            }
        };
        let changed = String::from_utf8_lossy(&git(
            repo,
            &["diff-tree", "--no-commit-id", "-r", "--name-status", "--no-renames", sha],
        )?)
        .into_owned();
        for entry in changed.lines() {
            let Some(("M", path)) = entry.split_once('\t') else { continue };
            let Some(lang) = registry.detect(path) else { continue };
            if !lang.is_supported() {
                continue;
            }
            let fetch = |rev: String| -> Result<String, IngestError> {
                let bytes = git(repo, &["show", &rev])?;
                String::from_utf8(bytes).map_err(|_| IngestError::Invalid(format!("{rev}: not UTF-8")))
            };
            let pair = fetch(format!("{sha}^:{path}")).and_then(|before| {
                let after = fetch(format!("{sha}:{path}"))?;
                Ok(CommitFilePair {
                    repo: repo_name.clone(),
                    sha: sha.to_string(),
                    path: path.to_string(),
                    lang: lang.clone(),
                    before,
                    after,
                    timestamp,
                })
            });
            pairs.push(pair);
        }
    }
    Ok(pairs)
}

#[derive(Debug, Deserialize)]
struct PairMeta {
    repo: Option<String>,
    sha: Option<String>,
    path: Option<String>,
    timestamp: Option<DateTime<Utc>>,
}

/// Reads a directory where every subdirectory holds `before.<ext>` and
/// `after.<ext>` plus an optional `meta.json` with `repo`, `sha`, `path`
/// and `timestamp`.
pub fn commit_pairs_from_dir(
    root: &Path,
    registry: &LanguageRegistry,
) -> Result<Vec<Result<CommitFilePair, IngestError>>, IngestError> {
    let mut cases: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| IngestError::Io { path: root.display().to_string(), source: e })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    cases.sort();
    let mut out = Vec::new();
    for case in cases {
        out.push(read_case(&case, registry));
    }
    Ok(out)
}

fn read_case(case: &Path, registry: &LanguageRegistry) -> Result<CommitFilePair, IngestError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |e| IngestError::Io { path: p, source: e }
    };
    let mut before = None;
    let mut after = None;
    for entry in std::fs::read_dir(case).map_err(io(case))? {
        let p = entry.map_err(io(case))?.path();
        match p.file_stem().and_then(|s| s.to_str()) {
            Some("before") => before = Some(p),
            Some("after") => after = Some(p),
            _ => {}
        }
    }
    let name = case.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let (Some(bp), Some(ap)) = (before, after) else {
        return Err(IngestError::Invalid(format!("{}: missing before/after file", case.display())));
    };
    let read = |p: &Path| std::fs::read_to_string(p).map_err(io(p));
    let meta: Option<PairMeta> = match std::fs::read_to_string(case.join("meta.json")) {
        Ok(s) => Some(serde_json::from_str(&s).map_err(|e| IngestError::Invalid(format!("{}: {e}", case.display())))?),
        Err(_) => None,
    };
    let ext = ap.extension().and_then(|e| e.to_str()).unwrap_or("");
    let path = meta
        .as_ref()
        .and_then(|m| m.path.clone())
        .unwrap_or_else(|| if ext.is_empty() { name.clone() } else { format!("{name}.{ext}") });
    let lang = registry.detect(&path).unwrap_or_else(LanguageId::unknown);
    Ok(CommitFilePair {
        repo: meta.as_ref().and_then(|m| m.repo.clone()).unwrap_or_else(|| "local".into()),
        sha: meta.as_ref().and_then(|m| m.sha.clone()).unwrap_or_else(|| name.clone()),
        path,
        lang,
        before: read(&bp)?,
        after: read(&ap)?,
        timestamp: meta.and_then(|m| m.timestamp).unwrap_or(DateTime::<Utc>::UNIX_EPOCH),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(before: &str, after: &str) -> CommitFilePair {
        CommitFilePair {
            repo: "r".into(),
            sha: "s".into(),
            path: "a.py".into(),
            lang: LanguageId::new("python"),
            before: before.into(),
            after: after.into(),
            timestamp: DateTime::<Utc>::UNIX_EPOCH,
        }
    }

    #[test]
    fn insert_hunk() {
        let h = line_diff("a\nb\nc\n", "a\nb\nX\nc\n");
        assert_eq!(h, [DiffHunk { kind: HunkKind::Insert, before: 2..2, after: 2..3 }]);
    }

    #[test]
    fn identical_texts() {
        assert!(line_diff("a\nb\n", "a\nb\n").is_empty());
        assert!(line_diff("", "").is_empty());
    }

    #[test]
    fn replace_hunk() {
        let h = line_diff("a\nb\nc\n", "a\nB\nc\n");
        assert_eq!(h, [DiffHunk { kind: HunkKind::Replace, before: 1..2, after: 1..2 }]);
    }

    #[test]
    fn add_example() {
        let p = pair("a\nb\nc\n", "a\nb\nX\nc\n");
        let h = &line_diff(&p.before, &p.after)[0];
        let ex = make_add_example(&p, h, 0, ContextWindow::Full).unwrap();
        assert_eq!((ex.prefix.as_str(), ex.middle.as_str(), ex.suffix.as_str()), ("a\nb\n", "X\n", "c\n"));
        assert_eq!(ex.original, None);
    }

    #[test]
    fn add_at_file_start() {
        let p = pair("b\n", "a\nb\n");
        let h = &line_diff(&p.before, &p.after)[0];
        let ex = make_add_example(&p, h, 0, ContextWindow::Full).unwrap();
        assert_eq!(ex.prefix, "");
        assert_eq!(ex.middle, "a\n");
    }

    #[test]
    fn edit_example() {
        let p = pair("a\nb\nc\n", "a\nB\nc\n");
        let h = &line_diff(&p.before, &p.after)[0];
        let ex = make_edit_example(&p, h, 0, ContextWindow::Full).unwrap();
        assert_eq!(ex.prefix, "a\n");
        assert_eq!(ex.original.as_deref(), Some("b\n"));
        assert_eq!(ex.middle, "B\n");
        assert_eq!(ex.suffix, "c\n");
        assert!(make_add_example(&p, h, 0, ContextWindow::Full).is_err());
    }

    #[test]
    fn edit_at_end() {
        let p = pair("a\nb\n", "a\nc\n");
        let h = &line_diff(&p.before, &p.after)[0];
        let ex = make_edit_example(&p, h, 0, ContextWindow::Full).unwrap();
        assert_eq!(ex.suffix, "");
    }

    #[test]
    fn context_radius() {
        let p = pair("1\n2\n3\n4\n5\n", "1\n2\n3\nX\n4\n5\n");
        let h = &line_diff(&p.before, &p.after)[0];
        let ex = make_add_example(&p, h, 0, ContextWindow::Lines(1)).unwrap();
        assert_eq!((ex.prefix.as_str(), ex.suffix.as_str()), ("3\n", "4\n"));
    }

    #[test]
    fn conflict_prompt_layout() {
        let p = pair("a\nb\nc\n", "a\nB\nc\n");
        let h = &line_diff(&p.before, &p.after)[0];
        let ex = make_edit_example(&p, h, 0, ContextWindow::Full).unwrap();
        let s = SentinelSet::default();
        let prompt = render_conflict_prompt(&ex, &s, &ConflictMarkers::default());
        assert_eq!(
            prompt,
            "[PRE]a\n<<<<<<< ORIGINAL\nb\n=======\n[SUF]>>>>>>> UPDATED\nc\n[MID]"
        );
        let add = pair("a\nc\n", "a\nb\nc\n");
        let h = &line_diff(&add.before, &add.after)[0];
        let ex = make_add_example(&add, h, 0, ContextWindow::Full).unwrap();
        assert_eq!(render_conflict_prompt(&ex, &s, &ConflictMarkers::default()), "[PRE]a\n[SUF]c\n[MID]");
    }

    #[test]
    fn deletion_only_yields_nothing() {
        let (ex, stats) = build_benchmark(
            [Ok::<_, String>(pair("a\nb\nc\n", "a\nc\n"))],
            &BenchFilters::default(),
            &LanguageRegistry::default(),
        );
        assert!(ex.is_empty());
        assert_eq!(stats.delete_hunks, 1);
    }

    #[test]
    fn patch_round_trip_and_mismatch() {
        let (b, a) = ("x\ny\nz\n", "x\nY\nz\nw\n");
        let h = line_diff(b, a);
        assert_eq!(apply_hunks(b, a, &h).unwrap(), a);
        assert!(apply_hunks(b, "q\nY\nz\nw\n", &h).is_err());
    }

    #[test]
    fn missing_trailing_newline() {
        let h = line_diff("a\nb", "a\nb\n");
        assert_eq!(h.len(), 1);
        assert_eq!(h[0].kind, HunkKind::Replace);
    }

    #[test]
    fn deletion_positions_track_the_after_text() {
        // The delete of `a` sits before the kept `c` at after line 0.
        let h = line_diff("x\na\nc\n", "x\nc\nc\n");
        assert_eq!(
            h,
            [
                DiffHunk { kind: HunkKind::Delete, before: 1..2, after: 1..1 },
                DiffHunk { kind: HunkKind::Insert, before: 3..3, after: 2..3 },
            ]
        );
        let b = "a\nfn x() {}\nc\n}\né\n}\né\na\nfn x() {}\n}\n\na\nc\n";
        let a = "a\nfn x() {}\nc\n}\né\n\né\na\nfn x() {}\n}\n\nc\nc\n";
        let h = line_diff(b, a);
        assert!(h.windows(2).all(|w| w[0].after.end < w[1].after.start));
        assert_eq!(apply_hunks(b, a, &h).unwrap(), a);
    }
}
