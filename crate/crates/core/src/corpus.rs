//! Reading source corpora: directory trees or JSONL of
//! `{path, lang, content}` objects. Both are streamed lazily.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::syntax::{InvalidUtf8, LanguageId, LanguageRegistry, SourceDocument};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Json { path: String, line: usize, message: String },
    #[error(transparent)]
    Utf8(#[from] InvalidUtf8),
}

impl CorpusError {
    /// Errors that concern a single document rather than the corpus source.
    pub fn is_per_document(&self) -> bool {
        !matches!(self, CorpusError::Io { .. })
    }
}

#[derive(Deserialize)]
struct JsonDoc {
    path: String,
    #[serde(default)]
    lang: Option<String>,
    content: String,
}

pub type DocIter = Box<dyn Iterator<Item = Result<SourceDocument, CorpusError>> + Send>;

/// Opens a corpus. Directories are walked in sorted order and files with an
/// unrecognised extension are skipped; any other path is read as JSONL.
pub fn open_corpus(path: &Path, registry: &LanguageRegistry) -> Result<DocIter, CorpusError> {
    if path.is_dir() {
        Ok(Box::new(walk_dir(path, registry.clone())))
    } else {
        read_jsonl(path, registry.clone())
    }
}

fn walk_dir(root: &Path, registry: LanguageRegistry) -> impl Iterator<Item = Result<SourceDocument, CorpusError>> + Send {
    let root_owned: PathBuf = root.to_path_buf();
    walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'))
        .filter_map(move |entry| {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    let path = e.path().map(|p| p.display().to_string()).unwrap_or_default();
                    return Some(Err(CorpusError::Io { path, source: e.into() }));
                }
            };
            if !entry.file_type().is_file() {
                return None;
            }
            let lang = registry.detect(entry.path())?;
            let rel = entry
                .path()
                .strip_prefix(&root_owned)
                .unwrap_or(entry.path())
                .to_string_lossy()
                .replace('\\', "/");
            Some(match std::fs::read(entry.path()) {
                Ok(bytes) => SourceDocument::from_bytes(rel, lang, bytes).map_err(CorpusError::from),
                Err(e) => Err(CorpusError::Io { path: entry.path().display().to_string(), source: e }),
            })
        })
}

fn read_jsonl(path: &Path, registry: LanguageRegistry) -> Result<DocIter, CorpusError> {
    let shown = path.display().to_string();
    let file = File::open(path).map_err(|e| CorpusError::Io { path: shown.clone(), source: e })?;
    let lines = BufReader::new(file).lines().enumerate();
    Ok(Box::new(lines.filter_map(move |(i, line)| {
        let line = match line {
            Ok(l) => l,
            Err(e) => return Some(Err(CorpusError::Io { path: shown.clone(), source: e })),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(
            serde_json::from_str::<JsonDoc>(&line)
                .map_err(|e| CorpusError::Json { path: shown.clone(), line: i + 1, message: e.to_string() })
                .map(|d| {
                    let lang = match d.lang {
                        Some(l) => LanguageId::new(l),
                        None => registry.detect(&d.path).unwrap_or_else(LanguageId::unknown),
                    };
                    SourceDocument::new(d.path, lang, d.content)
                }),
        )
    })))
}
