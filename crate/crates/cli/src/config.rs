//! Run configuration and manifests.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use astfim_core::{LanguageId, LanguageRegistry, MixConfig, SentinelSet};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything that determines a run's output apart from its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Thread count. Does not affect output.
    pub workers: usize,
    pub mix: MixConfig,
    pub sentinels: SentinelSet,
    /// Extra extension to language mappings, e.g. `pyi = "python"`.
    pub extensions: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            mix: MixConfig::default(),
            sentinels: SentinelSet::default(),
            extensions: BTreeMap::new(),
        }
    }
}

impl RunConfig {
    /// Loads a TOML config, or the `config` object of a JSON run manifest.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let inner = v.get("config").cloned().unwrap_or(v);
            return serde_json::from_value(inner).with_context(|| format!("parsing {}", path.display()));
        }
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<RunConfig> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            bail!("workers must be positive");
        }
        self.mix.validate().map_err(anyhow::Error::msg)?;
        self.sentinels.validate()?;
        Ok(())
    }

    pub fn registry(&self) -> LanguageRegistry {
        self.extensions
            .iter()
            .fold(LanguageRegistry::default(), |r, (ext, lang)| r.with_extension(ext, LanguageId::new(lang)))
    }
}

/// Digest and size of one input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    /// Documents, commit pairs or lines read from the input.
    pub items: usize,
    pub bytes: u64,
    pub sha256: String,
}

/// Hashes a stream of named items so directory and JSONL inputs get a
/// stable digest without a second read.
pub struct StreamDigest {
    hasher: Sha256,
    items: usize,
    bytes: u64,
}

impl StreamDigest {
    pub fn new() -> Self {
        StreamDigest { hasher: Sha256::new(), items: 0, bytes: 0 }
    }

    pub fn update(&mut self, name: &str, content: &[u8]) {
        for part in [name.as_bytes(), content] {
            self.hasher.update((part.len() as u64).to_le_bytes());
            self.hasher.update(part);
        }
        self.items += 1;
        self.bytes += content.len() as u64;
    }

    pub fn finish(self, path: &Path) -> InputDigest {
        InputDigest {
            path: path.display().to_string(),
            items: self.items,
            bytes: self.bytes,
            sha256: hex(&self.hasher.finalize()),
        }
    }
}

pub fn file_digest(path: &Path) -> Result<InputDigest> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(InputDigest {
        path: path.display().to_string(),
        items: 1,
        bytes: bytes.len() as u64,
        sha256: hex(&Sha256::digest(&bytes)),
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a, P: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    /// Command-specific parameters not covered by `config`.
    pub params: P,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
}

impl<'a, P: Serialize> Manifest<'a, P> {
    pub fn new(command: &'a str, config: &'a RunConfig, params: P) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            params,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }
}

/// `<out>.<suffix>`; `out` keeps its own extension.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush().with_context(|| format!("writing {}", path.display()))
}
