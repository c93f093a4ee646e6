//! Syntax-aware fill-in-the-middle data generation, benchmark construction
//! from commit history, and character-level perplexity evaluation.

pub mod benchgen;
pub mod corpus;
pub mod evalkit;
pub mod fimgen;
pub mod masking;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod syntax;

pub use benchgen::{BenchExample, BenchFilters, BenchMetadata, BenchStats, CommitFilePair, DiffHunk, HunkKind, Split};
pub use corpus::{open_corpus, CorpusError};
pub use evalkit::{char_ppl, EvalError, GroupKey, PplRecord, ScoredMiddle, TokenScore};
pub use fimgen::{FimExample, FimMode, MixConfig, RecordKind, SentinelSet, TrainingRecord};
pub use masking::{MaskConfig, MaskError, MaskSpan, MaskStrategy};
pub use pipeline::{GenReport, GenStats, Generator};
pub use rng::StreamRng;
pub use syntax::{
    parse, CharSpan, LanguageId, LanguageRegistry, NodeId, ParseError, SourceDocument, SyntaxNode, SyntaxTree,
};
