//! Corpus ingestion: factored-token parsing, tokenization and truncation,
//! vocabulary construction, the per-document OOV map, GloVe loading and
//! memory initialization.

mod embed;
mod example;
mod factored;
mod memory;
mod shape;
mod vocab;

pub use embed::{load_embeddings, random_embeddings, read_embeddings, EmbeddingStats, EMBED_INIT_SCALE};
pub use example::{parse_corpus, read_corpus, CorpusLine, Example, SourceIds};
pub use factored::{parse_factored_stream, parse_factored_token, serialize_stream, FactoredToken, FactoredUnit};
pub use memory::{init_memories, InitialMemories};
pub use shape::{
    project_surface, shape_summary, split_sentences, stream_units, tokenize_and_truncate, truncate_units, Layout, ShapeLimits, Shaped,
    TokenFormat,
};
pub use vocab::{
    build_vocab, map_extended, target_ids, ExtendedIds, ExtendedVocabMap, Vocabulary, DEFAULT_VOCAB_SIZE, PAD,
    PAD_TOKEN, START, START_TOKEN, STOP, STOP_TOKEN, UNK, UNK_TOKEN,
};

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("malformed factored token {raw:?}: {reason}")]
    FactoredToken { raw: String, reason: &'static str },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("embedding dimension mismatch at line {line}: expected {expected}, found {found}")]
    DimMismatch { line: usize, expected: usize, found: usize },
    #[error("inconsistent OOV map: {0}")]
    OovMap(String),
    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DataError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}
