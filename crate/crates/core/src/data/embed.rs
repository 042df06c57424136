//! GloVe text-format embedding loading.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;

use super::vocab::{Vocabulary, PAD};
use super::DataError;
use crate::tensor::Tensor;

/// Range of the uniform init for tokens without a pretrained vector.
pub const EMBED_INIT_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmbeddingStats {
    /// Vocabulary rows copied from the file.
    pub found: usize,
    /// Vocabulary rows left at random init (PAD excluded).
    pub missing: usize,
    /// Malformed lines skipped.
    pub skipped: usize,
}

/// Uniform(−0.1, 0.1) table with a zero PAD row.
pub fn random_embeddings(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Tensor {
    let mut data: Vec<f64> = (0..vocab_size * dim)
        .map(|_| rng.gen_range(-EMBED_INIT_SCALE..EMBED_INIT_SCALE))
        .collect();
    data[PAD * dim..(PAD + 1) * dim].fill(0.0);
    Tensor::matrix(vocab_size, dim, data).expect("sized")
}

/// Reads `token v1 … v_dim` lines into a `vocab.len() × dim` table.
///
/// Lines with unparsable numbers are skipped and counted; a well-formed line
/// with the wrong number of values is an error.
pub fn read_embeddings<R: BufRead>(
    reader: R,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor, EmbeddingStats), DataError> {
    let mut table = random_embeddings(vocab.len(), dim, rng);
    let mut seen = vec![false; vocab.len()];
    let mut stats = EmbeddingStats::default();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::io("<embeddings>", e))?;
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else {
            stats.skipped += 1;
            continue;
        };
        let Ok(values) = fields.map(str::parse::<f64>).collect::<Result<Vec<_>, _>>() else {
            stats.skipped += 1;
            continue;
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            stats.skipped += 1;
            continue;
        }
        if values.len() != dim {
            return Err(DataError::DimMismatch {
                line: n + 1,
                expected: dim,
                found: values.len(),
            });
        }
        if let Some(id) = vocab.get(token).filter(|&id| id != PAD) {
            table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(&values);
            seen[id] = true;
        }
    }
    stats.found = seen.iter().filter(|&&s| s).count();
    stats.missing = vocab.len() - 1 - stats.found;
    if stats.skipped > 0 {
        log::warn!("skipped {} malformed embedding lines", stats.skipped);
    }
    Ok((table, stats))
}

pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut impl Rng,
) -> Result<(Tensor, EmbeddingStats), DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    read_embeddings(BufReader::new(file), vocab, dim, rng)
}
