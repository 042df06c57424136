//! Initial memory contents from word vectors.

use super::example::SourceIds;
use super::DataError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct InitialMemories {
    /// One row per source slot; masked slots are zero.
    pub word: Tensor,
    /// Hierarchical sources: row i is the mean of sentence i's live word
    /// vectors (zero for empty sentences).
    pub doc: Option<Tensor>,
}

pub fn init_memories(source: &SourceIds, embeddings: &Tensor) -> Result<InitialMemories, DataError> {
    if source.is_empty() {
        return Err(DataError::Empty("source"));
    }
    let (vocab, dim) = embeddings.shape().as_rows();
    let mut word = vec![0.0; source.len() * dim];
    for (k, (&id, &live)) in source.input.iter().zip(&source.mask).enumerate() {
        if !live {
            continue;
        }
        if id >= vocab {
            return Err(DataError::Vocabulary(format!("id {id} outside embedding table of {vocab} rows")));
        }
        word[k * dim..(k + 1) * dim].copy_from_slice(embeddings.row(id));
    }
    let doc = source.grid.map(|(s, t)| {
        let mut rows = vec![0.0; s * dim];
        for i in 0..s {
            let live: Vec<usize> = (i * t..(i + 1) * t).filter(|&k| source.mask[k]).collect();
            if live.is_empty() {
                continue;
            }
            let n = live.len() as f64;
            for &k in &live {
                for j in 0..dim {
                    rows[i * dim + j] += word[k * dim + j] / n;
                }
            }
        }
        Tensor::matrix(s, dim, rows).expect("sized")
    });
    Ok(InitialMemories {
        word: Tensor::matrix(source.len(), dim, word).expect("sized"),
        doc,
    })
}
