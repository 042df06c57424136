//! Hierarchical NSE: one word memory per sentence plus a document memory,
//! both written with the same write state at every step.

use rand::Rng;

use crate::data::SourceIds;
use crate::layers::{AdditiveAttention, EmbeddingTable, LstmCell};
use crate::nse::{memory_update, BoundInit, Memory, NseState};
use crate::tensor::{Axis, ParamStore, Session, Shape, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// Read LSTM, word and document attention heads, compose LSTM over
/// `[o; m_s; m_d]`, write LSTM.
#[derive(Debug, Clone)]
pub struct HierCell {
    pub dim: usize,
    pub read: LstmCell,
    pub word_attention: AdditiveAttention,
    pub doc_attention: AdditiveAttention,
    pub compose: LstmCell,
    pub write: LstmCell,
}

#[derive(Debug, Clone)]
pub struct HierStepOutput {
    pub o: Var,
    pub z_s: Var,
    pub z_d: Var,
    pub m_s: Var,
    pub m_d: Var,
    pub c: Var,
    pub h: Var,
    pub sentence: Memory,
    pub document: Memory,
    pub state: NseState,
}

impl HierCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        dim: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(HierCell {
            dim,
            read: LstmCell::new(store, &format!("{name}.read"), input_dim, dim, scale, rng)?,
            word_attention: AdditiveAttention::new(store, &format!("{name}.word_attn"), dim, scale, rng)?,
            doc_attention: AdditiveAttention::new(store, &format!("{name}.doc_attn"), dim, scale, rng)?,
            compose: LstmCell::new(store, &format!("{name}.compose"), 3 * dim, dim, scale, rng)?,
            write: LstmCell::new(store, &format!("{name}.write"), dim, dim, scale, rng)?,
        })
    }

    pub fn zero_state(&self, s: &mut Session) -> Result<NseState> {
        Ok(NseState {
            read: self.read.zero_state(s)?,
            compose: Some(self.compose.zero_state(s)?),
            write: self.write.zero_state(s)?,
        })
    }

    /// One step against a word memory (a single sentence while encoding,
    /// the concatenated sentences while decoding) and the document memory.
    pub fn step(
        &self,
        s: &mut Session,
        x: Var,
        sentence: &Memory,
        document: &Memory,
        state: &NseState,
    ) -> Result<HierStepOutput> {
        let compose_state = state.compose.ok_or_else(|| TensorError::InvalidArgument {
            op: "hier_step",
            detail: "compose LSTM state missing".into(),
        })?;
        let read = self.read.step(s, x, &state.read)?;
        let o = read.h;
        let z_s = self.word_attention.attend(s, sentence.slots, o, &sentence.mask)?;
        let z_d = self.doc_attention.attend(s, document.slots, o, &document.mask)?;
        let m_s = s.matmul(z_s, sentence.slots)?;
        let m_d = s.matmul(z_d, document.slots)?;
        let input = s.concat(&[o, m_s, m_d], Axis::Cols)?;
        let compose = self.compose.step(s, input, &compose_state)?;
        let c = compose.h;
        let write = self.write.step(s, c, &state.write)?;
        let h = write.h;
        let sent_slots = memory_update(s, sentence.slots, z_s, h)?;
        let doc_slots = memory_update(s, document.slots, z_d, h)?;
        Ok(HierStepOutput {
            o,
            z_s,
            z_d,
            m_s,
            m_d,
            c,
            h,
            sentence: sentence.with_slots(sent_slots),
            document: document.with_slots(doc_slots),
            state: NseState {
                read,
                compose: Some(compose),
                write,
            },
        })
    }
}

/// Per-sentence word memories, each with the same slot count.
#[derive(Debug, Clone)]
pub struct SentenceMemoryBank {
    pub memories: Vec<Memory>,
    pub sentence_mask: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct HierEncoded {
    pub bank: SentenceMemoryBank,
    pub document: Memory,
    pub state: NseState,
    pub outputs: Vec<Var>,
}

/// Splits the bound initial memories of a grid source into sentence
/// memories and the document memory.
pub fn initial_bank(s: &mut Session, source: &SourceIds, init: &BoundInit) -> Result<(SentenceMemoryBank, Memory)> {
    let bad = |detail: &str| TensorError::InvalidArgument {
        op: "encode_document",
        detail: detail.into(),
    };
    let (n_sent, n_word) = source.grid.ok_or_else(|| bad("source is not a sentence grid"))?;
    let doc = init.doc.ok_or_else(|| bad("document memory missing"))?;
    let sentence_mask = source.sentence_mask().expect("grid source");
    let mut memories = Vec::with_capacity(n_sent);
    for i in 0..n_sent {
        let rows: Vec<usize> = (i * n_word..(i + 1) * n_word).collect();
        let slots = s.gather_rows(init.word, &rows)?;
        memories.push(Memory {
            slots,
            mask: source.mask[i * n_word..(i + 1) * n_word].to_vec(),
        });
    }
    let document = Memory {
        slots: doc,
        mask: sentence_mask.clone(),
    };
    Ok((SentenceMemoryBank { memories, sentence_mask }, document))
}

/// Encodes sentences in order. Only the active sentence's memory changes;
/// the document memory is written by every word.
///
/// While sentence `i` is active, document attention covers slots `0..=i`
/// only. Later slots already hold their sentences' mean vectors, so
/// attending them would let later tokens leak into earlier sentence
/// memories.
pub fn encode_document(
    s: &mut Session,
    cell: &HierCell,
    embeddings: &EmbeddingTable,
    source: &SourceIds,
    init: &BoundInit,
) -> Result<HierEncoded> {
    if !source.mask.iter().any(|&m| m) {
        return Err(TensorError::InvalidArgument {
            op: "encode_document",
            detail: "empty document".into(),
        });
    }
    let (mut bank, mut document) = initial_bank(s, source, init)?;
    let n_word = source.grid.expect("grid source").1;
    let mut state = cell.zero_state(s)?;
    let mut outputs = Vec::new();
    for i in 0..bank.memories.len() {
        if !bank.sentence_mask[i] {
            continue;
        }
        for j in 0..n_word {
            let k = i * n_word + j;
            if !source.mask[k] {
                continue;
            }
            let x = embeddings.lookup(s, source.input[k])?;
            let visible = Memory {
                slots: document.slots,
                mask: document.mask.iter().enumerate().map(|(r, &m)| m && r <= i).collect(),
            };
            let out = cell.step(s, x, &bank.memories[i], &visible, &state)?;
            outputs.push(out.h);
            bank.memories[i] = out.sentence;
            document.slots = out.document.slots;
            state = out.state;
        }
    }
    Ok(HierEncoded {
        bank,
        document,
        state,
        outputs,
    })
}

/// Stacks sentence memories row-wise into one word-level memory.
pub fn assemble_decoder_memory(s: &mut Session, bank: &SentenceMemoryBank) -> Result<Memory> {
    let parts: Vec<Var> = bank.memories.iter().map(|m| m.slots).collect();
    if parts.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "assemble_decoder_memory",
            detail: "no sentence memories".into(),
        });
    }
    let slots = s.concat(&parts, Axis::Rows)?;
    let mask = bank.memories.iter().flat_map(|m| m.mask.iter().copied()).collect();
    debug_assert!(matches!(s.shape(slots), Shape::Matrix(..)));
    Ok(Memory { slots, mask })
}
