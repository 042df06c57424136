//! Neural Semantic Encoder: read, attend, retrieve, compose, write and the
//! erase/write memory update, plus the pointer-generator output head.

use rand::Rng;

use crate::data::SourceIds;
use crate::layers::{dot_attention, uniform, AdditiveAttention, EmbeddingTable, LstmCell, LstmState, Mlp};
use crate::tensor::{Axis, ParamId, ParamStore, Session, Shape, Tensor, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// Tolerance on `sum(z) = 1` accepted by [`memory_update`].
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// Slot matrix bound into a session, with its validity mask.
#[derive(Debug, Clone)]
pub struct Memory {
    pub slots: Var,
    pub mask: Vec<bool>,
}

impl Memory {
    pub fn new(s: &mut Session, slots: Tensor, mask: Vec<bool>) -> Result<Self> {
        let Shape::Matrix(k, _) = slots.shape() else {
            return Err(TensorError::InvalidArgument {
                op: "memory",
                detail: format!("slots must be a matrix, got {}", slots.shape()),
            });
        };
        if mask.len() != k {
            return Err(TensorError::ShapeMismatch {
                op: "memory",
                left: slots.shape(),
                right: Shape::Vector(mask.len()),
            });
        }
        Ok(Memory {
            slots: s.constant(slots)?,
            mask,
        })
    }

    pub fn with_slots(&self, slots: Var) -> Memory {
        Memory {
            slots,
            mask: self.mask.clone(),
        }
    }
}

/// Row-wise erase/write: `row_i ← (1 − z_i)·row_i + z_i·h`.
pub fn memory_update(s: &mut Session, memory: Var, z: Var, h: Var) -> Result<Var> {
    let (ms, zs, hs) = (s.shape(memory), s.shape(z), s.shape(h));
    let (k, l) = ms.as_rows();
    if !matches!(ms, Shape::Matrix(..)) || zs != Shape::Vector(k) {
        return Err(TensorError::ShapeMismatch {
            op: "memory_update",
            left: ms,
            right: zs,
        });
    }
    if hs != Shape::Vector(l) {
        return Err(TensorError::ShapeMismatch {
            op: "memory_update",
            left: ms,
            right: hs,
        });
    }
    let total: f64 = s.data(z).iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(TensorError::InvalidArgument {
            op: "memory_update",
            detail: format!("attention sums to {total}"),
        });
    }
    let keep = s.one_minus(z)?;
    let erased = s.row_scale(memory, keep)?;
    let written = s.outer(z, h)?;
    s.add(erased, written)
}

/// Attention head used to address the memory.
#[derive(Debug, Clone)]
pub enum Addressing {
    Dot,
    Additive(AdditiveAttention),
}

impl Addressing {
    pub fn attend(&self, s: &mut Session, memory: &Memory, key: Var) -> Result<Var> {
        match self {
            Addressing::Dot => dot_attention(s, memory.slots, key, &memory.mask),
            Addressing::Additive(a) => a.attend(s, memory.slots, key, &memory.mask),
        }
    }
}

/// Compose function: a tanh MLP (vanilla) or a recurrent LSTM (improved).
#[derive(Debug, Clone)]
pub enum Compose {
    Mlp(Mlp),
    Lstm(LstmCell),
}

/// Recurrent states of one NSE pass.
#[derive(Debug, Clone, Copy)]
pub struct NseState {
    pub read: LstmState,
    pub compose: Option<LstmState>,
    pub write: LstmState,
}

#[derive(Debug, Clone)]
pub struct NseStepOutput {
    pub o: Var,
    pub z: Var,
    pub m_r: Var,
    pub c: Var,
    pub h: Var,
    pub memory: Memory,
    pub state: NseState,
}

/// One NSE cell: read LSTM, addressing, compose and write LSTM.
#[derive(Debug, Clone)]
pub struct NseCell {
    pub dim: usize,
    pub read: LstmCell,
    pub addressing: Addressing,
    pub compose: Compose,
    pub write: LstmCell,
}

impl NseCell {
    /// Dot-product addressing and an MLP compose with one hidden layer.
    pub fn vanilla(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        dim: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(NseCell {
            dim,
            read: LstmCell::new(store, &format!("{name}.read"), input_dim, dim, scale, rng)?,
            addressing: Addressing::Dot,
            compose: Compose::Mlp(Mlp::new(store, &format!("{name}.compose"), &[2 * dim, dim, dim], scale, rng)?),
            write: LstmCell::new(store, &format!("{name}.write"), dim, dim, scale, rng)?,
        })
    }

    /// Additive addressing and an LSTM compose.
    pub fn improved(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        dim: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(NseCell {
            dim,
            read: LstmCell::new(store, &format!("{name}.read"), input_dim, dim, scale, rng)?,
            addressing: Addressing::Additive(AdditiveAttention::new(store, &format!("{name}.attn"), dim, scale, rng)?),
            compose: Compose::Lstm(LstmCell::new(store, &format!("{name}.compose"), 2 * dim, dim, scale, rng)?),
            write: LstmCell::new(store, &format!("{name}.write"), dim, dim, scale, rng)?,
        })
    }

    pub fn zero_state(&self, s: &mut Session) -> Result<NseState> {
        Ok(NseState {
            read: self.read.zero_state(s)?,
            compose: match &self.compose {
                Compose::Mlp(_) => None,
                Compose::Lstm(c) => Some(c.zero_state(s)?),
            },
            write: self.write.zero_state(s)?,
        })
    }

    pub fn step(&self, s: &mut Session, x: Var, memory: &Memory, state: &NseState) -> Result<NseStepOutput> {
        let read = self.read.step(s, x, &state.read)?;
        let o = read.h;
        let z = self.addressing.attend(s, memory, o)?;
        let m_r = s.matmul(z, memory.slots)?;
        let input = s.concat(&[o, m_r], Axis::Cols)?;
        let (c, compose) = match (&self.compose, state.compose) {
            (Compose::Mlp(mlp), _) => (mlp.forward(s, input)?, None),
            (Compose::Lstm(cell), Some(prev)) => {
                let next = cell.step(s, input, &prev)?;
                (next.h, Some(next))
            }
            (Compose::Lstm(_), None) => {
                return Err(TensorError::InvalidArgument {
                    op: "nse_step",
                    detail: "compose LSTM state missing".into(),
                })
            }
        };
        let write = self.write.step(s, c, &state.write)?;
        let h = write.h;
        let slots = memory_update(s, memory.slots, z, h)?;
        Ok(NseStepOutput {
            o,
            z,
            m_r,
            c,
            h,
            memory: memory.with_slots(slots),
            state: NseState { read, compose, write },
        })
    }
}

/// Initial memories as graph nodes over the embedding table, so gradients
/// reach the word vectors the memories start from.
#[derive(Debug, Clone, Copy)]
pub struct BoundInit {
    /// One row per source slot; masked rows are zero.
    pub word: Var,
    /// Grid sources: row i is the mean of sentence i's live word rows.
    pub doc: Option<Var>,
}

pub fn bind_initial(s: &mut Session, embeddings: &EmbeddingTable, source: &SourceIds) -> Result<BoundInit> {
    if source.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "bind_initial",
            detail: "empty source".into(),
        });
    }
    let rows = embeddings.lookup_rows(s, &source.input)?;
    let keep = s.constant(Tensor::vector(source.mask.iter().map(|&m| f64::from(u8::from(m))).collect()))?;
    let word = s.row_scale(rows, keep)?;
    let doc = match source.grid {
        None => None,
        Some((n_sent, n_word)) => {
            let k = source.len();
            let mut avg = vec![0.0; n_sent * k];
            for i in 0..n_sent {
                let live: Vec<usize> = (i * n_word..(i + 1) * n_word).filter(|&j| source.mask[j]).collect();
                for &j in &live {
                    avg[i * k + j] = 1.0 / live.len() as f64;
                }
            }
            let a = s.constant(Tensor::matrix(n_sent, k, avg)?)?;
            Some(s.matmul(a, word)?)
        }
    };
    Ok(BoundInit { word, doc })
}

/// Final memory and states of an encoder pass.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub memory: Memory,
    pub state: NseState,
    /// Write states `h_t`, one per live token.
    pub outputs: Vec<Var>,
}

/// Runs `cell` over the live source tokens in order, evolving `initial`.
pub fn encode_sequence(
    s: &mut Session,
    cell: &NseCell,
    embeddings: &EmbeddingTable,
    source: &SourceIds,
    initial: Memory,
) -> Result<Encoded> {
    if !source.mask.iter().any(|&m| m) {
        return Err(TensorError::InvalidArgument {
            op: "encode_sequence",
            detail: "empty input".into(),
        });
    }
    let mut state = cell.zero_state(s)?;
    let mut memory = initial;
    let mut outputs = Vec::new();
    for (&id, &live) in source.input.iter().zip(&source.mask) {
        if !live {
            continue;
        }
        let x = embeddings.lookup(s, id)?;
        let out = cell.step(s, x, &memory, &state)?;
        outputs.push(out.h);
        memory = out.memory;
        state = out.state;
    }
    Ok(Encoded { memory, state, outputs })
}

/// Soft switch `p_gen = σ(w_m·m_r + w_h·h + w_o·o + b)`.
#[derive(Debug, Clone)]
pub struct PointerHead {
    pub w_m: ParamId,
    pub w_h: ParamId,
    pub w_o: ParamId,
    pub b: ParamId,
}

impl PointerHead {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        Ok(PointerHead {
            w_m: store.add(format!("{name}.w_m"), uniform(Shape::Vector(dim), scale, rng))?,
            w_h: store.add(format!("{name}.w_h"), uniform(Shape::Vector(dim), scale, rng))?,
            w_o: store.add(format!("{name}.w_o"), uniform(Shape::Vector(dim), scale, rng))?,
            b: store.add(format!("{name}.b"), Tensor::scalar(0.0))?,
        })
    }

    pub fn p_gen(&self, s: &mut Session, m_r: Var, h: Var, o: Var) -> Result<Var> {
        let (w_m, w_h, w_o, b) = (s.param(self.w_m)?, s.param(self.w_h)?, s.param(self.w_o)?, s.param(self.b)?);
        let a = s.dot(w_m, m_r)?;
        let c = s.dot(w_h, h)?;
        let d = s.dot(w_o, o)?;
        let t = s.add(a, c)?;
        let t = s.add(t, d)?;
        let t = s.add(t, b)?;
        s.sigmoid(t)
    }
}

/// `p(w) = p_gen·p_vocab(w) + (1 − p_gen)·Σ_{i: src_i = w} z_i` over the
/// extended vocabulary of size `extended`.
pub fn pointer_generator_mix(
    s: &mut Session,
    p_gen: Var,
    p_vocab: Var,
    z: Var,
    copy_ids: &[usize],
    extended: usize,
) -> Result<Var> {
    let vocab = s.shape(p_vocab).len();
    if vocab > extended {
        return Err(TensorError::InvalidArgument {
            op: "pointer_generator_mix",
            detail: format!("vocabulary {vocab} larger than extended size {extended}"),
        });
    }
    if let Some(&bad) = copy_ids.iter().find(|&&id| id >= extended) {
        return Err(TensorError::InvalidArgument {
            op: "pointer_generator_mix",
            detail: format!("copy id {bad} outside extended vocabulary of {extended}"),
        });
    }
    let generated = s.pad(p_vocab, extended)?;
    let generated = s.scale_by(generated, p_gen)?;
    let copied = s.scatter_add(z, copy_ids, extended)?;
    let q = s.one_minus(p_gen)?;
    let copied = s.scale_by(copied, q)?;
    s.add(generated, copied)
}
