//! Encoder-decoder summarizers over the three NSE variants.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::{Example, Layout, UNK};
use crate::hier::{assemble_decoder_memory, encode_document, HierCell, HierEncoded};
use crate::layers::{uniform, EmbeddingTable, INIT_SCALE};
use crate::nse::{bind_initial, encode_sequence, pointer_generator_mix, Memory, NseCell, NseState, PointerHead};
use crate::tensor::{ParamId, ParamStore, Session, Shape, Tensor, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Dot attention, MLP compose, no pointer.
    Vanilla,
    /// Additive attention, LSTM compose, pointer-generator.
    Improved,
    /// Sentence and document memories, pointer-generator.
    Hier,
}

impl Variant {
    pub fn layout(self) -> Layout {
        match self {
            Variant::Hier => Layout::Hier,
            _ => Layout::Flat,
        }
    }

    pub fn has_pointer(self) -> bool {
        self != Variant::Vanilla
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Vanilla => "vanilla",
            Variant::Improved => "improved",
            Variant::Hier => "hier",
        })
    }
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "improved" => Ok(Variant::Improved),
            "hier" => Ok(Variant::Hier),
            other => Err(format!("unknown variant {other:?} (expected vanilla, improved or hier)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    /// Embedding width, also the memory and hidden width.
    pub dim: usize,
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn new(variant: Variant, vocab_size: usize, dim: usize) -> Self {
        ModelConfig {
            variant,
            vocab_size,
            dim,
            init_scale: INIT_SCALE,
        }
    }
}

#[derive(Debug, Clone)]
enum Cells {
    Flat { enc: NseCell, dec: NseCell },
    Hier { enc: HierCell, dec: HierCell },
}

/// Decoder-side memories and recurrent states.
#[derive(Debug, Clone)]
pub struct DecoderState {
    /// Flat: the encoder's final memory. Hier: the concatenated sentence
    /// memories.
    pub words: Memory,
    pub document: Option<Memory>,
    pub state: NseState,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    /// Distribution over [`Summarizer::output_size`] ids.
    pub dist: Var,
    pub p_gen: Option<Var>,
    /// Word-level attention over source slots.
    pub attention: Var,
    pub next: DecoderState,
}

#[derive(Debug, Clone)]
pub struct Summarizer {
    pub config: ModelConfig,
    pub embedding: EmbeddingTable,
    cells: Cells,
    out_w: ParamId,
    out_b: ParamId,
    pointer: Option<PointerHead>,
}

impl Summarizer {
    /// Registers all parameters in `store`. `embeddings` must be
    /// `vocab_size × dim`.
    pub fn new(config: ModelConfig, store: &mut ParamStore, embeddings: Tensor, rng: &mut impl Rng) -> Result<Self> {
        let expected = Shape::Matrix(config.vocab_size, config.dim);
        if embeddings.shape() != expected {
            return Err(TensorError::ShapeMismatch {
                op: "summarizer",
                left: embeddings.shape(),
                right: expected,
            });
        }
        let (l, sc) = (config.dim, config.init_scale);
        let embedding = EmbeddingTable::new(store, "embedding", embeddings)?;
        let cells = match config.variant {
            Variant::Vanilla => Cells::Flat {
                enc: NseCell::vanilla(store, "enc", l, l, sc, rng)?,
                dec: NseCell::vanilla(store, "dec", l, l, sc, rng)?,
            },
            Variant::Improved => Cells::Flat {
                enc: NseCell::improved(store, "enc", l, l, sc, rng)?,
                dec: NseCell::improved(store, "dec", l, l, sc, rng)?,
            },
            Variant::Hier => Cells::Hier {
                enc: HierCell::new(store, "enc", l, l, sc, rng)?,
                dec: HierCell::new(store, "dec", l, l, sc, rng)?,
            },
        };
        let out_w = store.add("out.w", uniform(Shape::Matrix(config.vocab_size, l), sc, rng))?;
        let out_b = store.add("out.b", Tensor::zeros(Shape::Vector(config.vocab_size)))?;
        let pointer = if config.variant.has_pointer() {
            Some(PointerHead::new(store, "ptr", l, sc, rng)?)
        } else {
            None
        };
        Ok(Summarizer {
            config,
            embedding,
            cells,
            out_w,
            out_b,
            pointer,
        })
    }

    /// Builds a model in a fresh store.
    pub fn build(config: ModelConfig, embeddings: Tensor, rng: &mut impl Rng) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let model = Summarizer::new(config, &mut store, embeddings, rng)?;
        Ok((model, store))
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn pointer(&self) -> Option<&PointerHead> {
        self.pointer.as_ref()
    }

    /// Length of the output distribution for `ex`.
    pub fn output_size(&self, ex: &Example) -> usize {
        if self.pointer.is_some() {
            ex.extended_size().max(self.config.vocab_size)
        } else {
            self.config.vocab_size
        }
    }

    /// Target id as scored by this model: without a pointer, extended ids
    /// collapse to UNK.
    pub fn target_id(&self, id: usize) -> usize {
        if self.pointer.is_none() && id >= self.config.vocab_size {
            UNK
        } else {
            id
        }
    }

    fn check_layout(&self, ex: &Example) -> Result<()> {
        let hier = ex.source.grid.is_some();
        if hier != (self.config.variant == Variant::Hier) {
            return Err(TensorError::InvalidArgument {
                op: "summarizer",
                detail: format!(
                    "{} model given a {} source",
                    self.config.variant,
                    if hier { "sentence-grid" } else { "flat" }
                ),
            });
        }
        Ok(())
    }

    /// Hierarchical encoder pass alone.
    pub fn encode_hier(&self, s: &mut Session, ex: &Example) -> Result<HierEncoded> {
        self.check_layout(ex)?;
        let Cells::Hier { enc, .. } = &self.cells else {
            unreachable!("layout checked")
        };
        let init = bind_initial(s, &self.embedding, &ex.source)?;
        encode_document(s, enc, &self.embedding, &ex.source, &init)
    }

    /// Encodes the source and hands the evolved memories and final states to
    /// the decoder.
    pub fn encode(&self, s: &mut Session, ex: &Example) -> Result<DecoderState> {
        self.check_layout(ex)?;
        match &self.cells {
            Cells::Flat { enc, .. } => {
                let init = bind_initial(s, &self.embedding, &ex.source)?;
                let memory = Memory {
                    slots: init.word,
                    mask: ex.source.mask.clone(),
                };
                let out = encode_sequence(s, enc, &self.embedding, &ex.source, memory)?;
                Ok(DecoderState {
                    words: out.memory,
                    document: None,
                    state: out.state,
                })
            }
            Cells::Hier { .. } => {
                let out = self.encode_hier(s, ex)?;
                let words = assemble_decoder_memory(s, &out.bank)?;
                Ok(DecoderState {
                    words,
                    document: Some(out.document),
                    state: out.state,
                })
            }
        }
    }

    /// One decoder step fed the previous output id.
    pub fn decode_step(&self, s: &mut Session, ex: &Example, st: &DecoderState, prev: usize) -> Result<StepOutput> {
        let input = if prev < self.config.vocab_size { prev } else { UNK };
        let x = self.embedding.lookup(s, input)?;
        let (o, z, m_r, h, next) = match &self.cells {
            Cells::Flat { dec, .. } => {
                let out = dec.step(s, x, &st.words, &st.state)?;
                let next = DecoderState {
                    words: out.memory,
                    document: None,
                    state: out.state,
                };
                (out.o, out.z, out.m_r, out.h, next)
            }
            Cells::Hier { dec, .. } => {
                let doc = st.document.as_ref().ok_or_else(|| TensorError::InvalidArgument {
                    op: "decode_step",
                    detail: "document memory missing".into(),
                })?;
                let out = dec.step(s, x, &st.words, doc, &st.state)?;
                let next = DecoderState {
                    words: out.sentence,
                    document: Some(out.document),
                    state: out.state,
                };
                (out.o, out.z_s, out.m_s, out.h, next)
            }
        };
        let w = s.param(self.out_w)?;
        let b = s.param(self.out_b)?;
        let logits = s.matmul(w, h)?;
        let logits = s.add(logits, b)?;
        let p_vocab = s.softmax(logits)?;
        let (dist, p_gen) = match &self.pointer {
            None => (p_vocab, None),
            Some(head) => {
                let p_gen = head.p_gen(s, m_r, h, o)?;
                let dist = pointer_generator_mix(s, p_gen, p_vocab, z, &ex.source.copy, self.output_size(ex))?;
                (dist, Some(p_gen))
            }
        };
        Ok(StepOutput {
            dist,
            p_gen,
            attention: z,
            next,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, random_embeddings, Vocabulary, START};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        build_vocab("a b c d e .".split(' '), 20).unwrap()
    }

    fn model(variant: Variant, v: &Vocabulary) -> (Summarizer, ParamStore) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let emb = random_embeddings(v.len(), 4, &mut rng);
        Summarizer::build(ModelConfig::new(variant, v.len(), 4), emb, &mut rng).unwrap()
    }

    #[test]
    fn distributions_normalized_for_every_variant() {
        let v = vocab();
        for variant in [Variant::Vanilla, Variant::Improved, Variant::Hier] {
            let (m, store) = model(variant, &v);
            let ex = match variant {
                Variant::Hier => Example::hier(&[vec!["a", "zz", "."], vec!["c"]], 3, 4, &["zz"], &v).unwrap(),
                _ => Example::flat(&["a", "zz", "c"], &["zz"], &v).unwrap(),
            };
            let mut s = Session::new(&store, false);
            let st = m.encode(&mut s, &ex).unwrap();
            let out = m.decode_step(&mut s, &ex, &st, START).unwrap();
            let d = s.data(out.dist);
            assert_eq!(d.len(), m.output_size(&ex));
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9, "{variant}");
            let z = s.data(out.attention);
            for (zi, &live) in z.iter().zip(&ex.source.mask) {
                if !live {
                    assert_eq!(*zi, 0.0);
                }
            }
            if variant.has_pointer() {
                assert!(d[v.len()] > 0.0, "copied OOV has mass");
            }
        }
    }

    #[test]
    fn layout_mismatch_rejected() {
        let v = vocab();
        let (m, store) = model(Variant::Hier, &v);
        let ex = Example::flat(&["a"], &[], &v).unwrap();
        let mut s = Session::new(&store, false);
        assert!(m.encode(&mut s, &ex).is_err());
    }

    #[test]
    fn vanilla_targets_collapse_oov() {
        let v = vocab();
        let (m, _) = model(Variant::Vanilla, &v);
        assert_eq!(m.target_id(v.len() + 2), UNK);
        let (m, _) = model(Variant::Improved, &v);
        assert_eq!(m.target_id(v.len() + 2), v.len() + 2);
    }

    #[test]
    fn variant_parsing() {
        for v in [Variant::Vanilla, Variant::Improved, Variant::Hier] {
            assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
        }
        assert!("flat".parse::<Variant>().is_err());
    }
}
