//! Fixed vocabulary and the per-document extended OOV map.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::DataError;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const START: usize = 2;
pub const STOP: usize = 3;

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const START_TOKEN: &str = "[START]";
pub const STOP_TOKEN: &str = "[STOP]";

const RESERVED: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, START_TOKEN, STOP_TOKEN];

pub const DEFAULT_VOCAB_SIZE: usize = 50_000;

/// Bijective token/id maps with the four reserved ids first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds from tokens in id order. The first four must be the reserved
    /// tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, DataError> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(DataError::Vocabulary(format!(
                "first entries must be {}",
                RESERVED.join(" ")
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(DataError::Vocabulary(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(DataError::Vocabulary(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, falling back to UNK.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Surface of a (possibly extended) id.
    pub fn surface<'a>(&'a self, id: usize, oov: &'a ExtendedVocabMap) -> Option<&'a str> {
        self.token(id).or_else(|| oov.surface(id))
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, DataError> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        fs::write(path, self.to_text()).map_err(|e| DataError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_text(&fs::read_to_string(path).map_err(|e| DataError::io(path, e))?)
    }
}

/// Top `size - 4` tokens by frequency (ties lexicographic) after the
/// reserved ids.
pub fn build_vocab<'a, I>(tokens: I, size: usize) -> Result<Vocabulary, DataError>
where
    I: IntoIterator<Item = &'a str>,
{
    if size <= RESERVED.len() {
        return Err(DataError::Vocabulary(format!("size must exceed {}, got {size}", RESERVED.len())));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        if !RESERVED.contains(&t) {
            *counts.entry(t).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let wanted = size - RESERVED.len();
    if ranked.len() < wanted {
        log::warn!(
            "corpus has {} distinct tokens; vocabulary size {} instead of {size}",
            ranked.len(),
            ranked.len() + RESERVED.len()
        );
    }
    let tokens = RESERVED
        .iter()
        .map(|t| t.to_string())
        .chain(ranked.into_iter().take(wanted).map(|(t, _)| t.to_string()))
        .collect();
    Vocabulary::from_tokens(tokens)
}

/// Per-document OOV surfaces numbered from the base vocabulary size.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtendedVocabMap {
    base: usize,
    surfaces: Vec<String>,
    index: HashMap<String, usize>,
}

impl ExtendedVocabMap {
    pub fn new(base: usize) -> Self {
        ExtendedVocabMap {
            base,
            surfaces: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Rebuilds a map from explicit `(surface, id)` pairs, rejecting ids that
    /// collide with the base vocabulary or each other, or leave gaps.
    pub fn from_assignments(base: usize, pairs: &[(String, usize)]) -> Result<Self, DataError> {
        let mut slots: Vec<Option<String>> = vec![None; pairs.len()];
        for (surface, id) in pairs {
            let k = id
                .checked_sub(base)
                .filter(|&k| k < pairs.len())
                .ok_or_else(|| DataError::OovMap(format!("id {id} for {surface:?} outside {base}..{}", base + pairs.len())))?;
            if slots[k].is_some() {
                return Err(DataError::OovMap(format!("id {id} assigned twice")));
            }
            slots[k] = Some(surface.clone());
        }
        let mut map = ExtendedVocabMap::new(base);
        for s in slots.into_iter().flatten() {
            if map.index.contains_key(&s) {
                return Err(DataError::OovMap(format!("surface {s:?} assigned twice")));
            }
            map.insert(&s);
        }
        Ok(map)
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    /// Base size plus OOV count.
    pub fn extended_size(&self) -> usize {
        self.base + self.surfaces.len()
    }

    pub fn get(&self, surface: &str) -> Option<usize> {
        self.index.get(surface).copied()
    }

    pub fn insert(&mut self, surface: &str) -> usize {
        if let Some(id) = self.get(surface) {
            return id;
        }
        let id = self.base + self.surfaces.len();
        self.surfaces.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        id
    }

    pub fn surface(&self, id: usize) -> Option<&str> {
        id.checked_sub(self.base)
            .and_then(|k| self.surfaces.get(k))
            .map(String::as_str)
    }

    pub fn assignments(&self) -> Vec<(String, usize)> {
        self.surfaces
            .iter()
            .enumerate()
            .map(|(k, s)| (s.clone(), self.base + k))
            .collect()
    }
}

/// Source ids in both encoder and copy forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtendedIds {
    /// Embedding ids; OOV tokens are UNK.
    pub input: Vec<usize>,
    /// Copy targets; OOV tokens carry their extended id.
    pub copy: Vec<usize>,
    pub oov: ExtendedVocabMap,
}

pub fn map_extended<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary) -> ExtendedIds {
    let mut oov = ExtendedVocabMap::new(vocab.len());
    let mut input = Vec::with_capacity(tokens.len());
    let mut copy = Vec::with_capacity(tokens.len());
    for t in tokens {
        let t = t.as_ref();
        match vocab.get(t) {
            Some(id) => {
                input.push(id);
                copy.push(id);
            }
            None => {
                input.push(UNK);
                copy.push(oov.insert(t));
            }
        }
    }
    ExtendedIds { input, copy, oov }
}

/// Training targets: base id, else the document's extended id, else UNK.
pub fn target_ids<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, oov: &ExtendedVocabMap) -> Vec<usize> {
    tokens
        .iter()
        .map(|t| {
            let t = t.as_ref();
            vocab.get(t).or_else(|| oov.get(t)).unwrap_or(UNK)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn frequency_order_with_reserved_prefix() {
        let v = build_vocab(toks("a a b"), 6).unwrap();
        assert_eq!(v.tokens(), &["[PAD]", "[UNK]", "[START]", "[STOP]", "a", "b"]);
        assert_eq!((v.id("a"), v.id("zzz")), (4, UNK));
    }

    #[test]
    fn ties_break_lexicographically() {
        let v = build_vocab(toks("b a"), 6).unwrap();
        assert_eq!(v.token(4), Some("a"));
        assert_eq!(v.token(5), Some("b"));
    }

    #[test]
    fn small_corpus_gives_actual_size() {
        let v = build_vocab(toks("x y z x"), DEFAULT_VOCAB_SIZE).unwrap();
        assert_eq!(v.len(), 7);
        assert!(build_vocab(toks("a"), 4).is_err());
    }

    #[test]
    fn truncates_to_size() {
        let v = build_vocab(toks("c c c b b a d"), 6).unwrap();
        assert_eq!(&v.tokens()[4..], &["c", "b"]);
    }

    #[test]
    fn text_round_trip() {
        let v = build_vocab(toks("the cat sat on the mat"), 100).unwrap();
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("a\nb\n").is_err());
        assert!(Vocabulary::from_text("[PAD]\n[UNK]\n[START]\n[STOP]\nx\nx\n").is_err());
    }

    #[test]
    fn oov_first_occurrence_order() {
        let mut tokens = vec!["[PAD]".to_string(), "[UNK]".into(), "[START]".into(), "[STOP]".into()];
        tokens.extend((4..50_000).map(|i| format!("w{i}")));
        let v = Vocabulary::from_tokens(tokens).unwrap();
        let e = map_extended(&["x", "y", "x"], &v);
        assert_eq!(e.copy, vec![50_000, 50_001, 50_000]);
        assert_eq!(e.input, vec![UNK; 3]);
        let e = map_extended(&["w4", "w5"], &v);
        assert!(e.oov.is_empty());
    }

    #[test]
    fn unseen_summary_oov_targets_unk() {
        let v = build_vocab(toks("a b"), 10).unwrap();
        let e = map_extended(&["a", "q"], &v);
        let t = target_ids(&["q", "r", "b"], &v, &e.oov);
        assert_eq!(t, vec![v.len(), UNK, v.id("b")]);
        assert_eq!(v.surface(v.len(), &e.oov), Some("q"));
    }

    #[test]
    fn assignment_collisions_rejected() {
        let ok = ExtendedVocabMap::from_assignments(10, &[("b".into(), 11), ("a".into(), 10)]).unwrap();
        assert_eq!(ok.surface(10), Some("a"));
        assert!(ExtendedVocabMap::from_assignments(10, &[("a".into(), 3)]).is_err());
        assert!(ExtendedVocabMap::from_assignments(10, &[("a".into(), 10), ("b".into(), 10)]).is_err());
        assert!(ExtendedVocabMap::from_assignments(10, &[("a".into(), 10), ("a".into(), 11)]).is_err());
    }
}
