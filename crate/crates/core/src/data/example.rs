//! Corpus lines and model-ready examples.

use std::fs;
use std::path::Path;

use super::shape::{shape_summary, tokenize_and_truncate, Layout, ShapeLimits, Shaped, TokenFormat};
use super::vocab::{map_extended, target_ids, ExtendedVocabMap, Vocabulary, PAD_TOKEN, STOP};
use super::DataError;

/// One `article<TAB>summary` line. The summary is optional for inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusLine {
    /// 1-based line number in the source file.
    pub line: usize,
    pub article: String,
    pub summary: Option<String>,
}

/// Splits corpus text into lines; blank lines are ignored.
pub fn parse_corpus(text: &str) -> Result<Vec<CorpusLine>, DataError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let (article, summary) = match raw.split_once('\t') {
            Some((a, s)) => (a, Some(s)),
            None => (raw, None),
        };
        if article.trim().is_empty() {
            return Err(DataError::Corpus {
                line: n + 1,
                reason: "empty article".into(),
            });
        }
        out.push(CorpusLine {
            line: n + 1,
            article: article.to_string(),
            summary: summary.map(str::to_string),
        });
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<CorpusLine>, DataError> {
    parse_corpus(&fs::read_to_string(path).map_err(|e| DataError::io(path, e))?)
}

/// Encoder-side ids. Hierarchical sources are a row-major
/// `sentences × words` grid, which is also the decoder's word memory order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceIds {
    pub tokens: Vec<String>,
    /// Embedding ids (OOV → UNK).
    pub input: Vec<usize>,
    /// Copy ids (OOV → extended id, PAD → 0).
    pub copy: Vec<usize>,
    pub mask: Vec<bool>,
    /// `(sentences, words)` for hierarchical sources.
    pub grid: Option<(usize, usize)>,
}

impl SourceIds {
    pub fn len(&self) -> usize {
        self.input.len()
    }

    pub fn is_empty(&self) -> bool {
        self.input.is_empty()
    }

    /// Per-sentence liveness for a grid source.
    pub fn sentence_mask(&self) -> Option<Vec<bool>> {
        let (_, t) = self.grid?;
        Some(self.mask.chunks(t).map(|row| row.iter().any(|&m| m)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub source: SourceIds,
    pub oov: ExtendedVocabMap,
    /// Extended target ids ending with STOP; empty when there is no summary.
    pub target: Vec<usize>,
    /// Reference summary tokens.
    pub reference: Vec<String>,
}

impl Example {
    pub fn flat<S: AsRef<str>>(article: &[S], summary: &[S], vocab: &Vocabulary) -> Result<Self, DataError> {
        if article.is_empty() {
            return Err(DataError::Empty("article"));
        }
        let tokens: Vec<String> = article.iter().map(|t| t.as_ref().to_string()).collect();
        let ext = map_extended(&tokens, vocab);
        let source = SourceIds {
            mask: tokens.iter().map(|t| t != PAD_TOKEN).collect(),
            tokens,
            input: ext.input,
            copy: ext.copy,
            grid: None,
        };
        Ok(Self::finish(source, ext.oov, summary, vocab))
    }

    /// Pads `sentences` into an `s_in × t_in` grid. Sentences or words beyond
    /// the grid are rejected; shape first with [`tokenize_and_truncate`].
    pub fn hier<S: AsRef<str>>(
        sentences: &[Vec<S>],
        s_in: usize,
        t_in: usize,
        summary: &[S],
        vocab: &Vocabulary,
    ) -> Result<Self, DataError> {
        if sentences.iter().all(Vec::is_empty) {
            return Err(DataError::Empty("article"));
        }
        if sentences.len() > s_in || sentences.iter().any(|s| s.len() > t_in) {
            return Err(DataError::Vocabulary(format!("document exceeds the {s_in}×{t_in} grid")));
        }
        let mut tokens = Vec::with_capacity(s_in * t_in);
        for i in 0..s_in {
            let live = sentences.get(i).map_or(&[][..], Vec::as_slice);
            tokens.extend(live.iter().map(|t| t.as_ref().to_string()));
            tokens.extend(std::iter::repeat(PAD_TOKEN.to_string()).take(t_in - live.len()));
        }
        let ext = map_extended(&tokens, vocab);
        let source = SourceIds {
            mask: tokens.iter().map(|t| t != PAD_TOKEN).collect(),
            tokens,
            input: ext.input,
            copy: ext.copy,
            grid: Some((s_in, t_in)),
        };
        Ok(Self::finish(source, ext.oov, summary, vocab))
    }

    fn finish<S: AsRef<str>>(source: SourceIds, oov: ExtendedVocabMap, summary: &[S], vocab: &Vocabulary) -> Self {
        let reference: Vec<String> = summary.iter().map(|t| t.as_ref().to_string()).collect();
        let mut target = Vec::new();
        if !reference.is_empty() {
            target = target_ids(&reference, vocab, &oov);
            target.push(STOP);
        }
        Example {
            source,
            oov,
            target,
            reference,
        }
    }

    /// Tokenizes, truncates and maps a corpus line.
    pub fn from_line(
        line: &CorpusLine,
        vocab: &Vocabulary,
        layout: Layout,
        format: TokenFormat,
        limits: &ShapeLimits,
    ) -> Result<Self, DataError> {
        let at = |e: DataError| DataError::Corpus {
            line: line.line,
            reason: e.to_string(),
        };
        let shaped = tokenize_and_truncate(&line.article, layout, format, limits).map_err(at)?;
        let summary = match line.summary.as_deref() {
            Some(s) if !s.trim().is_empty() => shape_summary(s, format, limits).map_err(at)?.0,
            _ => Vec::new(),
        };
        match shaped {
            Shaped::Flat { tokens, .. } => Self::flat(&tokens, &summary, vocab),
            Shaped::Hier {
                sentences,
                max_sentences,
                max_sentence_len,
                ..
            } => Self::hier(&sentences, max_sentences, max_sentence_len, &summary, vocab),
        }
        .map_err(at)
    }

    /// Every extended id this example can emit.
    pub fn extended_size(&self) -> usize {
        self.oov.extended_size()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, UNK};

    #[test]
    fn corpus_lines() {
        let c = parse_corpus("a b\tc\n\n d e \n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].summary.as_deref(), Some("c"));
        assert_eq!(c[1].line, 3);
        assert!(c[1].summary.is_none());
        assert!(parse_corpus("\tsummary only\n").is_err());
    }

    #[test]
    fn flat_example_targets_end_with_stop() {
        let v = build_vocab("a b c".split(' '), 10).unwrap();
        let e = Example::flat(&["a", "zz", "b"], &["zz", "c", "yy"], &v).unwrap();
        assert_eq!(e.source.input, vec![v.id("a"), UNK, v.id("b")]);
        assert_eq!(e.source.copy[1], v.len());
        assert_eq!(e.target, vec![v.len(), v.id("c"), UNK, STOP]);
        assert!(e.target.iter().all(|&t| t < e.extended_size()));
    }

    #[test]
    fn hier_grid_masks_padding() {
        let v = build_vocab("a b c .".split(' '), 10).unwrap();
        let sents = vec![vec!["a", "b", "."], vec!["c"]];
        let e = Example::hier(&sents, 3, 4, &["a"], &v).unwrap();
        assert_eq!(e.source.len(), 12);
        assert_eq!(e.source.mask.iter().filter(|&&m| m).count(), 4);
        assert_eq!(e.source.sentence_mask().unwrap(), vec![true, true, false]);
        assert_eq!(e.source.copy[3], 0);
        assert_eq!(e.source.tokens[4], "c");
        assert!(Example::hier(&sents, 1, 4, &["a"], &v).is_err());
    }

    #[test]
    fn from_line_hier() {
        let v = build_vocab("a b c d .".split(' '), 20).unwrap();
        let line = CorpusLine {
            line: 1,
            article: "A b . c d .".into(),
            summary: Some("a c".into()),
        };
        let e = Example::from_line(&line, &v, Layout::Hier, TokenFormat::Plain, &ShapeLimits::default()).unwrap();
        assert_eq!(e.source.grid, Some((20, 20)));
        assert_eq!(e.source.tokens[20], "c");
        assert_eq!(e.reference, vec!["a", "c"]);
    }
}
