//! Tokenization, sentence splitting and truncation into model layouts.

use super::factored::parse_factored_stream;
use super::vocab::PAD_TOKEN;
use super::DataError;

/// How an article is presented to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    /// One token stream.
    Flat,
    /// Sentence × word grid.
    Hier,
}

/// Surface text or `surface | lemma | pos` factored text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenFormat {
    Plain,
    Factored,
}

impl TokenFormat {
    /// Stream tokens per word.
    pub fn width(self) -> usize {
        match self {
            TokenFormat::Plain => 1,
            TokenFormat::Factored => 3,
        }
    }
}

/// Truncation limits, in stream tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShapeLimits {
    pub article_len: usize,
    pub summary_len: usize,
    pub factored_article_len: usize,
    pub factored_summary_len: usize,
    pub max_sentences: usize,
    pub max_sentence_len: usize,
}

impl Default for ShapeLimits {
    fn default() -> Self {
        ShapeLimits {
            article_len: 400,
            summary_len: 100,
            factored_article_len: 800,
            factored_summary_len: 300,
            max_sentences: 20,
            max_sentence_len: 20,
        }
    }
}

impl ShapeLimits {
    pub fn article_cap(&self, format: TokenFormat) -> usize {
        match format {
            TokenFormat::Plain => self.article_len,
            TokenFormat::Factored => self.factored_article_len,
        }
    }

    pub fn summary_cap(&self, format: TokenFormat) -> usize {
        match format {
            TokenFormat::Plain => self.summary_len,
            TokenFormat::Factored => self.factored_summary_len,
        }
    }
}

/// A shaped article.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Shaped {
    Flat {
        tokens: Vec<String>,
        /// Stream length before truncation.
        original_len: usize,
    },
    Hier {
        /// Live sentences only (at most `max_sentences`, each at most
        /// `max_sentence_len` tokens).
        sentences: Vec<Vec<String>>,
        max_sentences: usize,
        max_sentence_len: usize,
        original_sentences: usize,
        original_len: usize,
    },
}

const TERMINALS: [&str; 3] = [".", "!", "?"];

impl Shaped {
    pub fn token_count(&self) -> usize {
        match self {
            Shaped::Flat { tokens, .. } => tokens.len(),
            Shaped::Hier { sentences, .. } => sentences.iter().map(Vec::len).sum(),
        }
    }

    pub fn original_len(&self) -> usize {
        match self {
            Shaped::Flat { original_len, .. } | Shaped::Hier { original_len, .. } => *original_len,
        }
    }

    pub fn was_truncated(&self) -> bool {
        self.token_count() < self.original_len()
    }

    /// Padded `max_sentences × max_sentence_len` grid with its live mask.
    /// Flat articles have no grid.
    pub fn grid(&self) -> Option<(Vec<Vec<String>>, Vec<Vec<bool>>)> {
        let Shaped::Hier {
            sentences,
            max_sentences,
            max_sentence_len,
            ..
        } = self
        else {
            return None;
        };
        let mut grid = Vec::with_capacity(*max_sentences);
        let mut mask = Vec::with_capacity(*max_sentences);
        for i in 0..*max_sentences {
            let live = sentences.get(i).map_or(&[][..], Vec::as_slice);
            let mut row: Vec<String> = live.to_vec();
            row.resize(*max_sentence_len, PAD_TOKEN.to_string());
            let mut m = vec![false; *max_sentence_len];
            m[..live.len()].fill(true);
            grid.push(row);
            mask.push(m);
        }
        Some((grid, mask))
    }

    /// Text form that reshapes to the same tokens. Hier sentences cut short
    /// of their terminal punctuation get one appended, which the next
    /// truncation drops again.
    pub fn normalized_text(&self, format: TokenFormat) -> String {
        let w = format.width();
        let join = |toks: &[String]| -> Vec<String> {
            toks.chunks(w)
                .map(|c| if w == 3 && c.len() == 3 { format!("{} | {} | {}", c[0], c[1], c[2]) } else { c.join(" ") })
                .collect()
        };
        match self {
            Shaped::Flat { tokens, .. } => join(tokens).join(" "),
            Shaped::Hier { sentences, .. } => {
                let mut words = Vec::new();
                for s in sentences {
                    words.extend(join(s));
                    let ends = s.len() >= w && TERMINALS.contains(&s[s.len() - w].as_str());
                    if !ends {
                        words.push(if w == 3 { ". | . | .".to_string() } else { ".".to_string() });
                    }
                }
                words.join(" ")
            }
        }
    }
}

/// Surface tokens of a model stream: every token for plain text, every
/// first of three for factored text.
pub fn project_surface<S: AsRef<str>>(tokens: &[S], format: TokenFormat) -> Vec<String> {
    tokens
        .iter()
        .step_by(format.width())
        .map(|t| t.as_ref().to_string())
        .collect()
}

/// Lowercased stream units: one token per plain word, three per factored
/// unit.
pub fn stream_units(text: &str, format: TokenFormat) -> Result<Vec<Vec<String>>, DataError> {
    match format {
        TokenFormat::Plain => Ok(text.split_whitespace().map(|t| vec![t.to_lowercase()]).collect()),
        TokenFormat::Factored => Ok(parse_factored_stream(text)?
            .iter()
            .map(|u| u.stream_tokens().iter().map(|t| t.to_lowercase()).collect())
            .collect()),
    }
}

/// Concatenates whole units while the stream stays within `cap`.
pub fn truncate_units(units: &[Vec<String>], cap: usize) -> Vec<String> {
    let mut out = Vec::new();
    for u in units {
        if out.len() + u.len() > cap {
            break;
        }
        out.extend(u.iter().cloned());
    }
    out
}

/// Splits after every unit whose surface is `.`, `!` or `?`.
pub fn split_sentences(units: &[Vec<String>]) -> Vec<Vec<Vec<String>>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for u in units {
        current.push(u.clone());
        if TERMINALS.contains(&u[0].as_str()) {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    sentences
}

/// Tokenizes, lowercases and truncates an article for `layout`.
pub fn tokenize_and_truncate(
    text: &str,
    layout: Layout,
    format: TokenFormat,
    limits: &ShapeLimits,
) -> Result<Shaped, DataError> {
    let units = stream_units(text, format)?;
    if units.is_empty() {
        return Err(DataError::Empty("article"));
    }
    let original_len = units.iter().map(Vec::len).sum();
    Ok(match layout {
        Layout::Flat => Shaped::Flat {
            tokens: truncate_units(&units, limits.article_cap(format)),
            original_len,
        },
        Layout::Hier => {
            let split = split_sentences(&units);
            let original_sentences = split.len();
            let sentences = split
                .iter()
                .take(limits.max_sentences)
                .map(|s| truncate_units(s, limits.max_sentence_len))
                .filter(|s| !s.is_empty())
                .collect::<Vec<_>>();
            if sentences.is_empty() {
                return Err(DataError::Empty("article after truncation"));
            }
            Shaped::Hier {
                sentences,
                max_sentences: limits.max_sentences,
                max_sentence_len: limits.max_sentence_len,
                original_sentences,
                original_len,
            }
        }
    })
}

/// Summaries are always one flat stream.
pub fn shape_summary(text: &str, format: TokenFormat, limits: &ShapeLimits) -> Result<(Vec<String>, usize), DataError> {
    let units = stream_units(text, format)?;
    if units.is_empty() {
        return Err(DataError::Empty("summary"));
    }
    let original = units.iter().map(Vec::len).sum();
    Ok((truncate_units(&units, limits.summary_cap(format)), original))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn flat_article_truncates_to_400() {
        let s = tokenize_and_truncate(&words(450), Layout::Flat, TokenFormat::Plain, &ShapeLimits::default()).unwrap();
        assert_eq!(s.token_count(), 400);
        assert!(s.was_truncated());
        let (sum, orig) = shape_summary(&words(150), TokenFormat::Plain, &ShapeLimits::default()).unwrap();
        assert_eq!((sum.len(), orig), (100, 150));
    }

    #[test]
    fn lowercases() {
        let s = tokenize_and_truncate("The Cat .", Layout::Flat, TokenFormat::Plain, &ShapeLimits::default()).unwrap();
        let Shaped::Flat { tokens, .. } = s else { panic!() };
        assert_eq!(tokens, vec!["the", "cat", "."]);
    }

    #[test]
    fn hier_grid_pads_to_20_by_20() {
        let text = "a b c d e . f g h i j . k l m n o .";
        let s = tokenize_and_truncate(text, Layout::Hier, TokenFormat::Plain, &ShapeLimits::default()).unwrap();
        let (grid, mask) = s.grid().unwrap();
        assert_eq!(grid.len(), 20);
        assert!(grid.iter().all(|r| r.len() == 20));
        let live_rows = mask.iter().filter(|r| r.iter().any(|&m| m)).count();
        assert_eq!(live_rows, 3);
        assert_eq!(mask[0].iter().filter(|&&m| m).count(), 6);
        assert_eq!(grid[5][0], PAD_TOKEN);
    }

    #[test]
    fn hier_caps_sentences_and_words() {
        let text: String = (0..25).map(|i| format!("{} .", words(30).replace('w', &format!("s{i}w")))).collect::<Vec<_>>().join(" ");
        let s = tokenize_and_truncate(&text, Layout::Hier, TokenFormat::Plain, &ShapeLimits::default()).unwrap();
        let Shaped::Hier { sentences, original_sentences, .. } = &s else { panic!() };
        assert_eq!(sentences.len(), 20);
        assert_eq!(*original_sentences, 25);
        assert!(sentences.iter().all(|s| s.len() == 20));
    }

    #[test]
    fn factored_article_caps_at_whole_triples() {
        let text = (0..300).map(|i| format!("W{i} | w{i} | NN")).collect::<Vec<_>>().join(" ");
        let units = stream_units(&text, TokenFormat::Factored).unwrap();
        // 3× expansion oracle
        assert_eq!(units.iter().map(Vec::len).sum::<usize>(), 900);
        let s = tokenize_and_truncate(&text, Layout::Flat, TokenFormat::Factored, &ShapeLimits::default()).unwrap();
        assert_eq!(s.token_count(), 798);
        assert_eq!(s.token_count() % 3, 0);
        let Shaped::Flat { tokens, .. } = s else { panic!() };
        assert_eq!(&tokens[..3], &["w0", "w0", "nn"]);
    }

    #[test]
    fn surface_projection() {
        let toks = ["the", "the", "dt", "cats", "cat", "nns"];
        assert_eq!(project_surface(&toks, TokenFormat::Factored), vec!["the", "cats"]);
        assert_eq!(project_surface(&toks[..2], TokenFormat::Plain).len(), 2);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(tokenize_and_truncate("   ", Layout::Flat, TokenFormat::Plain, &ShapeLimits::default()).is_err());
        assert!(shape_summary("", TokenFormat::Plain, &ShapeLimits::default()).is_err());
    }

    #[test]
    fn normalized_text_reshapes_identically() {
        let limits = ShapeLimits {
            max_sentences: 3,
            max_sentence_len: 4,
            ..ShapeLimits::default()
        };
        let text = "a b c d e f . g h . i j k l m ! n o";
        let s = tokenize_and_truncate(text, Layout::Hier, TokenFormat::Plain, &limits).unwrap();
        let again = tokenize_and_truncate(&s.normalized_text(TokenFormat::Plain), Layout::Hier, TokenFormat::Plain, &limits).unwrap();
        let (Shaped::Hier { sentences: a, .. }, Shaped::Hier { sentences: b, .. }) = (&s, &again) else { panic!() };
        assert_eq!(a, b);
    }
}
