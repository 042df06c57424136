//! `surface | lemma | pos` factored tokens.

use std::fmt;

use super::DataError;

/// One word augmented with its lemma and part-of-speech tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FactoredToken {
    pub surface: String,
    pub lemma: String,
    pub pos: String,
}

impl FactoredToken {
    /// Compact `surface|lemma|pos` form.
    pub fn compact(&self) -> String {
        format!("{}|{}|{}", self.surface, self.lemma, self.pos)
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.surface, &self.lemma, &self.pos]
    }
}

/// Spaced `surface | lemma | pos` form, as found in factored corpora.
impl fmt::Display for FactoredToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} | {} | {}", self.surface, self.lemma, self.pos)
    }
}

/// Parses one factored token, spaced (`a | b | c`) or compact (`a|b|c`).
///
/// With more than two separators only the two rightmost split, so a field
/// that is itself a bar survives (`| | | | |` is three bars).
pub fn parse_factored_token(raw: &str) -> Result<FactoredToken, DataError> {
    let trimmed = raw.trim();
    let bad = |reason| DataError::FactoredToken {
        raw: raw.to_string(),
        reason,
    };
    let parts: Vec<&str> = if trimmed.contains(" | ") {
        trimmed.rsplitn(3, " | ").collect()
    } else {
        trimmed.rsplitn(3, '|').collect()
    };
    if parts.len() < 3 {
        return Err(bad("expected surface, lemma and pos separated by '|'"));
    }
    let (pos, lemma, surface) = (parts[0].trim(), parts[1].trim(), parts[2].trim());
    if surface.is_empty() || lemma.is_empty() || pos.is_empty() {
        return Err(bad("empty field"));
    }
    Ok(FactoredToken {
        surface: surface.to_string(),
        lemma: lemma.to_string(),
        pos: pos.to_string(),
    })
}

/// Element of a factored text stream.
///
/// Factored corpora interleave complete triples with occasional bare tokens
/// (e.g. the sentence separator `.` in factored summaries).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FactoredUnit {
    Factored(FactoredToken),
    Bare(String),
}

impl FactoredUnit {
    /// Model stream tokens: three per unit. Bare tokens repeat in every
    /// slot so the stream stays aligned on triples.
    pub fn stream_tokens(&self) -> [String; 3] {
        match self {
            FactoredUnit::Factored(t) => [t.surface.clone(), t.lemma.clone(), t.pos.clone()],
            FactoredUnit::Bare(b) => [b.clone(), b.clone(), b.clone()],
        }
    }

    pub fn surface(&self) -> &str {
        match self {
            FactoredUnit::Factored(t) => &t.surface,
            FactoredUnit::Bare(b) => b,
        }
    }
}

impl fmt::Display for FactoredUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FactoredUnit::Factored(t) => t.fmt(f),
            FactoredUnit::Bare(b) => f.write_str(b),
        }
    }
}

/// Splits a whitespace-separated factored stream into units.
///
/// A unit is `a | b | c` (five whitespace tokens), a compact `a|b|c` token,
/// or a bare token. Any other token containing `|` is malformed.
pub fn parse_factored_stream(text: &str) -> Result<Vec<FactoredUnit>, DataError> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let mut units = Vec::with_capacity(toks.len() / 5 + 1);
    let mut i = 0;
    while i < toks.len() {
        if i + 4 < toks.len() && toks[i + 1] == "|" && toks[i + 3] == "|" {
            units.push(FactoredUnit::Factored(FactoredToken {
                surface: toks[i].to_string(),
                lemma: toks[i + 2].to_string(),
                pos: toks[i + 4].to_string(),
            }));
            i += 5;
            continue;
        }
        let t = toks[i];
        if t != "|" && t.contains('|') {
            units.push(FactoredUnit::Factored(parse_factored_token(t)?));
        } else {
            units.push(FactoredUnit::Bare(t.to_string()));
        }
        i += 1;
    }
    Ok(units)
}

/// Inverse of [`parse_factored_stream`] up to whitespace normalization.
pub fn serialize_stream(units: &[FactoredUnit]) -> String {
    let mut out = String::new();
    for (k, u) in units.iter().enumerate() {
        if k > 0 {
            out.push(' ');
        }
        out.push_str(&u.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str, l: &str, p: &str) -> FactoredToken {
        FactoredToken {
            surface: s.into(),
            lemma: l.into(),
            pos: p.into(),
        }
    }

    #[test]
    fn parses_spaced_tokens() {
        assert_eq!(
            parse_factored_token("Mayweather | mayweath | NNP").unwrap(),
            tok("Mayweather", "mayweath", "NNP")
        );
        assert_eq!(parse_factored_token("# | # | #").unwrap(), tok("#", "#", "#"));
        assert_eq!(parse_factored_token(". | . | .").unwrap(), tok(".", ".", "."));
        assert_eq!(parse_factored_token("  a|b|c ").unwrap(), tok("a", "b", "c"));
    }

    #[test]
    fn bar_fields_survive() {
        assert_eq!(parse_factored_token("| | | | |").unwrap(), tok("|", "|", "|"));
        assert_eq!(parse_factored_token("a|b | c | d").unwrap(), tok("a|b", "c", "d"));
    }

    #[test]
    fn too_few_fields_quotes_raw() {
        let err = parse_factored_token("word | lemma").unwrap_err();
        assert!(err.to_string().contains("\"word | lemma\""), "{err}");
        assert!(parse_factored_token("plain").is_err());
        assert!(parse_factored_token("a | | c").is_err());
    }

    #[test]
    fn display_round_trips() {
        let t = tok("Pacquiao", "pacquiao", "NNP");
        assert_eq!(parse_factored_token(&t.to_string()).unwrap(), t);
        assert_eq!(parse_factored_token(&t.compact()).unwrap(), t);
    }

    #[test]
    fn stream_with_bare_separators() {
        let text = "media | media | nns . the | the | dt";
        let units = parse_factored_stream(text).unwrap();
        assert_eq!(
            units,
            vec![
                FactoredUnit::Factored(tok("media", "media", "nns")),
                FactoredUnit::Bare(".".into()),
                FactoredUnit::Factored(tok("the", "the", "dt")),
            ]
        );
        assert_eq!(serialize_stream(&units), text);
        assert_eq!(units[1].stream_tokens(), [".", ".", "."].map(String::from));
    }

    #[test]
    fn compact_tokens_in_stream() {
        let units = parse_factored_stream("a|b|c x | y | z").unwrap();
        assert_eq!(units.len(), 2);
        assert!(parse_factored_stream("ok | ok | NN broken|token").is_err());
    }
}
