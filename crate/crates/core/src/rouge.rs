//! ROUGE-1, ROUGE-2 and ROUGE-L over token sequences.
//!
//! Exact token matching: no stemming, no stopword removal. Multi-sentence
//! summaries are scored as one flat sequence.

use std::fmt::{self, Write as _};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub fn from_counts(overlap: usize, candidate: usize, reference: usize) -> Self {
        let precision = if candidate == 0 { 0.0 } else { overlap as f64 / candidate as f64 };
        let recall = if reference == 0 { 0.0 } else { overlap as f64 / reference as f64 };
        RougeScore {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RougeVariant {
    One,
    Two,
    L,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 3] = [RougeVariant::One, RougeVariant::Two, RougeVariant::L];

    pub fn score<T: Eq>(self, reference: &[T], candidate: &[T]) -> RougeScore {
        match self {
            RougeVariant::One => rouge_n(reference, candidate, 1),
            RougeVariant::Two => rouge_n(reference, candidate, 2),
            RougeVariant::L => rouge_l(reference, candidate),
        }
    }
}

impl fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RougeVariant::One => "rouge-1",
            RougeVariant::Two => "rouge-2",
            RougeVariant::L => "rouge-l",
        })
    }
}

impl FromStr for RougeVariant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "rouge-1" | "rouge1" => Ok(RougeVariant::One),
            "2" | "rouge-2" | "rouge2" => Ok(RougeVariant::Two),
            "l" | "rouge-l" | "rougel" => Ok(RougeVariant::L),
            other => Err(format!("unknown ROUGE variant {other:?} (expected 1, 2 or l)")),
        }
    }
}

/// Number of candidate windows matched one-to-one with equal reference
/// windows, i.e. the sum over distinct n-grams of the smaller count.
fn clipped_overlap<T: Eq>(reference: &[T], candidate: &[T], n: usize) -> usize {
    let rw = window_count(reference, n);
    let mut small = 0u64;
    let mut large = if rw > 64 { vec![false; rw] } else { Vec::new() };
    let mut overlap = 0;
    for g in candidate.windows(n) {
        for (j, r) in reference.windows(n).enumerate() {
            let used = if rw > 64 { large[j] } else { small >> j & 1 == 1 };
            if !used && g == r {
                if rw > 64 {
                    large[j] = true;
                } else {
                    small |= 1 << j;
                }
                overlap += 1;
                break;
            }
        }
    }
    overlap
}

fn window_count<T>(tokens: &[T], n: usize) -> usize {
    if n == 0 {
        0
    } else {
        tokens.len().saturating_sub(n - 1)
    }
}

/// Clipped n-gram overlap.
pub fn rouge_n<T: Eq>(reference: &[T], candidate: &[T], n: usize) -> RougeScore {
    if n == 0 {
        return RougeScore::default();
    }
    RougeScore::from_counts(
        clipped_overlap(reference, candidate, n),
        window_count(candidate, n),
        window_count(reference, n),
    )
}

/// Longest common subsequence length, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    let mut stack = [0usize; 65];
    let mut heap = Vec::new();
    let row: &mut [usize] = if b.len() < stack.len() {
        &mut stack[..b.len() + 1]
    } else {
        heap.resize(b.len() + 1, 0);
        &mut heap
    };
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l<T: Eq>(reference: &[T], candidate: &[T]) -> RougeScore {
    RougeScore::from_counts(lcs_len(reference, candidate), candidate.len(), reference.len())
}

/// Scores for all three variants.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RougeReport {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    pub rouge_l: RougeScore,
}

impl RougeReport {
    pub fn get(&self, v: RougeVariant) -> RougeScore {
        match v {
            RougeVariant::One => self.rouge1,
            RougeVariant::Two => self.rouge2,
            RougeVariant::L => self.rouge_l,
        }
    }
}

pub fn score_all<T: Eq>(reference: &[T], candidate: &[T]) -> RougeReport {
    RougeReport {
        rouge1: rouge_n(reference, candidate, 1),
        rouge2: rouge_n(reference, candidate, 2),
        rouge_l: rouge_l(reference, candidate),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RougeError {
    #[error("no summary pairs to score")]
    Empty,
    #[error("{references} references but {candidates} candidates")]
    LengthMismatch { references: usize, candidates: usize },
}

fn mean(scores: impl Iterator<Item = RougeScore>) -> RougeScore {
    let mut n = 0.0;
    let mut acc = RougeScore::default();
    for s in scores {
        acc.precision += s.precision;
        acc.recall += s.recall;
        acc.f1 += s.f1;
        n += 1.0;
    }
    RougeScore {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    }
}

/// Arithmetic mean of per-pair scores. Pairs are `(reference, candidate)`.
pub fn corpus_rouge<T: Eq>(pairs: &[(Vec<T>, Vec<T>)]) -> Result<RougeReport, RougeError> {
    if pairs.is_empty() {
        return Err(RougeError::Empty);
    }
    let per: Vec<RougeReport> = pairs.iter().map(|(r, c)| score_all(r, c)).collect();
    Ok(RougeReport {
        rouge1: mean(per.iter().map(|p| p.rouge1)),
        rouge2: mean(per.iter().map(|p| p.rouge2)),
        rouge_l: mean(per.iter().map(|p| p.rouge_l)),
    })
}

/// Tab-separated report over parallel reference/candidate lines: one row
/// per pair and variant, then corpus averages.
pub fn batch_report(references: &str, candidates: &str) -> Result<String, RougeError> {
    let refs: Vec<Vec<String>> = references.lines().map(tokenize_line).collect();
    let cands: Vec<Vec<String>> = candidates.lines().map(tokenize_line).collect();
    if refs.len() != cands.len() {
        return Err(RougeError::LengthMismatch {
            references: refs.len(),
            candidates: cands.len(),
        });
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = refs.into_iter().zip(cands).collect();
    let corpus = corpus_rouge(&pairs)?;
    let mut out = String::from("pair\tvariant\tprecision\trecall\tf1\n");
    let row = |out: &mut String, scope: &str, v: RougeVariant, s: RougeScore| {
        let _ = writeln!(out, "{scope}\t{v}\t{:.6}\t{:.6}\t{:.6}", s.precision, s.recall, s.f1);
    };
    for (i, (r, c)) in pairs.iter().enumerate() {
        let rep = score_all(r, c);
        for v in RougeVariant::ALL {
            row(&mut out, &(i + 1).to_string(), v, rep.get(v));
        }
    }
    for v in RougeVariant::ALL {
        row(&mut out, "corpus", v, corpus.get(v));
    }
    Ok(out)
}

fn tokenize_line(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_lowercase).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    #[test]
    fn identical_and_disjoint() {
        let a = t("the cat sat");
        let s = rouge_n(&a, &a, 2);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert_eq!(rouge_l(&a, &a).f1, 1.0);
        assert_eq!(rouge_n(&a, &t("x y z"), 1), RougeScore::default());
    }

    #[test]
    fn unigram_counting() {
        let s = rouge_n(&t("a b c"), &t("a b d"), 1);
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn clipping() {
        let s = rouge_n(&t("a b"), &t("a a a"), 1);
        assert_eq!(s.precision, 1.0 / 3.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_len(&t("a b c d"), &t("a c b d")), 3);
        assert_eq!(rouge_l(&t("a b c d"), &t("a c b d")).f1, 0.75);
        assert_eq!(rouge_l(&t("a b"), &[]).f1, 0.0);
        let r = rouge_l(&t("a b c d e"), &t("e d c b a"));
        assert_eq!((r.precision, r.recall), (0.2, 0.2));
    }

    #[test]
    fn corpus_mean() {
        let pairs = vec![(t("a b"), t("a b")), (t("a b"), t("c d"))];
        let c = corpus_rouge(&pairs).unwrap();
        assert_eq!(c.rouge1.f1, 0.5);
        let one = corpus_rouge(&pairs[..1]).unwrap();
        assert_eq!(one, score_all(&pairs[0].0, &pairs[0].1));
        assert_eq!(corpus_rouge::<&str>(&[]), Err(RougeError::Empty));
    }

    #[test]
    fn report_format() {
        let rep = batch_report("a b c\nx y\n", "a b c\nq\n").unwrap();
        let lines: Vec<&str> = rep.lines().collect();
        assert_eq!(lines[0], "pair\tvariant\tprecision\trecall\tf1");
        assert_eq!(lines[1], "1\trouge-1\t1.000000\t1.000000\t1.000000");
        assert_eq!(lines.len(), 1 + 6 + 3);
        assert_eq!(lines[7], "corpus\trouge-1\t0.500000\t0.500000\t0.500000");
        assert!(batch_report("a\n", "").is_err());
    }

    #[test]
    fn variant_names() {
        assert_eq!("L".parse::<RougeVariant>().unwrap(), RougeVariant::L);
        assert_eq!(RougeVariant::Two.to_string(), "rouge-2");
        assert!("3".parse::<RougeVariant>().is_err());
    }
}
