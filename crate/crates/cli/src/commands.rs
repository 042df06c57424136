use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::{info, warn};
use memsum::data::{
    build_vocab as rank_vocab, load_embeddings, parse_corpus, project_surface, random_embeddings, read_corpus,
    shape_summary, stream_units, tokenize_and_truncate, CorpusLine, Example, Shaped, TokenFormat, Vocabulary,
};
use memsum::model::{ModelConfig, Summarizer};
use memsum::rouge::{batch_report, RougeReport};
use memsum::tensor::{Shape, Tensor};
use memsum::train::{greedy_summary, train_loop, Checkpoint, TrainMode, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{format_name, RunConfig};

/// `<path><suffix>`, e.g. `model.ckpt` → `model.ckpt.vocab`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn preprocess(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<()> {
    let out = out.context("preprocess needs --out")?;
    let text = read_text(input)?;
    ensure!(!text.trim().is_empty(), "{}: empty corpus", input.display());
    let (format, layout, limits) = (cfg.format, cfg.variant.layout(), &cfg.limits);
    let mut written = String::new();
    let (mut lines, mut kept, mut skipped, mut truncated, mut tokens, mut sentences, mut summaries_cut) = (0, 0, 0, 0, 0, 0, 0);
    for (n, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        lines += 1;
        let (article, summary) = match raw.split_once('\t') {
            Some((a, s)) => (a, Some(s)),
            None => (raw, None),
        };
        let shaped = tokenize_and_truncate(article, layout, format, limits).and_then(|a| {
            let s = match summary.filter(|s| !s.trim().is_empty()) {
                Some(s) => Some(shape_summary(s, format, limits)?),
                None => None,
            };
            Ok((a, s))
        });
        let (article, summary) = match shaped {
            Ok(x) => x,
            Err(e) => {
                warn!("line {}: skipped: {e}", n + 1);
                skipped += 1;
                continue;
            }
        };
        kept += 1;
        tokens += article.token_count();
        truncated += usize::from(article.was_truncated());
        if let Shaped::Hier { sentences: s, .. } = &article {
            sentences += s.len();
        }
        written.push_str(&article.normalized_text(format));
        if let Some((toks, original)) = summary {
            summaries_cut += usize::from(toks.len() < original);
            let flat = Shaped::Flat {
                tokens: toks,
                original_len: original,
            };
            written.push('\t');
            written.push_str(&flat.normalized_text(format));
        }
        written.push('\n');
    }
    write_text(out, &written)?;
    println!("lines\t{lines}");
    println!("written\t{kept}");
    println!("skipped\t{skipped}");
    println!("articles_truncated\t{truncated}");
    println!("summaries_truncated\t{summaries_cut}");
    println!("article_tokens\t{tokens}");
    if layout == memsum::data::Layout::Hier {
        println!("sentences\t{sentences}");
    }
    Ok(())
}

/// Stream tokens of every article and summary; malformed lines are
/// skipped with a warning.
fn corpus_tokens(lines: &[CorpusLine], format: TokenFormat) -> Vec<String> {
    let mut out = Vec::new();
    for l in lines {
        for text in std::iter::once(l.article.as_str()).chain(l.summary.as_deref()) {
            match stream_units(text, format) {
                Ok(units) => out.extend(units.into_iter().flatten()),
                Err(e) => warn!("line {}: skipped for vocabulary: {e}", l.line),
            }
        }
    }
    out
}

pub fn build_vocab(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<()> {
    let out = out.or(cfg.path("vocab")).context("build-vocab needs --out or --vocab")?;
    let lines = read_corpus(input)?;
    ensure!(!lines.is_empty(), "{}: empty corpus", input.display());
    let tokens = corpus_tokens(&lines, cfg.format);
    let vocab = rank_vocab(tokens.iter().map(String::as_str), cfg.vocab_size)?;
    vocab.save(out)?;
    println!("vocabulary\t{}\t{}", vocab.len(), out.display());
    Ok(())
}

/// Model-ready examples; lines that fail to shape are skipped and counted.
fn load_examples(cfg: &RunConfig, path: &Path, vocab: &Vocabulary, need_summary: bool) -> Result<Vec<Example>> {
    let lines = read_corpus(path)?;
    let mut out = Vec::with_capacity(lines.len());
    let mut skipped = 0;
    for line in &lines {
        if need_summary && line.summary.as_deref().map_or(true, |s| s.trim().is_empty()) {
            warn!("{}:{}: no summary, skipped", path.display(), line.line);
            skipped += 1;
            continue;
        }
        match Example::from_line(line, vocab, cfg.variant.layout(), cfg.format, &cfg.limits) {
            Ok(e) => out.push(e),
            Err(e) => {
                warn!("{}: {e}, skipped", path.display());
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        warn!("{}: {skipped} of {} lines skipped", path.display(), lines.len());
    }
    Ok(out)
}

fn header(cfg: &RunConfig, vocab: &Vocabulary) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("variant".to_string(), cfg.variant.to_string()),
        ("mode".to_string(), format_name(cfg.format).to_string()),
        ("dim".to_string(), cfg.dim.to_string()),
        ("vocab_size".to_string(), vocab.len().to_string()),
        ("max_sentences".to_string(), cfg.limits.max_sentences.to_string()),
        ("max_sentence_len".to_string(), cfg.limits.max_sentence_len.to_string()),
        ("max_decode_len".to_string(), cfg.train_config().max_decode_len.to_string()),
    ])
}

/// Takes the model settings recorded in a checkpoint header. A recorded
/// value that disagrees with an explicitly configured one is an error.
fn adopt_header(cfg: &mut RunConfig, ck: &Checkpoint, what: &Path) -> Result<()> {
    for key in ["variant", "mode", "dim", "max_sentences", "max_sentence_len", "max_decode_len"] {
        let Some(recorded) = ck.header_value(key) else {
            bail!("{}: header lacks {key}", what.display());
        };
        let mut probe = cfg.clone();
        probe.set(key, recorded)?;
        let differs = probe.to_text() != cfg.to_text();
        if !cfg.is_explicit(key) {
            *cfg = probe;
        } else if differs && matches!(key, "variant" | "mode" | "dim") {
            bail!("{key} mismatch: {} was trained with {key}={recorded}", what.display());
        }
    }
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let mut cfg = cfg.clone();
    let init = cfg.path("init_checkpoint").map(Path::to_path_buf);
    if cfg.train.mode == TrainMode::Rl && init.is_none() {
        bail!("train_mode=rl needs --init-checkpoint from an mle run");
    }
    let init_ck = match &init {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            adopt_header(&mut cfg, &ck, p)?;
            Some(ck)
        }
        None => None,
    };
    let cfg = &cfg;
    let init = init.as_deref();
    let train_path = cfg.require("train")?;
    let ckpt_path = cfg.require("checkpoint")?;
    ensure!(cfg.train.epochs > 0, "epochs must be positive");

    let vocab = match (cfg.path("vocab"), init) {
        (Some(p), _) => Vocabulary::load(p)?,
        (None, Some(i)) => Vocabulary::load(&sibling(i, ".vocab"))?,
        (None, None) => {
            let lines = read_corpus(train_path)?;
            let tokens = corpus_tokens(&lines, cfg.format);
            rank_vocab(tokens.iter().map(String::as_str), cfg.vocab_size)?
        }
    };
    let train_set = load_examples(cfg, train_path, &vocab, true)?;
    ensure!(!train_set.is_empty(), "{}: no usable training examples", train_path.display());
    let dev_set = match cfg.path("dev") {
        Some(p) => load_examples(cfg, p, &vocab, true)?,
        None => Vec::new(),
    };

    for line in cfg.to_text().lines() {
        info!("{line}");
    }
    let tc = cfg.train_config();
    println!("train_mode={} lr={} examples={} dev={} vocab={}", tc.mode, tc.learning_rate(), train_set.len(), dev_set.len(), vocab.len());

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let embeddings = match cfg.path("embeddings") {
        Some(p) => {
            let (t, stats) = load_embeddings(p, &vocab, cfg.dim, &mut rng)?;
            info!("embeddings: {} found, {} random, {} lines skipped", stats.found, stats.missing, stats.skipped);
            t
        }
        None => random_embeddings(vocab.len(), cfg.dim, &mut rng),
    };
    let (model, store) = Summarizer::build(ModelConfig::new(cfg.variant, vocab.len(), cfg.dim), embeddings, &mut rng)?;
    let mut trainer = Trainer::new(model, store, vocab.clone(), tc, cfg.format)?;
    vocab.save(&sibling(ckpt_path, ".vocab"))?;
    let summary = train_loop(&mut trainer, &train_set, &dev_set, init_ck.as_ref(), Some(ckpt_path), &header(cfg, &vocab))?;
    let log = summary.log_text();
    write_text(&sibling(ckpt_path, ".metrics.tsv"), &log)?;
    print!("{log}");
    println!("best_epoch={} checkpoint={}", summary.best_epoch.map_or("-".into(), |e| e.to_string()), ckpt_path.display());
    Ok(())
}

/// A trained model restored from a checkpoint with its recorded settings.
struct Loaded {
    trainer: Trainer,
    cfg: RunConfig,
}

fn load_model(cfg: &RunConfig) -> Result<Loaded> {
    let path = cfg.require("checkpoint")?;
    let ck = Checkpoint::load(path)?;
    let mut cfg = cfg.clone();
    adopt_header(&mut cfg, &ck, path)?;
    let vocab_path = cfg.path("vocab").map_or_else(|| sibling(path, ".vocab"), Path::to_path_buf);
    let vocab = Vocabulary::load(&vocab_path)?;
    if let Some(n) = ck.header_value("vocab_size") {
        ensure!(
            n == vocab.len().to_string(),
            "{} has {} entries but {} was trained with {n}",
            vocab_path.display(),
            vocab.len(),
            path.display()
        );
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let zeros = Tensor::zeros(Shape::Matrix(vocab.len(), cfg.dim));
    let (model, mut store) = Summarizer::build(ModelConfig::new(cfg.variant, vocab.len(), cfg.dim), zeros, &mut rng)?;
    ck.restore(&mut store)?;
    let trainer = Trainer::new(model, store, vocab, cfg.train_config(), cfg.format)?;
    Ok(Loaded { trainer, cfg })
}

fn report_table(r: &RougeReport) -> String {
    let mut out = String::from("\tR1\tR2\tRL\n");
    for (name, pick) in [
        ("P", (|s: memsum::rouge::RougeScore| s.precision) as fn(_) -> f64),
        ("R", |s| s.recall),
        ("F1", |s| s.f1),
    ] {
        let _ = writeln!(out, "{name}\t{:.4}\t{:.4}\t{:.4}", pick(r.rouge1), pick(r.rouge2), pick(r.rouge_l));
    }
    out
}

pub fn evaluate(cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let loaded = load_model(cfg)?;
    let test = loaded.cfg.require("test")?;
    let examples = load_examples(&loaded.cfg, test, &loaded.trainer.vocab, true)?;
    ensure!(!examples.is_empty(), "{}: empty test corpus", test.display());
    let eval = loaded.trainer.evaluate(&examples)?;
    let hyp_path = match out {
        Some(p) => p.to_path_buf(),
        None => sibling(loaded.cfg.require("checkpoint")?, ".hyp"),
    };
    let hyps: String = eval.hypotheses.iter().map(|h| h.join(" ") + "\n").collect();
    write_text(&hyp_path, &hyps)?;
    let table = report_table(&eval.report);
    write_text(&sibling(&hyp_path, ".rouge.tsv"), &table)?;
    print!("{table}");
    info!("{} hypotheses written to {}", examples.len(), hyp_path.display());
    Ok(())
}

pub fn summarize(cfg: &RunConfig, input: &Path) -> Result<()> {
    let loaded = load_model(cfg)?;
    let t = &loaded.trainer;
    let lines = parse_corpus(&read_text(input)?)?;
    ensure!(!lines.is_empty(), "{}: no articles", input.display());
    for line in &lines {
        let ex = Example::from_line(line, &t.vocab, loaded.cfg.variant.layout(), t.format, &loaded.cfg.limits)?;
        let result = greedy_summary(&t.model, &t.store, &ex, t.config.max_decode_len)?;
        let tokens = result.tokens(&t.vocab, &ex);
        match t.format {
            TokenFormat::Plain => println!("{}", tokens.join(" ")),
            TokenFormat::Factored => {
                println!("factored\t{}", tokens.join(" "));
                println!("surface\t{}", project_surface(&tokens, TokenFormat::Factored).join(" "));
            }
        }
    }
    Ok(())
}

pub fn rouge(references: &Path, candidates: &Path, out: Option<&Path>) -> Result<()> {
    let report = batch_report(&read_text(references)?, &read_text(candidates)?)?;
    if let Some(p) = out {
        write_text(p, &report)?;
    }
    print!("{report}");
    Ok(())
}
