use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn toy(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy").join(name)
}

fn memsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsum"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = memsum(args);
    assert!(
        out.status.success(),
        "memsum {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Nonzero exit with a single `error:` line.
fn rejected(args: &[&str]) -> String {
    let out = memsum(args);
    assert!(!out.status.success(), "memsum {args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = err.lines().filter(|l| l.starts_with("error")).collect();
    assert_eq!(lines.len(), 1, "{err}");
    lines[0].to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn hier_trains_on_bundled_corpus() {
    let dir = TempDir::new().unwrap();
    let ckpt = dir.path().join("hier.ckpt");
    let out = ok(&["--config", s(&toy("toy.conf")), "train", "--checkpoint", s(&ckpt)]);
    assert!(out.contains("best_epoch="));
    assert!(ckpt.exists());
    let metrics = fs::read_to_string(dir.path().join("hier.ckpt.metrics.tsv")).unwrap();
    assert!(metrics.starts_with("epoch\tsplit\tloss\trouge1\trouge2\trougeL\n"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 5);

    let report = ok(&["--checkpoint", s(&ckpt), "evaluate", s(&toy("dev.tsv")), "--out", s(&dir.path().join("hyp.txt"))]);
    assert_eq!(report.lines().next(), Some("\tR1\tR2\tRL"));
    assert!(report.lines().any(|l| l.starts_with("F1\t")));
    assert_eq!(fs::read_to_string(dir.path().join("hyp.txt")).unwrap().lines().count(), 8);

    let err = rejected(&["--checkpoint", s(&ckpt), "--variant", "improved", "evaluate", s(&toy("dev.tsv"))]);
    assert!(err.contains("variant mismatch"), "{err}");

    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let err = rejected(&["--checkpoint", s(&ckpt), "evaluate", s(&empty)]);
    assert!(err.contains("empty test corpus"), "{err}");
}

#[test]
fn default_learning_rate_reported() {
    let dir = TempDir::new().unwrap();
    let out = ok(&[
        "--variant", "improved", "--epochs", "1", "--set", "dim=8", "--set", "max_decode_len=5",
        "train", "--train", s(&toy("train.tsv")), "--checkpoint", s(&dir.path().join("m.ckpt")),
    ]);
    assert!(out.contains("train_mode=mle lr=0.001 "), "{out}");
}

#[test]
fn rl_without_initial_checkpoint_rejected() {
    let dir = TempDir::new().unwrap();
    let err = rejected(&[
        "--config", s(&toy("toy.conf")), "--train-mode", "rl",
        "train", "--checkpoint", s(&dir.path().join("rl.ckpt")),
    ]);
    assert!(err.contains("init-checkpoint"), "{err}");
}

#[test]
fn unknown_config_key_rejected() {
    let dir = TempDir::new().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "epochs=2\nlearning_rate=0.1\n").unwrap();
    let err = rejected(&["--config", s(&conf), "rouge", s(&toy("dev.tsv")), s(&toy("dev.tsv"))]);
    assert!(err.contains("learning_rate"), "{err}");
}

#[test]
fn rouge_of_identical_files_is_one() {
    let dir = TempDir::new().unwrap();
    let refs = dir.path().join("refs.txt");
    let summaries: String = fs::read_to_string(toy("dev.tsv"))
        .unwrap()
        .lines()
        .map(|l| l.split('\t').nth(1).unwrap().to_string() + "\n")
        .collect();
    fs::write(&refs, summaries).unwrap();
    let out = ok(&["rouge", s(&refs), s(&refs)]);
    let corpus: Vec<&str> = out.lines().filter(|l| l.starts_with("corpus")).collect();
    assert_eq!(corpus.len(), 3);
    for line in corpus {
        assert!(line.ends_with("\t1.000000\t1.000000\t1.000000"), "{line}");
    }
}

#[test]
fn preprocess_truncates_and_counts() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw.tsv");
    let article: Vec<String> = (0..450).map(|i| format!("w{i}")).collect();
    fs::write(&raw, format!("{}\tw0 w1\n", article.join(" "))).unwrap();
    let shaped = dir.path().join("shaped.tsv");
    let stats = ok(&["--variant", "improved", "preprocess", s(&raw), "--out", s(&shaped)]);
    assert!(stats.contains("articles_truncated\t1\n"), "{stats}");
    assert!(stats.contains("article_tokens\t400\n"), "{stats}");
    let line = fs::read_to_string(&shaped).unwrap();
    assert_eq!(line.split('\t').next().unwrap().split(' ').count(), 400);

    let empty = dir.path().join("empty.tsv");
    fs::write(&empty, "\n").unwrap();
    rejected(&["preprocess", s(&empty), "--out", s(&shaped)]);
}

#[test]
fn preprocess_factored_samples_cleanly() {
    let dir = TempDir::new().unwrap();
    let samples = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/factored_samples.txt");
    let stats = ok(&[
        "--mode", "factored", "--variant", "improved",
        "preprocess", s(&samples), "--out", s(&dir.path().join("f.tsv")),
    ]);
    assert!(stats.contains("lines\t12\n") && stats.contains("skipped\t0\n"), "{stats}");

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "the | the | DT cat | cat | NN\nthe|the cat\nok | ok | JJ\n").unwrap();
    let stats = ok(&["--mode", "factored", "preprocess", s(&bad), "--out", s(&dir.path().join("g.tsv"))]);
    assert!(stats.contains("written\t2\n") && stats.contains("skipped\t1\n"), "{stats}");
}

#[test]
fn build_vocab_writes_ranked_tokens() {
    let dir = TempDir::new().unwrap();
    let vocab = dir.path().join("vocab.txt");
    let out = ok(&["--set", "vocab_size=10", "build-vocab", s(&toy("train.tsv")), "--out", s(&vocab)]);
    assert!(out.starts_with("vocabulary\t10\t"));
    let tokens: Vec<String> = fs::read_to_string(&vocab).unwrap().lines().map(str::to_string).collect();
    assert_eq!(&tokens[..4], ["[PAD]", "[UNK]", "[START]", "[STOP]"]);
    assert_eq!(tokens.len(), 10);
}

#[test]
fn copy_model_reproduces_input_and_copies_oov() {
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("copy.tsv");
    let words = ["a", "b", "c", "d", "e", "f", "g", "h"];
    let mut lines = vec!["a b c\ta b c".to_string(), "b zebra c\tb zebra c".to_string()];
    let mut state = 7u64;
    for i in 0..58 {
        let n = 2 + i % 4;
        let seq: Vec<&str> = (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                words[(state >> 33) as usize % words.len()]
            })
            .collect();
        lines.push(format!("{0}\t{0}", seq.join(" ")));
    }
    fs::write(&corpus, lines.join("\n") + "\n").unwrap();
    let ckpt = dir.path().join("copy.ckpt");
    ok(&[
        "--variant", "improved", "--set", "dim=32", "--set", "vocab_size=12", "--set", "batch_size=6",
        "--set", "max_decode_len=8", "--lr-mle", "0.01", "--epochs", "150",
        "train", "--train", s(&corpus), "--checkpoint", s(&ckpt),
    ]);
    let input = dir.path().join("in.txt");
    fs::write(&input, "a b c\nb zebra c\n").unwrap();
    let out = ok(&["--checkpoint", s(&ckpt), "summarize", s(&input)]);
    let got: Vec<&str> = out.lines().collect();
    assert_eq!(got, ["a b c", "b zebra c"]);
    assert!(!out.contains("[UNK]"));
}

#[test]
fn factored_summary_projects_surface() {
    let dir = TempDir::new().unwrap();
    let ckpt = dir.path().join("f.ckpt");
    ok(&[
        "--mode", "factored", "--variant", "improved", "--epochs", "1", "--set", "dim=8",
        "--set", "max_decode_len=9", "train", "--train", s(&toy("train.factored.tsv")), "--checkpoint", s(&ckpt),
    ]);
    let out = ok(&["--checkpoint", s(&ckpt), "summarize", s(&toy("dev.factored.tsv"))]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 16);
    for pair in lines.chunks(2) {
        let stream: Vec<&str> = pair[0].strip_prefix("factored\t").unwrap().split_whitespace().collect();
        let surface: Vec<&str> = pair[1].strip_prefix("surface\t").unwrap().split_whitespace().collect();
        let every_third: Vec<&str> = stream.iter().step_by(3).copied().collect();
        assert_eq!(surface, every_third);
    }
}

#[test]
fn seeded_training_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let ckpt = dir.path().join(name);
        ok(&["--config", s(&toy("toy.conf")), "--epochs", "2", "--seed", "9", "train", "--checkpoint", s(&ckpt)]);
        let metrics = fs::read(dir.path().join(format!("{name}.metrics.tsv"))).unwrap();
        (fs::read(&ckpt).unwrap(), metrics)
    };
    assert_eq!(run("a.ckpt"), run("b.ckpt"));
}
