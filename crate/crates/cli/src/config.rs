//! Flat `key=value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memsum::data::{ShapeLimits, TokenFormat, DEFAULT_VOCAB_SIZE};
use memsum::model::Variant;
use memsum::rouge::RougeVariant;
use memsum::train::{TrainConfig, TrainMode, DEFAULT_FACTORED_MAX_DECODE_LEN, DEFAULT_MAX_DECODE_LEN};

/// Everything a command can be configured with. Paths are optional; each
/// command checks for the ones it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub format: TokenFormat,
    pub dim: usize,
    pub vocab_size: usize,
    pub train: TrainConfig,
    /// `None` means the format's default.
    pub max_decode_len: Option<usize>,
    pub limits: ShapeLimits,
    pub paths: BTreeMap<&'static str, PathBuf>,
    /// Keys set by a file or flag rather than left at their default.
    pub explicit: BTreeSet<String>,
}

pub const PATH_KEYS: [&str; 7] = ["train", "dev", "test", "vocab", "embeddings", "checkpoint", "init_checkpoint"];

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::Hier,
            format: TokenFormat::Plain,
            dim: 300,
            vocab_size: DEFAULT_VOCAB_SIZE,
            train: TrainConfig::default(),
            max_decode_len: None,
            limits: ShapeLimits::default(),
            paths: BTreeMap::new(),
            explicit: BTreeSet::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow::anyhow!("{key}: invalid value {value:?}: {e}"))
}

pub fn parse_format(value: &str) -> Result<TokenFormat> {
    match value {
        "plain" => Ok(TokenFormat::Plain),
        "factored" => Ok(TokenFormat::Factored),
        other => bail!("unknown mode {other:?} (expected plain or factored)"),
    }
}

pub fn format_name(format: TokenFormat) -> &'static str {
    match format {
        TokenFormat::Plain => "plain",
        TokenFormat::Factored => "factored",
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let t = &mut self.train;
        let l = &mut self.limits;
        match key {
            "variant" => self.variant = parse(key, value)?,
            "mode" => self.format = parse_format(value)?,
            "train_mode" => t.mode = parse::<TrainMode>(key, value)?,
            "dim" => self.dim = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "lr_mle" => t.lr_mle = parse(key, value)?,
            "lr_rl" => t.lr_rl = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "mle_mix" => t.mle_mix = parse(key, value)?,
            "reward" => t.reward = parse::<RougeVariant>(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "max_decode_len" => self.max_decode_len = Some(parse(key, value)?),
            "grad_clip_norm" => t.grad_clip_norm = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "article_len" => l.article_len = parse(key, value)?,
            "summary_len" => l.summary_len = parse(key, value)?,
            "factored_article_len" => l.factored_article_len = parse(key, value)?,
            "factored_summary_len" => l.factored_summary_len = parse(key, value)?,
            "max_sentences" => l.max_sentences = parse(key, value)?,
            "max_sentence_len" => l.max_sentence_len = parse(key, value)?,
            _ => match PATH_KEYS.iter().find(|&&k| k == key) {
                Some(k) => {
                    self.paths.insert(k, PathBuf::from(value));
                }
                None => bail!("unknown config key {key:?}"),
            },
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Applies a config file: one `key=value` per line, `#` comments and
    /// blank lines ignored. Relative paths resolve against the file's
    /// directory.
    pub fn apply_text(&mut self, text: &str, base: Option<&Path>) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').with_context(|| format!("line {}: expected key=value, got {raw:?}", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            self.set(k, v).with_context(|| format!("line {}", n + 1))?;
            if let (Some(base), Some(&key)) = (base, PATH_KEYS.iter().find(|&&p| p == k)) {
                let p = &self.paths[key];
                if p.is_relative() {
                    let joined = base.join(p);
                    self.paths.insert(key, joined);
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text, path.parent()).with_context(|| format!("config {}", path.display()))?;
        Ok(cfg)
    }

    /// Training settings with the decode length resolved for the format.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_decode_len: self.max_decode_len.unwrap_or(match self.format {
                TokenFormat::Plain => DEFAULT_MAX_DECODE_LEN,
                TokenFormat::Factored => DEFAULT_FACTORED_MAX_DECODE_LEN,
            }),
            ..self.train.clone()
        }
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    pub fn path(&self, key: &str) -> Option<&Path> {
        self.paths.get(key).map(PathBuf::as_path)
    }

    pub fn require(&self, key: &str) -> Result<&Path> {
        let flag = key.replace('_', "-");
        self.path(key).with_context(|| format!("missing {key} path (set --{flag} or {key}= in the config)"))
    }

    /// Effective settings in config-file syntax.
    pub fn to_text(&self) -> String {
        let t = self.train_config();
        let l = &self.limits;
        let mut out = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("variant", &self.variant);
        kv("mode", &format_name(self.format));
        kv("train_mode", &t.mode);
        kv("dim", &self.dim);
        kv("vocab_size", &self.vocab_size);
        kv("lr_mle", &t.lr_mle);
        kv("lr_rl", &t.lr_rl);
        kv("alpha", &t.alpha);
        kv("mle_mix", &t.mle_mix);
        kv("reward", &t.reward);
        kv("batch_size", &t.batch_size);
        kv("epochs", &t.epochs);
        kv("max_decode_len", &t.max_decode_len);
        kv("grad_clip_norm", &t.grad_clip_norm);
        kv("seed", &t.seed);
        kv("article_len", &l.article_len);
        kv("summary_len", &l.summary_len);
        kv("factored_article_len", &l.factored_article_len);
        kv("factored_summary_len", &l.factored_summary_len);
        kv("max_sentences", &l.max_sentences);
        kv("max_sentence_len", &l.max_sentence_len);
        for (k, p) in &self.paths {
            kv(k, &p.display());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::default();
        assert_eq!(c.train.lr_mle, 0.001);
        assert_eq!(c.train.alpha, 0.0001);
        assert_eq!(c.vocab_size, 50_000);
        assert_eq!(c.limits.article_len, 400);
        assert_eq!(c.train_config().max_decode_len, 100);
        let mut f = c.clone();
        f.set("mode", "factored").unwrap();
        assert_eq!(f.train_config().max_decode_len, 300);
    }

    #[test]
    fn unknown_key_rejected() {
        let mut c = RunConfig::default();
        let err = c.apply_text("epochs=3\nlearning_rate=0.1\n", None).unwrap_err();
        assert!(format!("{err:#}").contains("learning_rate"));
    }

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::default();
        c.apply_text("# toy\nvariant = improved\nmode=factored\nlr_rl=1e-5\ncheckpoint=out/model.ckpt\n", None).unwrap();
        assert_eq!(c.variant, Variant::Improved);
        assert_eq!(c.train.lr_rl, 1e-5);
        assert!(c.is_explicit("mode") && !c.is_explicit("seed"));
        let mut back = RunConfig::default();
        back.apply_text(&c.to_text(), None).unwrap();
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let mut c = RunConfig::default();
        c.apply_text("train=data/train.tsv\nvocab=/abs/v.txt\n", Some(Path::new("/etc/run"))).unwrap();
        assert_eq!(c.path("train").unwrap(), Path::new("/etc/run/data/train.tsv"));
        assert_eq!(c.path("vocab").unwrap(), Path::new("/abs/v.txt"));
    }

    #[test]
    fn bad_values_rejected() {
        let mut c = RunConfig::default();
        assert!(c.set("variant", "transformer").is_err());
        assert!(c.set("epochs", "-1").is_err());
        assert!(c.set("mode", "xml").is_err());
    }
}
