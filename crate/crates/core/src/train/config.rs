use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::rouge::RougeVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Teacher-forced cross-entropy.
    Mle,
    /// Self-critical policy gradient.
    Rl,
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainMode::Mle => "mle",
            TrainMode::Rl => "rl",
        })
    }
}

impl FromStr for TrainMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mle" => Ok(TrainMode::Mle),
            "rl" => Ok(TrainMode::Rl),
            other => Err(format!("unknown train mode {other:?} (expected mle or rl)")),
        }
    }
}

pub const DEFAULT_LR_MLE: f64 = 0.001;
pub const DEFAULT_LR_RL: f64 = 5e-5;
pub const DEFAULT_ALPHA: f64 = 1e-4;
pub const DEFAULT_GRAD_CLIP: f64 = 2.0;
pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_MAX_DECODE_LEN: usize = 100;
pub const DEFAULT_FACTORED_MAX_DECODE_LEN: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub lr_mle: f64,
    pub lr_rl: f64,
    /// Entropy bonus weight.
    pub alpha: f64,
    /// Weight of an added MLE term in rl mode.
    pub mle_mix: f64,
    pub reward: RougeVariant,
    pub batch_size: usize,
    pub epochs: usize,
    pub max_decode_len: usize,
    pub grad_clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::Mle,
            lr_mle: DEFAULT_LR_MLE,
            lr_rl: DEFAULT_LR_RL,
            alpha: DEFAULT_ALPHA,
            mle_mix: 0.0,
            reward: RougeVariant::L,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: 10,
            max_decode_len: DEFAULT_MAX_DECODE_LEN,
            grad_clip_norm: DEFAULT_GRAD_CLIP,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_mle > 0.0 && self.lr_rl > 0.0) {
            return bad(format!("learning rates must be positive (lr_mle={}, lr_rl={})", self.lr_mle, self.lr_rl));
        }
        if !(self.alpha >= 0.0) || !(self.mle_mix >= 0.0) {
            return bad(format!("alpha and mle_mix must be non-negative (alpha={}, mle_mix={})", self.alpha, self.mle_mix));
        }
        if self.batch_size == 0 || self.max_decode_len == 0 {
            return bad("batch_size and max_decode_len must be positive".into());
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad(format!("grad_clip_norm must be positive, got {}", self.grad_clip_norm));
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f64 {
        match self.mode {
            TrainMode::Mle => self.lr_mle,
            TrainMode::Rl => self.lr_rl,
        }
    }
}
