//! Teacher-forced and self-critical training, decoding, optimization and
//! checkpoints.

mod checkpoint;
mod config;
mod decode;
mod loss;
mod optim;
mod trainer;

pub use checkpoint::Checkpoint;
pub use config::{
    TrainConfig, TrainMode, DEFAULT_ALPHA, DEFAULT_BATCH_SIZE, DEFAULT_FACTORED_MAX_DECODE_LEN, DEFAULT_GRAD_CLIP,
    DEFAULT_LR_MLE, DEFAULT_LR_RL, DEFAULT_MAX_DECODE_LEN,
};
pub use decode::{
    argmax, greedy_decode, greedy_summary, sample_decode, sample_index, surface_tokens, DecodeResult, DecodeTrace,
    ModelPolicy, StepPolicy, PROB_FLOOR,
};
pub use loss::{mle_loss, self_critic_loss, sequence_nll, MleLoss, Nll};
pub use optim::{accumulate, clip_global_norm, global_norm, Adam, Grads};
pub use trainer::{train_loop, EpochRecord, Evaluation, RlStats, TrainSummary, Trainer, METRICS_HEADER};
