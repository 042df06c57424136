//! Epoch loop: batches, backward, clipping, Adam, dev evaluation and
//! best-model checkpointing.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{project_surface, Example, TokenFormat, Vocabulary};
use crate::error::{Error, Result};
use crate::model::Summarizer;
use crate::rouge::{corpus_rouge, RougeReport};
use crate::tensor::{ParamStore, Session};

use super::checkpoint::Checkpoint;
use super::config::{TrainConfig, TrainMode};
use super::decode::{greedy_decode, greedy_summary, sample_decode, surface_tokens, ModelPolicy};
use super::loss::{mle_loss, self_critic_loss, sequence_nll};
use super::optim::{accumulate, clip_global_norm, Adam, Grads};

pub const METRICS_HEADER: &str = "epoch\tsplit\tloss\trouge1\trouge2\trougeL";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub rouge: Option<RougeReport>,
}

impl EpochRecord {
    pub fn to_line(&self) -> String {
        let mut line = format!("{}\t{}\t{:.6}", self.epoch, self.split, self.loss);
        match &self.rouge {
            Some(r) => {
                let _ = write!(line, "\t{:.6}\t{:.6}\t{:.6}", r.rouge1.f1, r.rouge2.f1, r.rouge_l.f1);
            }
            None => line.push_str("\t-\t-\t-"),
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainSummary {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
}

impl TrainSummary {
    /// Tab-separated metrics log with header.
    pub fn log_text(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_line());
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RlStats {
    pub loss: f64,
    pub reward_sample: f64,
    pub reward_greedy: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: RougeReport,
    /// Greedy hypotheses as surface tokens.
    pub hypotheses: Vec<Vec<String>>,
}

/// Owns the parameters and optimizer state for one training run.
pub struct Trainer {
    pub model: Summarizer,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub config: TrainConfig,
    pub format: TokenFormat,
    pub adam: Adam,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Summarizer, store: ParamStore, vocab: Vocabulary, config: TrainConfig, format: TokenFormat) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            adam: Adam::new(&store),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            model,
            store,
            vocab,
            config,
            format,
        })
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn apply(&mut self, mut grads: Grads, lr: f64) {
        clip_global_norm(&mut grads, self.config.grad_clip_norm);
        self.adam.step(&mut self.store, &grads, lr);
    }

    fn empty_grads(&self) -> Grads {
        vec![None; self.store.len()]
    }

    /// Teacher-forced update on one batch; returns the batch loss before
    /// the update. Parameters are left untouched on a non-finite loss.
    pub fn mle_step(&mut self, batch: &[Example]) -> Result<f64> {
        let positions: usize = batch.iter().map(|e| e.target.len()).sum();
        if positions == 0 {
            return Err(Error::Config("batch has no target positions".into()));
        }
        let mut grads = self.empty_grads();
        let mut loss = 0.0;
        for example in batch {
            let mut s = Session::new(&self.store, true);
            let nll = sequence_nll(&ModelPolicy { model: &self.model, example }, &mut s, &example.target)?;
            let l = s.scale(nll.total, 1.0 / positions as f64)?;
            loss += s.data(l)[0];
            s.backward(l)?;
            accumulate(&mut grads, &s.param_grads(), 1.0);
        }
        if loss.is_finite() {
            self.apply(grads, self.config.lr_mle);
        }
        Ok(loss)
    }

    /// Reward of a decoded id sequence against the example's reference.
    pub fn reward(&self, example: &Example, ids: &[usize]) -> f64 {
        let cand = project_surface(&surface_tokens(ids, &self.vocab, example), self.format);
        let reference = project_surface(&example.reference, self.format);
        self.config.reward.score(&reference, &cand).f1
    }

    /// Self-critical update on one batch.
    pub fn rl_step(&mut self, batch: &[Example]) -> Result<RlStats> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let n = batch.len() as f64;
        let mut grads = self.empty_grads();
        let mut stats = RlStats::default();
        let max_len = self.config.max_decode_len;
        for example in batch {
            let greedy = greedy_summary(&self.model, &self.store, example, max_len)?;
            let r_greedy = self.reward(example, greedy.summary_ids());
            let policy = ModelPolicy { model: &self.model, example };
            let mut s = Session::new(&self.store, true);
            let sampled = sample_decode(&policy, &mut s, max_len, &mut self.rng)?;
            let r_sample = self.reward(example, sampled.result.summary_ids());
            let mut l = self_critic_loss(&mut s, &sampled, r_sample, r_greedy, self.config.alpha)?;
            if self.config.mle_mix > 0.0 && !example.target.is_empty() {
                let nll = sequence_nll(&policy, &mut s, &example.target)?;
                let mix = s.scale(nll.total, self.config.mle_mix / nll.positions as f64)?;
                l = s.add(l, mix)?;
            }
            let l = s.scale(l, 1.0 / n)?;
            stats.loss += s.data(l)[0];
            stats.reward_sample += r_sample / n;
            stats.reward_greedy += r_greedy / n;
            stats.entropy += sampled.result.mean_entropy() / n;
            s.backward(l)?;
            accumulate(&mut grads, &s.param_grads(), 1.0);
        }
        if stats.loss.is_finite() {
            self.apply(grads, self.config.lr_rl);
        }
        Ok(stats)
    }

    /// Mean teacher-forced NLL per target position.
    pub fn dev_loss(&self, examples: &[Example]) -> Result<f64> {
        let parts: Vec<(f64, usize)> = examples
            .par_iter()
            .filter(|e| !e.target.is_empty())
            .map(|example| -> Result<(f64, usize)> {
                let mut s = Session::new(&self.store, false);
                let nll = sequence_nll(&ModelPolicy { model: &self.model, example }, &mut s, &example.target)?;
                Ok((s.data(nll.total)[0], nll.positions))
            })
            .collect::<Result<_>>()?;
        let positions: usize = parts.iter().map(|p| p.1).sum();
        if positions == 0 {
            return Err(Error::Config("no target positions to score".into()));
        }
        Ok(parts.iter().map(|p| p.0).sum::<f64>() / positions as f64)
    }

    /// Batch-mean MLE loss through [`mle_loss`] on a single graph.
    pub fn batch_loss(&self, batch: &[Example]) -> Result<f64> {
        let mut s = Session::new(&self.store, false);
        let l = mle_loss(&self.model, &mut s, batch)?;
        Ok(s.data(l.loss)[0])
    }

    /// Greedy-decodes every example (in parallel over examples).
    pub fn hypotheses(&self, examples: &[Example]) -> Result<Vec<Vec<String>>> {
        examples
            .par_iter()
            .map(|example| {
                let mut s = Session::new(&self.store, false);
                let policy = ModelPolicy { model: &self.model, example };
                let r = greedy_decode(&policy, &mut s, self.config.max_decode_len)?.result;
                Ok(r.tokens(&self.vocab, example))
            })
            .collect()
    }

    /// Greedy decoding scored against the references.
    pub fn evaluate(&self, examples: &[Example]) -> Result<Evaluation> {
        let hypotheses = self.hypotheses(examples)?;
        let pairs: Vec<(Vec<String>, Vec<String>)> = examples
            .iter()
            .zip(&hypotheses)
            .map(|(e, h)| (project_surface(&e.reference, self.format), project_surface(h, self.format)))
            .collect();
        Ok(Evaluation {
            report: corpus_rouge(&pairs)?,
            hypotheses,
        })
    }

    /// Runs `config.epochs` epochs. The best model by dev loss (mle) or dev
    /// reward (rl) is kept in the store at the end and, when `out` is given,
    /// written there as a checkpoint.
    pub fn fit(
        &mut self,
        train: &[Example],
        dev: &[Example],
        out: Option<&Path>,
        header: &BTreeMap<String, String>,
    ) -> Result<TrainSummary> {
        if train.is_empty() {
            return Err(Error::Config("empty training set".into()));
        }
        let mut summary = TrainSummary::default();
        let mut best: Option<(f64, ParamStore)> = None;
        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=self.config.epochs {
            order.shuffle(&mut self.rng);
            let mut total = 0.0;
            let mut batches = 0;
            for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
                let batch: Vec<Example> = chunk.iter().map(|&i| train[i].clone()).collect();
                let loss = match self.config.mode {
                    TrainMode::Mle => self.mle_step(&batch)?,
                    TrainMode::Rl => self.rl_step(&batch)?.loss,
                };
                if !loss.is_finite() {
                    log::error!("non-finite loss at epoch {epoch}, batch {}", b + 1);
                    if let Some((_, good)) = best {
                        self.store = good;
                    }
                    return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
                }
                total += loss;
                batches += 1;
            }
            let train_loss = total / batches as f64;
            summary.records.push(EpochRecord {
                epoch,
                split: "train",
                loss: train_loss,
                rouge: None,
            });
            let score = if dev.is_empty() {
                -train_loss
            } else {
                let loss = self.dev_loss(dev)?;
                let report = self.evaluate(dev)?.report;
                summary.records.push(EpochRecord {
                    epoch,
                    split: "dev",
                    loss,
                    rouge: Some(report),
                });
                match self.config.mode {
                    TrainMode::Mle => -loss,
                    TrainMode::Rl => report.get(self.config.reward).f1,
                }
            };
            log::info!("{}", summary.records.last().expect("record").to_line());
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, self.store.clone()));
                summary.best_epoch = Some(epoch);
                if let Some(path) = out {
                    let mut h = header.clone();
                    h.insert("epoch".into(), epoch.to_string());
                    h.insert("train_mode".into(), self.config.mode.to_string());
                    Checkpoint::capture(&self.store, h, Some(&self.adam)).save(path)?;
                }
            }
        }
        if let Some((_, good)) = best {
            self.store = good;
        }
        Ok(summary)
    }
}

/// Full training run. Rl mode must start from a checkpoint.
pub fn train_loop(
    trainer: &mut Trainer,
    train: &[Example],
    dev: &[Example],
    init: Option<&Checkpoint>,
    out: Option<&Path>,
    header: &BTreeMap<String, String>,
) -> Result<TrainSummary> {
    match (trainer.config.mode, init) {
        (TrainMode::Rl, None) => return Err(Error::MissingCheckpoint),
        (_, Some(ck)) => {
            ck.restore(&mut trainer.store)?;
            if trainer.config.mode == TrainMode::Mle {
                if let Some(adam) = ck.optimizer_for(&trainer.store) {
                    trainer.adam = adam;
                }
            }
        }
        (TrainMode::Mle, None) => {}
    }
    trainer.fit(train, dev, out, header)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_vocab, random_embeddings};
    use crate::model::{ModelConfig, Variant};

    fn copy_task(n: usize, seed: u64) -> (Vocabulary, Vec<Example>) {
        use rand::Rng;
        let words: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let vocab = build_vocab(words.iter().map(String::as_str), 50).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let examples = (0..n)
            .map(|_| {
                let a: Vec<&str> = (0..4).map(|_| words[rng.gen_range(0..words.len())].as_str()).collect();
                Example::flat(&a, &a, &vocab).unwrap()
            })
            .collect();
        (vocab, examples)
    }

    fn trainer(vocab: &Vocabulary, config: TrainConfig) -> Trainer {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let emb = random_embeddings(vocab.len(), 8, &mut rng);
        let (model, store) = Summarizer::build(ModelConfig::new(Variant::Improved, vocab.len(), 8), emb, &mut rng).unwrap();
        Trainer::new(model, store, vocab.clone(), config, TokenFormat::Plain).unwrap()
    }

    #[test]
    fn one_step_reduces_loss() {
        let (vocab, ex) = copy_task(4, 0);
        let mut t = trainer(&vocab, TrainConfig { lr_mle: 0.01, ..TrainConfig::default() });
        let before = t.batch_loss(&ex).unwrap();
        let reported = t.mle_step(&ex).unwrap();
        assert!((before - reported).abs() < 1e-12);
        assert!(t.batch_loss(&ex).unwrap() < before);
    }

    #[test]
    fn rl_requires_checkpoint() {
        let (vocab, ex) = copy_task(2, 0);
        let mut t = trainer(&vocab, TrainConfig { mode: TrainMode::Rl, ..TrainConfig::default() });
        let err = train_loop(&mut t, &ex, &[], None, None, &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::MissingCheckpoint));
    }

    #[test]
    fn metrics_lines() {
        let (vocab, ex) = copy_task(4, 1);
        let mut t = trainer(&vocab, TrainConfig { epochs: 2, batch_size: 2, max_decode_len: 6, ..TrainConfig::default() });
        let summary = t.fit(&ex, &ex[..2], None, &BTreeMap::new()).unwrap();
        let log = summary.log_text();
        let lines: Vec<&str> = log.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER);
        assert_eq!(lines.len(), 1 + 4);
        assert!(lines[1].starts_with("1\ttrain\t") && lines[1].ends_with("\t-\t-\t-"));
        assert_eq!(lines[2].split('\t').count(), 6);
    }

    #[test]
    fn seeded_runs_identical() {
        let run = || {
            let (vocab, ex) = copy_task(4, 2);
            let mut t = trainer(&vocab, TrainConfig { epochs: 2, batch_size: 2, max_decode_len: 6, ..TrainConfig::default() });
            let log = t.fit(&ex, &ex[..2], None, &BTreeMap::new()).unwrap().log_text();
            (log, Checkpoint::capture(&t.store, BTreeMap::new(), Some(&t.adam)).to_bytes())
        };
        assert_eq!(run(), run());
    }
}
