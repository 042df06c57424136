//! Teacher-forced NLL and the self-critical loss.

use crate::data::{Example, START};
use crate::model::Summarizer;
use crate::tensor::{Session, Tensor, TensorError, Var};

use super::decode::{DecodeTrace, ModelPolicy, StepPolicy, PROB_FLOOR};

type Result<T> = std::result::Result<T, TensorError>;

/// Summed negative log-likelihood of one target sequence.
#[derive(Debug, Clone, Copy)]
pub struct Nll {
    pub total: Var,
    pub positions: usize,
    /// Targets outside the distribution's support, scored at the floor.
    pub unreachable: usize,
}

/// Teacher forcing: step t is fed gold target t−1 (START first).
pub fn sequence_nll<P: StepPolicy>(policy: &P, s: &mut Session, targets: &[usize]) -> Result<Nll> {
    if targets.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "sequence_nll",
            detail: "no target positions".into(),
        });
    }
    let mut state = policy.start(s)?;
    let mut prev = START;
    let mut terms = Vec::with_capacity(targets.len());
    let mut unreachable = 0;
    for &gold in targets {
        let (dist, next) = policy.step(s, &state, prev)?;
        let t = policy.target(gold);
        let lp = if t < s.shape(dist).len() {
            let p = s.select(dist, t)?;
            s.log_floor(p, PROB_FLOOR)?
        } else {
            unreachable += 1;
            s.constant(Tensor::scalar(PROB_FLOOR.ln()))?
        };
        terms.push(lp);
        state = next;
        prev = gold;
    }
    let all = s.concat(&terms, crate::tensor::Axis::Cols)?;
    let sum = s.sum(all)?;
    Ok(Nll {
        total: s.scale(sum, -1.0)?,
        positions: targets.len(),
        unreachable,
    })
}

pub struct MleLoss {
    /// Mean NLL per target position.
    pub loss: Var,
    pub positions: usize,
    pub unreachable: usize,
}

/// Mean over every target position of the batch.
pub fn mle_loss(model: &Summarizer, s: &mut Session, batch: &[Example]) -> Result<MleLoss> {
    let mut sums = Vec::with_capacity(batch.len());
    let (mut positions, mut unreachable) = (0, 0);
    for example in batch {
        let nll = sequence_nll(&ModelPolicy { model, example }, s, &example.target)?;
        sums.push(nll.total);
        positions += nll.positions;
        unreachable += nll.unreachable;
    }
    if sums.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "mle_loss",
            detail: "empty batch".into(),
        });
    }
    let all = s.concat(&sums, crate::tensor::Axis::Cols)?;
    let total = s.sum(all)?;
    Ok(MleLoss {
        loss: s.scale(total, 1.0 / positions as f64)?,
        positions,
        unreachable,
    })
}

/// `(r_sample − r_greedy)·Σ −log p(ỹ_t) − α·Σ H_t`. The rewards enter as
/// plain numbers, so no gradient flows through them.
pub fn self_critic_loss(s: &mut Session, sampled: &DecodeTrace, r_sample: f64, r_greedy: f64, alpha: f64) -> Result<Var> {
    if sampled.log_prob_vars.is_empty() {
        return s.constant(Tensor::scalar(0.0));
    }
    let lp = s.concat(&sampled.log_prob_vars, crate::tensor::Axis::Cols)?;
    let lp = s.sum(lp)?;
    let pg = s.scale(lp, -(r_sample - r_greedy))?;
    let h = s.concat(&sampled.entropy_vars, crate::tensor::Axis::Cols)?;
    let h = s.sum(h)?;
    let ent = s.scale(h, -alpha)?;
    s.add(pg, ent)
}
