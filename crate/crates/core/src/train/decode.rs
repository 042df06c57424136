//! Greedy and ancestral-sampling decoders.

use rand::Rng;

use crate::data::{Example, Vocabulary, START, STOP};
use crate::model::{DecoderState, Summarizer};
use crate::tensor::{ParamStore, Session, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// Floor inside the log of recorded and trained probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Anything that yields a next-token distribution given the previous id.
pub trait StepPolicy {
    type State;
    fn start(&self, s: &mut Session) -> Result<Self::State>;
    fn step(&self, s: &mut Session, state: &Self::State, prev: usize) -> Result<(Var, Self::State)>;
    /// Id the distribution is scored against for a gold target.
    fn target(&self, id: usize) -> usize {
        id
    }
}

/// A summarizer bound to one article.
pub struct ModelPolicy<'a> {
    pub model: &'a Summarizer,
    pub example: &'a Example,
}

impl StepPolicy for ModelPolicy<'_> {
    type State = DecoderState;

    fn start(&self, s: &mut Session) -> Result<DecoderState> {
        self.model.encode(s, self.example)
    }

    fn step(&self, s: &mut Session, state: &DecoderState, prev: usize) -> Result<(Var, DecoderState)> {
        let out = self.model.decode_step(s, self.example, state, prev)?;
        Ok((out.dist, out.next))
    }

    fn target(&self, id: usize) -> usize {
        self.model.target_id(id)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodeResult {
    /// Emitted extended ids, including a final STOP when one was emitted.
    pub ids: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub entropies: Vec<f64>,
    /// True when decoding stopped at STOP rather than the length limit.
    pub finished: bool,
}

impl DecodeResult {
    /// Ids without the trailing STOP.
    pub fn summary_ids(&self) -> &[usize] {
        match self.ids.last() {
            Some(&STOP) => &self.ids[..self.ids.len() - 1],
            _ => &self.ids,
        }
    }

    pub fn tokens(&self, vocab: &Vocabulary, example: &Example) -> Vec<String> {
        surface_tokens(self.summary_ids(), vocab, example)
    }

    pub fn mean_entropy(&self) -> f64 {
        if self.entropies.is_empty() {
            0.0
        } else {
            self.entropies.iter().sum::<f64>() / self.entropies.len() as f64
        }
    }
}

/// Surfaces of extended ids; OOV ids resolve through the example's map.
pub fn surface_tokens(ids: &[usize], vocab: &Vocabulary, example: &Example) -> Vec<String> {
    ids.iter()
        .map(|&id| vocab.surface(id, &example.oov).unwrap_or("[UNK]").to_string())
        .collect()
}

/// A decode plus the graph nodes of its log-probabilities and entropies.
#[derive(Debug, Clone)]
pub struct DecodeTrace {
    pub result: DecodeResult,
    pub log_prob_vars: Vec<Var>,
    pub entropy_vars: Vec<Var>,
}

/// Highest-probability id; ties go to the lowest id.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index(p: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = p.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in p.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        acc += x;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn run<P: StepPolicy>(
    policy: &P,
    s: &mut Session,
    max_len: usize,
    mut choose: impl FnMut(&[f64]) -> usize,
) -> Result<DecodeTrace> {
    let mut state = policy.start(s)?;
    let mut prev = START;
    let mut trace = DecodeTrace {
        result: DecodeResult::default(),
        log_prob_vars: Vec::new(),
        entropy_vars: Vec::new(),
    };
    for _ in 0..max_len {
        let (dist, next) = policy.step(s, &state, prev)?;
        let id = choose(s.data(dist));
        let p = s.select(dist, id)?;
        let lp = s.log_floor(p, PROB_FLOOR)?;
        let h = s.entropy(dist)?;
        trace.result.ids.push(id);
        trace.result.log_probs.push(s.data(lp)[0]);
        trace.result.entropies.push(s.data(h)[0]);
        trace.log_prob_vars.push(lp);
        trace.entropy_vars.push(h);
        if id == STOP {
            trace.result.finished = true;
            break;
        }
        state = next;
        prev = id;
    }
    Ok(trace)
}

pub fn greedy_decode<P: StepPolicy>(policy: &P, s: &mut Session, max_len: usize) -> Result<DecodeTrace> {
    run(policy, s, max_len, argmax)
}

/// Temperature-1 ancestral sampling.
pub fn sample_decode<P: StepPolicy>(
    policy: &P,
    s: &mut Session,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<DecodeTrace> {
    run(policy, s, max_len, |p| sample_index(p, rng))
}

/// Greedy decode of one example with frozen parameters.
pub fn greedy_summary(model: &Summarizer, store: &ParamStore, example: &Example, max_len: usize) -> Result<DecodeResult> {
    let mut s = Session::new(store, false);
    let policy = ModelPolicy { model, example };
    Ok(greedy_decode(&policy, &mut s, max_len)?.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Same distribution at every step.
    struct Fixed(Vec<f64>);

    impl StepPolicy for Fixed {
        type State = ();
        fn start(&self, _: &mut Session) -> Result<()> {
            Ok(())
        }
        fn step(&self, s: &mut Session, _: &(), _: usize) -> Result<(Var, ())> {
            Ok((s.constant(Tensor::vector(self.0.clone()))?, ()))
        }
    }

    #[test]
    fn stop_first_gives_empty_summary() {
        let store = ParamStore::new();
        let mut s = Session::new(&store, false);
        let mut p = vec![0.0; 6];
        p[STOP] = 1.0;
        let r = greedy_decode(&Fixed(p), &mut s, 10).unwrap().result;
        assert!(r.finished);
        assert_eq!(r.summary_ids().len(), 0);
        assert_eq!(r.log_probs, vec![0.0]);
    }

    #[test]
    fn ties_pick_lowest_id() {
        let mut p = vec![0.0; 10];
        p[5] = 0.5;
        p[9] = 0.5;
        assert_eq!(argmax(&p), 5);
        let store = ParamStore::new();
        let mut s = Session::new(&store, false);
        let r = greedy_decode(&Fixed(p), &mut s, 3).unwrap().result;
        assert_eq!(r.ids, vec![5, 5, 5]);
        assert!(!r.finished);
    }

    #[test]
    fn one_hot_sampling_equals_greedy() {
        let mut p = vec![0.0; 5];
        p[4] = 1.0;
        let store = ParamStore::new();
        let mut s = Session::new(&store, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = sample_decode(&Fixed(p.clone()), &mut s, 4, &mut rng).unwrap().result;
        let b = greedy_decode(&Fixed(p), &mut s, 4).unwrap().result;
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_sampling_statistics() {
        let p = vec![0.25; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_index(&p, &mut rng)] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn uniform_entropy_is_log4() {
        let store = ParamStore::new();
        let mut s = Session::new(&store, false);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = sample_decode(&Fixed(vec![0.25; 4]), &mut s, 3, &mut rng).unwrap().result;
        for h in &r.entropies {
            assert!((h - 4f64.ln()).abs() < 1e-12);
        }
        assert!(r.log_probs.iter().all(|&lp| lp <= 0.0));
    }
}
