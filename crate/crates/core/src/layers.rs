//! Neural building blocks: LSTM cell, tanh MLP, embedding table, and the
//! dot-product and additive attention heads.

use rand::Rng;

use crate::tensor::{Axis, ParamId, ParamStore, Session, Shape, Tensor, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// Default half-width of the uniform initializer for weights.
pub const INIT_SCALE: f64 = 0.08;

pub fn uniform(shape: Shape, scale: f64, rng: &mut impl Rng) -> Tensor {
    let data = (0..shape.len()).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(shape, data).expect("length matches shape")
}

fn expect_len(s: &Session, op: &'static str, v: Var, n: usize) -> Result<()> {
    let shape = s.shape(v);
    if shape != Shape::Vector(n) {
        return Err(TensorError::ShapeMismatch {
            op,
            left: shape,
            right: Shape::Vector(n),
        });
    }
    Ok(())
}

/// Recurrent state `(h, c)`.
#[derive(Debug, Clone, Copy)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

/// Single-layer LSTM cell.
///
/// One `(4·hidden) × (input + hidden)` weight over `[x; h]`, gates packed as
/// input, forget, candidate, output.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_dim: usize,
        hidden_dim: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.add(
            format!("{name}.weight"),
            uniform(Shape::Matrix(4 * hidden_dim, input_dim + hidden_dim), scale, rng),
        )?;
        let mut b = uniform(Shape::Vector(4 * hidden_dim), scale, rng);
        // forget gate starts open
        b.data_mut()[hidden_dim..2 * hidden_dim].fill(1.0);
        let bias = store.add(format!("{name}.bias"), b)?;
        Ok(LstmCell {
            input_dim,
            hidden_dim,
            weight,
            bias,
        })
    }

    pub fn zero_state(&self, s: &mut Session) -> Result<LstmState> {
        let h = s.constant(Tensor::zeros(Shape::Vector(self.hidden_dim)))?;
        let c = s.constant(Tensor::zeros(Shape::Vector(self.hidden_dim)))?;
        Ok(LstmState { h, c })
    }

    pub fn step(&self, s: &mut Session, x: Var, state: &LstmState) -> Result<LstmState> {
        let n = self.hidden_dim;
        expect_len(s, "lstm_step", x, self.input_dim)?;
        expect_len(s, "lstm_step", state.h, n)?;
        expect_len(s, "lstm_step", state.c, n)?;
        let w = s.param(self.weight)?;
        let b = s.param(self.bias)?;
        let xh = s.concat(&[x, state.h], Axis::Cols)?;
        let pre = s.matmul(w, xh)?;
        let pre = s.add(pre, b)?;
        let i = s.slice(pre, 0, n)?;
        let i = s.sigmoid(i)?;
        let f = s.slice(pre, n, n)?;
        let f = s.sigmoid(f)?;
        let g = s.slice(pre, 2 * n, n)?;
        let g = s.tanh(g)?;
        let o = s.slice(pre, 3 * n, n)?;
        let o = s.sigmoid(o)?;
        let keep = s.mul(f, state.c)?;
        let write = s.mul(i, g)?;
        let c = s.add(keep, write)?;
        let tc = s.tanh(c)?;
        let h = s.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Multi-layer perceptron with tanh after every layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub dims: Vec<usize>,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], scale: f64, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(TensorError::InvalidArgument {
                op: "mlp",
                detail: "needs at least input and output dims".into(),
            });
        }
        let mut layers = Vec::new();
        for (k, pair) in dims.windows(2).enumerate() {
            let w = store.add(format!("{name}.{k}.weight"), uniform(Shape::Matrix(pair[1], pair[0]), scale, rng))?;
            let b = store.add(format!("{name}.{k}.bias"), uniform(Shape::Vector(pair[1]), scale, rng))?;
            layers.push((w, b));
        }
        Ok(Mlp {
            dims: dims.to_vec(),
            layers,
        })
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        expect_len(s, "mlp", x, self.dims[0])?;
        let mut h = x;
        for &(w, b) in &self.layers {
            let w = s.param(w)?;
            let b = s.param(b)?;
            let y = s.matmul(w, h)?;
            let y = s.add(y, b)?;
            h = s.tanh(y)?;
        }
        Ok(h)
    }
}

/// Token embedding matrix, one row per vocabulary id.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub table: ParamId,
    pub vocab_size: usize,
    pub dim: usize,
}

impl EmbeddingTable {
    pub fn new(store: &mut ParamStore, name: &str, values: Tensor) -> Result<Self> {
        let Shape::Matrix(vocab_size, dim) = values.shape() else {
            return Err(TensorError::InvalidArgument {
                op: "embedding",
                detail: format!("expected a matrix, got {}", values.shape()),
            });
        };
        let table = store.add(name, values)?;
        Ok(EmbeddingTable { table, vocab_size, dim })
    }

    pub fn set_trainable(&self, store: &mut ParamStore, trainable: bool) {
        store.set_trainable(self.table, trainable);
    }

    pub fn lookup(&self, s: &mut Session, id: usize) -> Result<Var> {
        let t = s.param(self.table)?;
        s.select(t, id)
    }

    /// `ids.len() × dim` matrix of rows.
    pub fn lookup_rows(&self, s: &mut Session, ids: &[usize]) -> Result<Var> {
        let t = s.param(self.table)?;
        s.gather_rows(t, ids)
    }
}

fn check_memory(s: &Session, op: &'static str, memory: Var, key: Var, mask: &[bool]) -> Result<usize> {
    let (ms, ks) = (s.shape(memory), s.shape(key));
    let Shape::Matrix(k, l) = ms else {
        return Err(TensorError::ShapeMismatch { op, left: ms, right: ks });
    };
    if k == 0 {
        return Err(TensorError::InvalidArgument {
            op,
            detail: "memory has no slots".into(),
        });
    }
    if ks != Shape::Vector(l) {
        return Err(TensorError::ShapeMismatch { op, left: ms, right: ks });
    }
    if mask.len() != k {
        return Err(TensorError::ShapeMismatch {
            op,
            left: ms,
            right: Shape::Vector(mask.len()),
        });
    }
    Ok(l)
}

/// `masked_softmax(M · key)` over memory slots.
pub fn dot_attention(s: &mut Session, memory: Var, key: Var, mask: &[bool]) -> Result<Var> {
    check_memory(s, "dot_attention", memory, key, mask)?;
    let logits = s.matmul(memory, key)?;
    s.masked_softmax(logits, mask)
}

/// Additive attention `softmax(v · tanh(W m_i + U key + b))` over slots.
///
/// `W` acts on each memory row independently, so the head is independent
/// of the slot count.
#[derive(Debug, Clone)]
pub struct AdditiveAttention {
    pub dim: usize,
    pub w: ParamId,
    pub u: ParamId,
    pub v: ParamId,
    pub b: ParamId,
}

impl AdditiveAttention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, scale: f64, rng: &mut impl Rng) -> Result<Self> {
        Ok(AdditiveAttention {
            dim,
            w: store.add(format!("{name}.w"), uniform(Shape::Matrix(dim, dim), scale, rng))?,
            u: store.add(format!("{name}.u"), uniform(Shape::Matrix(dim, dim), scale, rng))?,
            v: store.add(format!("{name}.v"), uniform(Shape::Vector(dim), scale, rng))?,
            b: store.add(format!("{name}.b"), uniform(Shape::Vector(dim), scale, rng))?,
        })
    }

    pub fn logits(&self, s: &mut Session, memory: Var, key: Var, mask: &[bool]) -> Result<Var> {
        let l = check_memory(s, "additive_attention", memory, key, mask)?;
        if l != self.dim {
            return Err(TensorError::ShapeMismatch {
                op: "additive_attention",
                left: s.shape(memory),
                right: Shape::Vector(self.dim),
            });
        }
        let w = s.param(self.w)?;
        let u = s.param(self.u)?;
        let v = s.param(self.v)?;
        let b = s.param(self.b)?;
        // W acts on each slot as a row vector: row i of M·W
        let proj = s.matmul(memory, w)?;
        let uk = s.matmul(u, key)?;
        let shift = s.add(uk, b)?;
        let pre = s.add_rowwise(proj, shift)?;
        let act = s.tanh(pre)?;
        s.matmul(act, v)
    }

    pub fn attend(&self, s: &mut Session, memory: Var, key: Var, mask: &[bool]) -> Result<Var> {
        let logits = self.logits(s, memory, key, mask)?;
        s.masked_softmax(logits, mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check_params;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    fn zero(store: &mut ParamStore, id: ParamId) {
        store.get_mut(id).data_mut().fill(0.0);
    }

    #[test]
    fn zero_lstm_gives_zero_state() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "c", 3, 2, INIT_SCALE, &mut rng()).unwrap();
        zero(&mut store, cell.weight);
        zero(&mut store, cell.bias);
        let mut s = Session::new(&store, false);
        let x = s.constant(Tensor::vector(vec![0.4, -2.0, 7.0])).unwrap();
        let st = cell.zero_state(&mut s).unwrap();
        let next = cell.step(&mut s, x, &st).unwrap();
        assert_eq!(s.data(next.h), &[0.0, 0.0]);
        assert_eq!(s.data(next.c), &[0.0, 0.0]);
    }

    #[test]
    fn scalar_lstm_matches_hand_evaluation() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "c", 1, 1, INIT_SCALE, &mut rng()).unwrap();
        // rows: i, f, g, o ; cols: x, h
        let w = [0.5, -0.3, 0.2, 0.1, -0.7, 0.9, 0.4, 0.6];
        let b = [0.1, 1.0, -0.2, 0.05];
        store.get_mut(cell.weight).data_mut().copy_from_slice(&w);
        store.get_mut(cell.bias).data_mut().copy_from_slice(&b);
        let (x, h0, c0) = (0.8, -0.25, 0.6);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(w[0] * x + w[1] * h0 + b[0]);
        let f = sig(w[2] * x + w[3] * h0 + b[1]);
        let g = (w[4] * x + w[5] * h0 + b[2]).tanh();
        let o = sig(w[6] * x + w[7] * h0 + b[3]);
        let c1 = f * c0 + i * g;
        let h1 = o * c1.tanh();

        let mut s = Session::new(&store, false);
        let xv = s.constant(Tensor::scalar(x)).unwrap();
        let st = LstmState {
            h: s.constant(Tensor::scalar(h0)).unwrap(),
            c: s.constant(Tensor::scalar(c0)).unwrap(),
        };
        let next = cell.step(&mut s, xv, &st).unwrap();
        assert!((s.data(next.h)[0] - h1).abs() < 1e-14);
        assert!((s.data(next.c)[0] - c1).abs() < 1e-14);
    }

    #[test]
    fn lstm_gradient_check() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "c", 3, 2, 1.0, &mut r).unwrap();
        let x = uniform(Shape::Vector(3), 1.0, &mut r);
        let h0 = uniform(Shape::Vector(2), 1.0, &mut r);
        let c0 = uniform(Shape::Vector(2), 1.0, &mut r);
        let report = grad_check_params(
            &store,
            |s| {
                let xv = s.constant(x.clone())?;
                let st = LstmState {
                    h: s.constant(h0.clone())?,
                    c: s.constant(c0.clone())?,
                };
                let next = cell.step(s, xv, &st)?;
                s.sum(next.h)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_error < 1e-4, "{report:?}");
    }

    #[test]
    fn lstm_rejects_bad_dims() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "c", 3, 2, INIT_SCALE, &mut rng()).unwrap();
        let mut s = Session::new(&store, false);
        let x = s.constant(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let st = cell.zero_state(&mut s).unwrap();
        assert!(matches!(cell.step(&mut s, x, &st), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn lstm_is_deterministic() {
        let mut store = ParamStore::new();
        let cell = LstmCell::new(&mut store, "c", 2, 3, INIT_SCALE, &mut rng()).unwrap();
        let run = || {
            let mut s = Session::new(&store, false);
            let x = s.constant(Tensor::vector(vec![0.3, -0.9])).unwrap();
            let st = cell.zero_state(&mut s).unwrap();
            let n = cell.step(&mut s, x, &st).unwrap();
            s.data(n.h).to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn dot_attention_examples() {
        let store = ParamStore::new();
        let mut s = Session::new(&store, false);
        let same = s.constant(Tensor::from_rows(&[vec![0.3, 0.1], vec![0.3, 0.1], vec![0.3, 0.1]]).unwrap()).unwrap();
        let key = s.constant(Tensor::vector(vec![2.0, -1.0])).unwrap();
        let z = dot_attention(&mut s, same, key, &[true, true, false]).unwrap();
        assert_eq!(s.data(z), &[0.5, 0.5, 0.0]);

        let eye = s.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let k = s.constant(Tensor::vector(vec![1.0, 0.0])).unwrap();
        let z = dot_attention(&mut s, eye, k, &[true, true]).unwrap();
        let e = 1f64.exp();
        assert!((s.data(z)[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((s.data(z)[0] - 0.73106).abs() < 1e-4);

        let two = s.constant(Tensor::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap()).unwrap();
        let z = dot_attention(&mut s, two, k, &[true, false]).unwrap();
        assert_eq!(s.data(z), &[1.0, 0.0]);
    }

    #[test]
    fn dot_attention_rejects_empty_memory() {
        let store = ParamStore::new();
        let mut s = Session::new(&store, false);
        let m = s.constant(Tensor::matrix(0, 2, vec![]).unwrap()).unwrap();
        let k = s.constant(Tensor::vector(vec![1.0, 0.0])).unwrap();
        assert!(dot_attention(&mut s, m, k, &[]).is_err());
    }

    #[test]
    fn additive_attention_zero_v_is_uniform() {
        let mut store = ParamStore::new();
        let attn = AdditiveAttention::new(&mut store, "a", 2, INIT_SCALE, &mut rng()).unwrap();
        zero(&mut store, attn.v);
        let mut s = Session::new(&store, false);
        let m = s.constant(Tensor::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5], vec![0.0, 9.0]]).unwrap()).unwrap();
        let k = s.constant(Tensor::vector(vec![0.2, 0.7])).unwrap();
        let z = attn.attend(&mut s, m, k, &[true, false, true]).unwrap();
        assert_eq!(s.data(z), &[0.5, 0.0, 0.5]);
    }

    #[test]
    fn additive_attention_scalar_oracle() {
        let mut store = ParamStore::new();
        let attn = AdditiveAttention::new(&mut store, "a", 1, INIT_SCALE, &mut rng()).unwrap();
        let (w, u, v, b) = (0.7, -1.3, 2.0, 0.25);
        store.get_mut(attn.w).data_mut()[0] = w;
        store.get_mut(attn.u).data_mut()[0] = u;
        store.get_mut(attn.v).data_mut()[0] = v;
        store.get_mut(attn.b).data_mut()[0] = b;
        let (m, o) = ([0.4, -0.9], 0.6);
        let logits: Vec<f64> = m.iter().map(|mi| v * (w * mi + u * o + b).tanh()).collect();
        let total: f64 = logits.iter().map(|x| x.exp()).sum();
        let oracle: Vec<f64> = logits.iter().map(|x| x.exp() / total).collect();

        let mut s = Session::new(&store, false);
        let mv = s.constant(Tensor::matrix(2, 1, m.to_vec()).unwrap()).unwrap();
        let ov = s.constant(Tensor::scalar(o)).unwrap();
        let z = attn.attend(&mut s, mv, ov, &[true, true]).unwrap();
        for (a, b) in s.data(z).iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn additive_attention_gradient_check() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let attn = AdditiveAttention::new(&mut store, "a", 3, 1.0, &mut r).unwrap();
        let m = uniform(Shape::Matrix(4, 3), 1.0, &mut r);
        let key = uniform(Shape::Vector(3), 1.0, &mut r);
        let weights = uniform(Shape::Vector(4), 1.0, &mut r);
        let report = grad_check_params(
            &store,
            |s| {
                let mv = s.constant(m.clone())?;
                let kv = s.constant(key.clone())?;
                let z = attn.attend(s, mv, kv, &[true, true, false, true])?;
                let wv = s.constant(weights.clone())?;
                s.dot(z, wv)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_error < 1e-4, "{report:?}");
    }

    #[test]
    fn mlp_layer_dims_chain() {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[4, 2, 2], INIT_SCALE, &mut rng()).unwrap();
        let mut s = Session::new(&store, false);
        let x = s.constant(Tensor::vector(vec![1.0; 4])).unwrap();
        let y = mlp.forward(&mut s, x).unwrap();
        assert_eq!(s.shape(y), Shape::Vector(2));
        let bad = s.constant(Tensor::vector(vec![1.0; 3])).unwrap();
        assert!(mlp.forward(&mut s, bad).is_err());
    }

    #[test]
    fn embedding_scatter_matches_one_hot_matmul() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let emb = EmbeddingTable::new(&mut store, "emb", uniform(Shape::Matrix(5, 3), 1.0, &mut r)).unwrap();
        let ids = [3usize, 1, 3, 0];
        let upstream = uniform(Shape::Matrix(4, 3), 1.0, &mut r);

        let mut s = Session::new(&store, true);
        let rows = emb.lookup_rows(&mut s, &ids).unwrap();
        let up = s.constant(upstream.clone()).unwrap();
        let prod = s.mul(rows, up).unwrap();
        let loss = s.sum(prod).unwrap();
        s.backward(loss).unwrap();
        let grad = s.param_grads()[0].clone().unwrap();

        // oracle: one-hot(ids) · table, gradient = one-hotᵀ · upstream
        let mut oracle = vec![0.0; 15];
        for (pos, &id) in ids.iter().enumerate() {
            for v in 0..5 {
                let onehot = if v == id { 1.0 } else { 0.0 };
                for j in 0..3 {
                    oracle[v * 3 + j] += onehot * upstream.data()[pos * 3 + j];
                }
            }
        }
        assert_eq!(grad, oracle);
    }
}
