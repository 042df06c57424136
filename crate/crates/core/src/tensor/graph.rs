use std::rc::Rc;

use super::{Shape, Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Axis for [`Graph::concat`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Stack along rows. Vectors are treated as one-row matrices.
    Rows,
    /// Join along columns. Vectors are joined end to end.
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Affine(Var, f64),
    Concat(Vec<Var>, Axis),
    Outer(Var, Var),
    Sum(Var),
    Dot(Var, Var),
    ScaleBy(Var, Var),
    Select(Var, usize),
    GatherRows(Var, Rc<[usize]>),
    AddRowwise(Var, Var),
    RowScale(Var, Var),
    Slice(Var, usize),
    ScatterAdd(Var, Rc<[usize]>),
    Softmax(Var),
    LogFloor(Var, f64),
    Entropy(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Dynamic reverse-mode differentiation graph.
///
/// Nodes are appended in creation order, which is also a valid topological
/// order; backward visits them in exact reverse.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    differentiated: bool,
}

fn mismatch(op: &'static str, left: Shape, right: Shape) -> TensorError {
    TensorError::ShapeMismatch { op, left, right }
}

fn invalid(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument {
        op,
        detail: detail.into(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v` after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds a leaf. Non-finite values are rejected.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (x, y) = (self.data(a), self.data(b));
        let (shape, out) = match (sa, sb) {
            (Shape::Matrix(m, k), Shape::Matrix(k2, n)) if k == k2 => {
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let row = &mut out[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aip = x[i * k + p];
                        if aip == 0.0 {
                            continue;
                        }
                        for (o, bv) in row.iter_mut().zip(&y[p * n..(p + 1) * n]) {
                            *o += aip * bv;
                        }
                    }
                }
                (Shape::Matrix(m, n), out)
            }
            (Shape::Matrix(m, k), Shape::Vector(k2)) if k == k2 => {
                let out = (0..m)
                    .map(|i| x[i * k..(i + 1) * k].iter().zip(y).map(|(p, q)| p * q).sum())
                    .collect();
                (Shape::Vector(m), out)
            }
            (Shape::Vector(k), Shape::Matrix(k2, n)) if k == k2 => {
                let mut out = vec![0.0; n];
                for (p, &ap) in x.iter().enumerate() {
                    for (o, bv) in out.iter_mut().zip(&y[p * n..(p + 1) * n]) {
                        *o += ap * bv;
                    }
                }
                (Shape::Vector(n), out)
            }
            _ => return Err(mismatch("matmul", sa, sb)),
        };
        let rg = self.rg(&[a, b]);
        self.push("matmul", Tensor { shape, data: out }, Op::MatMul(a, b), rg)
    }

    fn zip_same(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(mismatch(name, sa, sb));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        let rg = self.rg(&[a, b]);
        self.push(name, Tensor { shape: sa, data: out }, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let shape = self.shape(a);
        let out = self.data(a).iter().map(|x| f(*x)).collect();
        let rg = self.rg(&[a]);
        self.push(name, Tensor { shape, data: out }, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    /// `scale * a + shift`, both constants.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.map("affine", a, |x| scale * x + shift, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.affine(a, scale, 0.0)
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -1.0, 1.0)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| invalid("concat", "no inputs"))?;
        let s0 = self.shape(first);
        let (shape, out) = match axis {
            Axis::Cols if matches!(s0, Shape::Vector(_)) => {
                let mut out = Vec::new();
                for &p in parts {
                    match self.shape(p) {
                        Shape::Vector(_) => out.extend_from_slice(self.data(p)),
                        s => return Err(mismatch("concat", s0, s)),
                    }
                }
                (Shape::Vector(out.len()), out)
            }
            Axis::Cols => {
                let rows = s0.as_rows().0;
                let mut cols = 0;
                for &p in parts {
                    let s = self.shape(p);
                    match s {
                        Shape::Matrix(r, c) if r == rows => cols += c,
                        _ => return Err(mismatch("concat", s0, s)),
                    }
                }
                let mut out = Vec::with_capacity(rows * cols);
                for i in 0..rows {
                    for &p in parts {
                        out.extend_from_slice(self.value(p).row(i));
                    }
                }
                (Shape::Matrix(rows, cols), out)
            }
            Axis::Rows => {
                let cols = s0.as_rows().1;
                let mut rows = 0;
                let mut out = Vec::new();
                for &p in parts {
                    let s = self.shape(p);
                    let (r, c) = s.as_rows();
                    if c != cols {
                        return Err(mismatch("concat", s0, s));
                    }
                    rows += r;
                    out.extend_from_slice(self.data(p));
                }
                (Shape::Matrix(rows, cols), out)
            }
        };
        let rg = self.rg(parts);
        self.push("concat", Tensor { shape, data: out }, Op::Concat(parts.to_vec(), axis), rg)
    }

    /// Outer product of two vectors.
    pub fn outer(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (Shape::Vector(m), Shape::Vector(n)) = (sa, sb) else {
            return Err(mismatch("outer", sa, sb));
        };
        let (x, y) = (self.data(a), self.data(b));
        let mut out = Vec::with_capacity(m * n);
        for xi in x {
            out.extend(y.iter().map(|yj| xi * yj));
        }
        let rg = self.rg(&[a, b]);
        self.push("outer", Tensor { shape: Shape::Matrix(m, n), data: out }, Op::Outer(a, b), rg)
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.data(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb || !matches!(sa, Shape::Vector(_)) {
            return Err(mismatch("dot", sa, sb));
        }
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        let rg = self.rg(&[a, b]);
        self.push("dot", Tensor::scalar(s), Op::Dot(a, b), rg)
    }

    /// Multiplies every element of `a` by the scalar node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ss = self.shape(s);
        if !ss.is_scalar() {
            return Err(mismatch("scale_by", self.shape(a), ss));
        }
        let k = self.data(s)[0];
        let shape = self.shape(a);
        let out = self.data(a).iter().map(|x| x * k).collect();
        let rg = self.rg(&[a, s]);
        self.push("scale_by", Tensor { shape, data: out }, Op::ScaleBy(a, s), rg)
    }

    /// Row `i` of a matrix, or element `i` of a vector (as a scalar).
    pub fn select(&mut self, a: Var, i: usize) -> Result<Var> {
        let shape = self.shape(a);
        let value = match shape {
            Shape::Matrix(r, _) if i < r => Tensor::vector(self.value(a).row(i).to_vec()),
            Shape::Vector(n) if i < n => Tensor::scalar(self.data(a)[i]),
            _ => return Err(invalid("select", format!("index {i} out of range for {shape}"))),
        };
        let rg = self.rg(&[a]);
        self.push("select", value, Op::Select(a, i), rg)
    }

    /// Matrix of the listed rows, in order (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let shape = self.shape(a);
        let Shape::Matrix(r, c) = shape else {
            return Err(invalid("gather_rows", format!("expected a matrix, got {shape}")));
        };
        let mut out = Vec::with_capacity(rows.len() * c);
        for &i in rows {
            if i >= r {
                return Err(invalid("gather_rows", format!("row {i} out of range for {shape}")));
            }
            out.extend_from_slice(self.value(a).row(i));
        }
        let rg = self.rg(&[a]);
        self.push(
            "gather_rows",
            Tensor { shape: Shape::Matrix(rows.len(), c), data: out },
            Op::GatherRows(a, rows.into()),
            rg,
        )
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_rowwise(&mut self, m: Var, v: Var) -> Result<Var> {
        let (sm, sv) = (self.shape(m), self.shape(v));
        let (Shape::Matrix(r, c), Shape::Vector(n)) = (sm, sv) else {
            return Err(mismatch("add_rowwise", sm, sv));
        };
        if n != c {
            return Err(mismatch("add_rowwise", sm, sv));
        }
        let (x, y) = (self.data(m), self.data(v));
        let mut out = x.to_vec();
        for i in 0..r {
            for (o, b) in out[i * c..(i + 1) * c].iter_mut().zip(y) {
                *o += b;
            }
        }
        let rg = self.rg(&[m, v]);
        self.push("add_rowwise", Tensor { shape: sm, data: out }, Op::AddRowwise(m, v), rg)
    }

    /// Scales row `i` of matrix `m` by `s[i]`.
    pub fn row_scale(&mut self, m: Var, s: Var) -> Result<Var> {
        let (sm, ss) = (self.shape(m), self.shape(s));
        let (Shape::Matrix(r, c), Shape::Vector(n)) = (sm, ss) else {
            return Err(mismatch("row_scale", sm, ss));
        };
        if n != r {
            return Err(mismatch("row_scale", sm, ss));
        }
        let (x, k) = (self.data(m), self.data(s));
        let mut out = x.to_vec();
        for i in 0..r {
            for o in &mut out[i * c..(i + 1) * c] {
                *o *= k[i];
            }
        }
        let rg = self.rg(&[m, s]);
        self.push("row_scale", Tensor { shape: sm, data: out }, Op::RowScale(m, s), rg)
    }

    /// `a[start..start + len]` of a vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(a);
        match shape {
            Shape::Vector(n) if start + len <= n => {}
            _ => {
                return Err(invalid("slice", format!("range {start}..{} invalid for {shape}", start + len)));
            }
        }
        let out = self.data(a)[start..start + len].to_vec();
        let rg = self.rg(&[a]);
        self.push("slice", Tensor::vector(out), Op::Slice(a, start), rg)
    }

    /// New vector of length `size` with `out[index[i]] += a[i]`.
    pub fn scatter_add(&mut self, a: Var, index: &[usize], size: usize) -> Result<Var> {
        let shape = self.shape(a);
        if shape != Shape::Vector(index.len()) {
            return Err(mismatch("scatter_add", shape, Shape::Vector(index.len())));
        }
        let mut out = vec![0.0; size];
        for (&j, x) in index.iter().zip(self.data(a)) {
            if j >= size {
                return Err(invalid("scatter_add", format!("target {j} out of range {size}")));
            }
            out[j] += x;
        }
        let rg = self.rg(&[a]);
        self.push("scatter_add", Tensor::vector(out), Op::ScatterAdd(a, index.into()), rg)
    }

    /// Zero-pads a vector to length `size`.
    pub fn pad(&mut self, a: Var, size: usize) -> Result<Var> {
        let n = self.shape(a).len();
        let index: Vec<usize> = (0..n).collect();
        self.scatter_add(a, &index, size)
    }

    /// Softmax over the positions where `mask` is true; masked positions are
    /// exactly zero. Stabilized by subtracting the unmasked maximum.
    pub fn masked_softmax(&mut self, logits: Var, mask: &[bool]) -> Result<Var> {
        let shape = self.shape(logits);
        let Shape::Vector(n) = shape else {
            return Err(invalid("masked_softmax", format!("expected a vector, got {shape}")));
        };
        if mask.len() != n {
            return Err(mismatch("masked_softmax", shape, Shape::Vector(mask.len())));
        }
        if !mask.iter().any(|&m| m) {
            return Err(TensorError::AllMasked);
        }
        let x = self.data(logits);
        let max = x
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out: Vec<f64> = x
            .iter()
            .zip(mask)
            .map(|(v, &m)| if m { (v - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = out.iter().sum();
        for o in &mut out {
            *o /= total;
        }
        let rg = self.rg(&[logits]);
        self.push("masked_softmax", Tensor::vector(out), Op::Softmax(logits), rg)
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let n = self.shape(logits).len();
        self.masked_softmax(logits, &vec![true; n])
    }

    /// `ln(max(a, floor))` elementwise; zero gradient where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Result<Var> {
        self.map("log_floor", a, |x| x.max(floor).ln(), Op::LogFloor(a, floor))
    }

    /// Shannon entropy `-sum p ln p` of a probability vector (0 ln 0 = 0).
    pub fn entropy(&mut self, p: Var) -> Result<Var> {
        let h = -self
            .data(p)
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|x| x * x.ln())
            .sum::<f64>();
        let rg = self.rg(&[p]);
        self.push("entropy", Tensor::scalar(h), Op::Entropy(p), rg)
    }

    /// Clears accumulated gradients so backward may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.differentiated = false;
    }

    /// Accumulates `d loss / d node` into every node that requires grad.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.differentiated {
            return Err(TensorError::BackwardTwice);
        }
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(TensorError::NotScalar(shape));
        }
        self.differentiated = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let val = |v: Var| &nodes[v.0].value;
        // Runs `f` on the gradient buffer of `v` when `v` requires grad.
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if nodes[v.0].requires_grad {
                let buf = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()]);
                f(buf);
            }
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                match (x.shape(), y.shape()) {
                    (Shape::Matrix(m, k), Shape::Matrix(_, n)) => {
                        acc(*a, &mut |ga| {
                            for r in 0..m {
                                let gr = &g[r * n..(r + 1) * n];
                                for p in 0..k {
                                    let yr = &y.data()[p * n..(p + 1) * n];
                                    ga[r * k + p] += gr.iter().zip(yr).map(|(s, t)| s * t).sum::<f64>();
                                }
                            }
                        });
                        acc(*b, &mut |gb| {
                            for r in 0..m {
                                let gr = &g[r * n..(r + 1) * n];
                                for p in 0..k {
                                    let xv = x.data()[r * k + p];
                                    if xv == 0.0 {
                                        continue;
                                    }
                                    for (o, s) in gb[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                        *o += xv * s;
                                    }
                                }
                            }
                        });
                    }
                    (Shape::Matrix(m, k), Shape::Vector(_)) => {
                        acc(*a, &mut |ga| {
                            for r in 0..m {
                                if g[r] == 0.0 {
                                    continue;
                                }
                                for (o, yv) in ga[r * k..(r + 1) * k].iter_mut().zip(y.data()) {
                                    *o += g[r] * yv;
                                }
                            }
                        });
                        acc(*b, &mut |gb| {
                            for r in 0..m {
                                if g[r] == 0.0 {
                                    continue;
                                }
                                for (o, xv) in gb.iter_mut().zip(&x.data()[r * k..(r + 1) * k]) {
                                    *o += g[r] * xv;
                                }
                            }
                        });
                    }
                    (Shape::Vector(k), Shape::Matrix(_, n)) => {
                        acc(*a, &mut |ga| {
                            for p in 0..k {
                                ga[p] += y.data()[p * n..(p + 1) * n]
                                    .iter()
                                    .zip(g)
                                    .map(|(s, t)| s * t)
                                    .sum::<f64>();
                            }
                        });
                        acc(*b, &mut |gb| {
                            for p in 0..k {
                                let xv = x.data()[p];
                                for (o, s) in gb[p * n..(p + 1) * n].iter_mut().zip(g) {
                                    *o += xv * s;
                                }
                            }
                        });
                    }
                    _ => unreachable!("matmul shapes validated in forward"),
                }
            }
            Op::Add(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, s)| *o += s));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, s)| *o += s));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, s)| *o += s));
                acc(*b, &mut |gb| gb.iter_mut().zip(g).for_each(|(o, s)| *o -= s));
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * y[j];
                    }
                });
                acc(*b, &mut |gb| {
                    for j in 0..gb.len() {
                        gb[j] += g[j] * x[j];
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * (1.0 - y[j] * y[j]);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += g[j] * y[j] * (1.0 - y[j]);
                    }
                });
            }
            Op::Affine(a, scale) => {
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, s)| *o += scale * s));
            }
            Op::Concat(parts, axis) => match (axis, out.shape()) {
                (Axis::Cols, Shape::Matrix(rows, cols)) => {
                    let mut offset = 0;
                    for &p in parts {
                        let c = val(p).cols();
                        acc(p, &mut |gp| {
                            for r in 0..rows {
                                for j in 0..c {
                                    gp[r * c + j] += g[r * cols + offset + j];
                                }
                            }
                        });
                        offset += c;
                    }
                }
                _ => {
                    let mut offset = 0;
                    for &p in parts {
                        let n = val(p).len();
                        acc(p, &mut |gp| {
                            gp.iter_mut().zip(&g[offset..offset + n]).for_each(|(o, s)| *o += s)
                        });
                        offset += n;
                    }
                }
            },
            Op::Outer(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                let n = y.len();
                acc(*a, &mut |ga| {
                    for (r, o) in ga.iter_mut().enumerate() {
                        *o += g[r * n..(r + 1) * n].iter().zip(y).map(|(s, t)| s * t).sum::<f64>();
                    }
                });
                acc(*b, &mut |gb| {
                    for (r, xv) in x.iter().enumerate() {
                        for (o, s) in gb.iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *o += xv * s;
                        }
                    }
                });
            }
            Op::Sum(a) => {
                acc(*a, &mut |ga| ga.iter_mut().for_each(|o| *o += g[0]));
            }
            Op::Dot(a, b) => {
                let (x, y) = (val(*a).data(), val(*b).data());
                acc(*a, &mut |ga| ga.iter_mut().zip(y).for_each(|(o, t)| *o += g[0] * t));
                acc(*b, &mut |gb| gb.iter_mut().zip(x).for_each(|(o, t)| *o += g[0] * t));
            }
            Op::ScaleBy(a, s) => {
                let (x, k) = (val(*a).data(), val(*s).data()[0]);
                acc(*a, &mut |ga| ga.iter_mut().zip(g).for_each(|(o, t)| *o += k * t));
                acc(*s, &mut |gs| gs[0] += x.iter().zip(g).map(|(p, q)| p * q).sum::<f64>());
            }
            Op::Select(a, idx) => {
                let n = out.len();
                acc(*a, &mut |ga| {
                    for j in 0..n {
                        ga[idx * n + j] += g[j];
                    }
                });
            }
            Op::GatherRows(a, rows) => {
                let c = val(*a).cols();
                acc(*a, &mut |ga| {
                    for (k, &r) in rows.iter().enumerate() {
                        for j in 0..c {
                            ga[r * c + j] += g[k * c + j];
                        }
                    }
                });
            }
            Op::AddRowwise(m, v) => {
                let c = val(*v).len();
                acc(*m, &mut |gm| gm.iter_mut().zip(g).for_each(|(o, s)| *o += s));
                acc(*v, &mut |gv| {
                    for row in g.chunks(c) {
                        gv.iter_mut().zip(row).for_each(|(o, s)| *o += s);
                    }
                });
            }
            Op::RowScale(m, s) => {
                let (x, k) = (val(*m).data(), val(*s).data());
                let c = val(*m).cols();
                acc(*m, &mut |gm| {
                    for (r, kr) in k.iter().enumerate() {
                        for j in 0..c {
                            gm[r * c + j] += kr * g[r * c + j];
                        }
                    }
                });
                acc(*s, &mut |gs| {
                    for (r, o) in gs.iter_mut().enumerate() {
                        *o += x[r * c..(r + 1) * c]
                            .iter()
                            .zip(&g[r * c..(r + 1) * c])
                            .map(|(p, q)| p * q)
                            .sum::<f64>();
                    }
                });
            }
            Op::Slice(a, start) => {
                let n = out.len();
                acc(*a, &mut |ga| {
                    ga[*start..start + n].iter_mut().zip(g).for_each(|(o, s)| *o += s)
                });
            }
            Op::ScatterAdd(a, index) => {
                acc(*a, &mut |ga| {
                    for (o, &j) in ga.iter_mut().zip(index.iter()) {
                        *o += g[j];
                    }
                });
            }
            Op::Softmax(a) => {
                let y = out.data();
                let inner: f64 = y.iter().zip(g).map(|(p, q)| p * q).sum();
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        ga[j] += y[j] * (g[j] - inner);
                    }
                });
            }
            Op::LogFloor(a, floor) => {
                let x = val(*a).data();
                acc(*a, &mut |ga| {
                    for j in 0..ga.len() {
                        if x[j] > *floor {
                            ga[j] += g[j] / x[j];
                        }
                    }
                });
            }
            Op::Entropy(p) => {
                let x = val(*p).data();
                acc(*p, &mut |gp| {
                    for j in 0..gp.len() {
                        if x[j] > 0.0 {
                            gp[j] -= g[0] * (x[j].ln() + 1.0);
                        }
                    }
                });
            }
        }
    }
}
