//! Adam and global-norm gradient clipping.

use crate::tensor::ParamStore;

/// Per-parameter gradients aligned with a [`ParamStore`].
pub type Grads = Vec<Option<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Tensors whose update was skipped for a non-finite gradient.
    pub skipped: u64,
}

impl Adam {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.ids().map(|id| vec![0.0; store.get(id).len()]).collect();
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
            skipped: 0,
        }
    }

    /// One bias-corrected update. Tensors without a gradient are left
    /// alone; tensors with a non-finite gradient are skipped and counted.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Vec<f64>>], lr: f64) {
        assert_eq!(grads.len(), self.m.len(), "gradient list does not match optimizer state");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in store.ids().collect::<Vec<_>>() {
            let k = id.index();
            let Some(g) = &grads[k] else { continue };
            if !store.is_trainable(id) {
                continue;
            }
            if g.iter().any(|x| !x.is_finite()) {
                self.skipped += 1;
                continue;
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            let p = store.get_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Global L2 norm over finite gradient tensors.
pub fn global_norm(grads: &[Option<Vec<f64>>]) -> f64 {
    grads
        .iter()
        .flatten()
        .filter(|g| g.iter().all(|x| x.is_finite()))
        .flat_map(|g| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`;
/// returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Option<Vec<f64>>], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm {
        let k = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            g.iter_mut().for_each(|x| *x *= k);
        }
    }
    norm
}

/// Adds `b` into `a`, scaled by `scale`.
pub fn accumulate(a: &mut Grads, b: &[Option<Vec<f64>>], scale: f64) {
    for (x, y) in a.iter_mut().zip(b) {
        let Some(y) = y else { continue };
        match x {
            Some(x) => x.iter_mut().zip(y).for_each(|(p, q)| *p += scale * q),
            None => *x = Some(y.iter().map(|q| scale * q).collect()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(vals: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("w", Tensor::vector(vals)).unwrap();
        s
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut s = store(vec![1.0, -2.0]);
        let mut adam = Adam::new(&s);
        adam.step(&mut s, &[Some(vec![0.0, 0.0])], 0.1);
        assert_eq!(s.get(s.find("w").unwrap()).data(), &[1.0, -2.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn first_step_is_lr_times_sign() {
        let mut s = store(vec![0.0; 3]);
        let mut adam = Adam::new(&s);
        adam.step(&mut s, &[Some(vec![3.0, -0.001, 1e-3])], 0.01);
        let p = s.get(s.find("w").unwrap()).data().to_vec();
        for (x, sign) in p.iter().zip([-1.0, 1.0, -1.0]) {
            assert!(x.abs() <= 0.01 * (1.0 + 1e-6));
            assert!((x - sign * 0.01).abs() < 1e-6);
        }
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let mut s = store(vec![0.5]);
        let mut adam = Adam::new(&s);
        let g = 0.3;
        adam.step(&mut s, &[Some(vec![g])], 0.1);
        adam.step(&mut s, &[Some(vec![g])], 0.1);
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v, mut p) = (0.0, 0.0, 0.5);
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            p -= 0.1 * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!((s.get(s.find("w").unwrap()).data()[0] - p).abs() < 1e-15);
    }

    #[test]
    fn non_finite_grad_skipped() {
        let mut s = store(vec![1.0]);
        let mut adam = Adam::new(&s);
        adam.step(&mut s, &[Some(vec![f64::NAN])], 0.1);
        assert_eq!(s.get(s.find("w").unwrap()).data(), &[1.0]);
        assert_eq!(adam.skipped, 1);
    }

    #[test]
    fn clipping_preserves_direction() {
        let raw = vec![Some(vec![3.0, 4.0]), None, Some(vec![12.0])];
        let mut g = raw.clone();
        let n = clip_global_norm(&mut g, 2.0);
        assert_eq!(n, 13.0);
        assert!((global_norm(&g) - 2.0).abs() < 1e-12);
        let k = g[0].as_ref().unwrap()[0] / 3.0;
        assert!(k > 0.0);
        for (a, b) in g.iter().flatten().zip(raw.iter().flatten()) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - k * y).abs() < 1e-12);
            }
        }
        let mut small = vec![Some(vec![0.1])];
        clip_global_norm(&mut small, 2.0);
        assert_eq!(small[0].as_deref(), Some(&[0.1][..]));
    }
}
