use crate::autodiff::{Gradients, Matrix, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Warm-up then inverse square-root decay:
/// `factor * min(step^-0.5, step * warmup^-1.5)`.
pub fn lr_at(step: usize, warmup_steps: usize, factor: f64) -> Result<f64> {
    if step == 0 {
        return Err(Error::Config("learning-rate steps start at 1".into()));
    }
    if warmup_steps == 0 {
        return Err(Error::Config("warmup_steps must be positive".into()));
    }
    let s = step as f64;
    let w = warmup_steps as f64;
    Ok(factor * s.powf(-0.5).min(s * w.powf(-1.5)))
}

/// Adam without weight decay, restricted to a set of trainable tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    trainable: Vec<ParamId>,
    m: Vec<Option<Matrix>>,
    v: Vec<Option<Matrix>>,
    t: i32,
}

impl Adam {
    pub fn new(trainable: Vec<ParamId>, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            trainable,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// One update. Tensors without a gradient still advance their moment
    /// estimates with a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for &id in &self.trainable {
            let shape = store.get(id).dim();
            if self.m.len() <= id.0 {
                self.m.resize(id.0 + 1, None);
                self.v.resize(id.0 + 1, None);
            }
            let m = self.m[id.0].get_or_insert_with(|| Matrix::zeros(shape));
            let v = self.v[id.0].get_or_insert_with(|| Matrix::zeros(shape));
            match grads.get(id) {
                Some(g) => {
                    m.zip_mut_with(g, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
                    v.zip_mut_with(g, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
                }
                None => {
                    m.mapv_inplace(|m| self.beta1 * m);
                    v.mapv_inplace(|v| self.beta2 * v);
                }
            }
            let p = store.get_mut(id);
            ndarray::Zip::from(p).and(&*m).and(&*v).for_each(|p, &m, &v| {
                *p -= lr * (m / bc1) / ((v / bc2).sqrt() + self.eps);
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn schedule_shape() {
        let w = 10_000;
        assert!((lr_at(1, w, 1.0).unwrap() - 1e-6).abs() < 1e-18);
        let peak = lr_at(w, w, 2.0).unwrap();
        assert!((peak - 2.0 / 100.0).abs() < 1e-12);
        assert!((lr_at(4 * w, w, 2.0).unwrap() - peak / 2.0).abs() < 1e-12);
        assert!(lr_at(0, w, 1.0).is_err());
        for s in 1..50 {
            let a = lr_at(s, 20, 1.0).unwrap();
            let b = lr_at(s + 1, 20, 1.0).unwrap();
            if s < 20 {
                assert!(b > a);
            } else {
                assert!(b < a);
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut store = ParamStore::new();
        let id = store.add("w", array![[1.0, -2.0]]);
        let mut grads = Gradients::zeros_like(&store);
        let mut g1 = ParamStore::new();
        let gid = g1.add("w", array![[1.0, 1.0]]);
        let mut graph = crate::autodiff::Graph::new(&g1);
        let n = graph.param(gid);
        let s = graph.sum_rows(n);
        let w = graph.constant(array![[0.5], [-3.0]]);
        let loss = graph.matmul(s, w);
        grads.accumulate(&graph.backward(loss));
        let mut adam = Adam::new(vec![id], 0.9, 0.999, 1e-8);
        adam.step(&mut store, &grads, 0.1);
        let p = store.get(id);
        // first bias-corrected step is lr * sign(g)
        assert!((p[[0, 0]] - 0.9).abs() < 1e-6);
        assert!((p[[0, 1]] + 1.9).abs() < 1e-6);
    }
}
