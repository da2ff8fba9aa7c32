use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::params::{Gradients, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias-corrected moment estimates. Parameters that received no
/// gradient in a step are left untouched, moments included.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    config: AdamConfig,
    steps: Vec<u64>,
    m: Vec<Matrix<T>>,
    v: Vec<Matrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros = |s: &ParamStore<T>| s.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
        Self { config, steps: alloc::vec![0; store.len()], m: zeros(store), v: zeros(store) }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// Applies one update. Non-finite gradients abort before any parameter
    /// changes.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::Divergence("non-finite gradient".into()));
        }
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (lr, eps) = (T::lit(c.lr), T::lit(c.eps));
        for id in store.ids().collect::<Vec<_>>() {
            let Some(g) = grads.get(id) else { continue };
            let i = id.index();
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let bc1 = T::one() - b1.powi(t);
            let bc2 = T::one() - b2.powi(t);
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            let p = store.get_mut(id).as_mut_slice();
            for k in 0..p.len() {
                let gk = g.as_slice()[k];
                m[k] = b1 * m[k] + (T::one() - b1) * gk;
                v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Tape;

    fn store_with(values: &[f64]) -> (ParamStore<f64>, crate::nn::ParamId) {
        let mut s = ParamStore::new();
        let id = s.insert("w", Matrix::row_vector(values.to_vec()));
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut store, id) = store_with(&[1.0, -2.0]);
        let mut adam = Adam::new(&store, AdamConfig::with_lr(0.1));
        let mut g = Gradients::empty(1);
        g.accumulate_one(id, &Matrix::row_vector(alloc::vec![0.0, 0.0]), 1.0);
        adam.step(&mut store, &g).unwrap();
        assert_eq!(store.get(id).as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut store, id) = store_with(&[1.0, -2.0, 0.5]);
        let mut adam = Adam::new(&store, AdamConfig::with_lr(0.01));
        let mut g = Gradients::empty(1);
        g.accumulate_one(id, &Matrix::row_vector(alloc::vec![3.0, -0.2, 7.0]), 1.0);
        adam.step(&mut store, &g).unwrap();
        let after = store.get(id).as_slice();
        let expected = [1.0 - 0.01, -2.0 + 0.01, 0.5 - 0.01];
        for (a, e) in after.iter().zip(expected) {
            assert!((a - e).abs() < 1e-8, "{a} vs {e}");
        }
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let (mut store, id) = store_with(&[1.0]);
        let mut adam = Adam::new(&store, AdamConfig::default());
        let mut g = Gradients::empty(1);
        g.accumulate_one(id, &Matrix::row_vector(alloc::vec![f64::NAN]), 1.0);
        assert!(matches!(adam.step(&mut store, &g), Err(Error::Divergence(_))));
        assert_eq!(store.get(id).as_slice(), &[1.0]);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let (mut store, id) = store_with(&[3.0, -1.5, 0.7, 2.2]);
        let target = [0.5, 1.0, -0.25, 2.0];
        let mut adam = Adam::new(&store, AdamConfig::with_lr(1e-2));
        let loss = |store: &ParamStore<f64>| {
            store.get(id).as_slice().iter().zip(target).map(|(w, t)| (w - t) * (w - t)).sum::<f64>()
        };
        for _ in 0..2000 {
            let mut tape = Tape::new(&store);
            let w = tape.param(id);
            let t = tape.constant(Matrix::row_vector(target.to_vec()));
            let d = tape.sub(w, t);
            let sq = tape.mul(d, d);
            let l = tape.sum(sq);
            let g = tape.backward(l);
            adam.step(&mut store, &g).unwrap();
        }
        assert!(loss(&store) < 1e-6, "loss {}", loss(&store));
    }
}
