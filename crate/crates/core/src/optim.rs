//! Adam with bias correction.

use std::collections::HashMap;

use crate::params::ParameterStore;

/// `(parameter name, first moment, second moment)`.
pub type MomentEntry = (String, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: HashMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, moments: HashMap::new() }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64, eps: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self.eps = eps;
        self
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every trainable parameter from its gradient slot.
    pub fn step(&mut self, store: &mut ParameterStore) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for entry in store.iter_mut().filter(|e| e.trainable) {
            let n = entry.value.len();
            let (m, v) = self
                .moments
                .entry(entry.name.clone())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let grad = entry.grad.data();
            let value = entry.value.data_mut();
            for i in 0..n {
                let gi = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                value[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    /// Moment buffers sorted by parameter name, for checkpointing.
    pub fn state(&self) -> (u64, Vec<MomentEntry>) {
        let mut entries: Vec<_> =
            self.moments.iter().map(|(k, (m, v))| (k.clone(), m.clone(), v.clone())).collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        (self.step, entries)
    }

    pub fn restore(&mut self, step: u64, entries: Vec<(String, Vec<f64>, Vec<f64>)>) {
        self.step = step;
        self.moments = entries.into_iter().map(|(k, m, v)| (k, (m, v))).collect();
    }
}

/// Convenience form of [`Adam::step`] for a fresh optimizer state.
pub fn adam_step(opt: &mut Adam, store: &mut ParameterStore) {
    opt.step(store);
}
