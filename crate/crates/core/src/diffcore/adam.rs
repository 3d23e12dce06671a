//! Bias-corrected Adam.

use super::params::{Grads, ParamStore};
use super::scalar::Scalar;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state: first/second moments aligned with the store's entries
/// (empty slots for non-trainable buffers) and the shared step counter.
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, cfg: AdamConfig) -> Self {
        let m = store
            .entries()
            .iter()
            .map(|e| {
                if e.trainable {
                    vec![T::ZERO; e.value.len()]
                } else {
                    Vec::new()
                }
            })
            .collect::<Vec<_>>();
        let v = m.clone();
        Adam { cfg, t: 0, m, v }
    }

    /// One update step over every trainable parameter.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>) -> Result<()> {
        self.t += 1;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let one_m_b1 = T::ONE - b1;
        let one_m_b2 = T::ONE - b2;
        let eps = T::from_f64(self.cfg.eps);
        let corr1 = T::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let corr2 = T::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        let lr = T::from_f64(self.cfg.lr);

        for i in 0..store.len() {
            if !store.entries()[i].trainable {
                continue;
            }
            let name = store.entries()[i].name.clone();
            let g = &grads.slots()[i];
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("gradient of parameter {name}")));
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = store.value_mut(super::params::ParamId(i));
            for j in 0..p.len() {
                m[j] = b1 * m[j] + one_m_b1 * g[j];
                v[j] = b2 * v[j] + one_m_b2 * g[j] * g[j];
                let m_hat = m[j] / corr1;
                let v_hat = v[j] / corr2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(value: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add_or_bind("p", vec![1], || vec![value], true).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        let mut store = scalar_store(1.0);
        let mut adam = Adam::new(&store, AdamConfig::with_lr(1e-3));
        let mut grads = Grads::zeros_like(&store);
        grads.slot_mut(super::super::params::ParamId(0))[0] = 0.5;
        adam.step(&mut store, &grads).unwrap();
        // Bias-corrected first step: update = -lr * g / (|g| + eps') ~ -lr.
        let moved = 1.0 - store.value(super::super::params::ParamId(0))[0];
        assert!((moved - 1e-3).abs() < 1e-6, "moved {moved}");
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut store = scalar_store(0.7);
        let mut adam = Adam::new(&store, AdamConfig::with_lr(0.1));
        let grads = Grads::zeros_like(&store);
        for _ in 0..5 {
            adam.step(&mut store, &grads).unwrap();
        }
        assert_eq!(store.value(super::super::params::ParamId(0))[0], 0.7);
    }

    #[test]
    fn three_step_trajectory_matches_reference_recurrence() {
        let mut store = scalar_store(0.0);
        let cfg = AdamConfig::with_lr(0.01);
        let mut adam = Adam::new(&store, cfg);
        let mut grads = Grads::zeros_like(&store);
        grads.slot_mut(super::super::params::ParamId(0))[0] = 1.0;

        // Hand-rolled reference of the same recurrence.
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=3u32 {
            m = 0.9 * m + 0.1 * 1.0;
            v = 0.999 * v + 0.001 * 1.0;
            let m_hat = m / (1.0 - 0.9f64.powi(t as i32));
            let v_hat = v / (1.0 - 0.999f64.powi(t as i32));
            p -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
            adam.step(&mut store, &grads).unwrap();
        }
        let got = store.value(super::super::params::ParamId(0))[0];
        assert!((got - p).abs() < 1e-12, "adam {got} vs reference {p}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = scalar_store(0.0);
        let mut adam = Adam::new(&store, AdamConfig::with_lr(0.01));
        let mut grads = Grads::zeros_like(&store);
        grads.slot_mut(super::super::params::ParamId(0))[0] = f64::NAN;
        match adam.step(&mut store, &grads) {
            Err(Error::Numeric(msg)) => assert!(msg.contains('p')),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn first_step_direction_opposes_gradient() {
        for &g in &[0.3f64, -0.8, 2.0] {
            let mut store = scalar_store(0.0);
            let mut adam = Adam::new(&store, AdamConfig::with_lr(0.05));
            let mut grads = Grads::zeros_like(&store);
            grads.slot_mut(super::super::params::ParamId(0))[0] = g;
            adam.step(&mut store, &grads).unwrap();
            let p = store.value(super::super::params::ParamId(0))[0];
            assert!(p * g <= 0.0, "step moved with the gradient: p={p}, g={g}");
        }
    }
}
