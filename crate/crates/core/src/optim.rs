//! AdamW with decoupled weight decay and a per-step cosine schedule.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::{Grads, ParamStore, Role};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied to tensors with two or more dimensions only.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "eps must be positive and weight decay nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// `lr * (1 + cos(pi * step / total)) / 2`, clamped at the end of the schedule.
pub fn cosine_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    let t = (step.min(total)) as f64 / total as f64;
    base * 0.5 * (1.0 + libm::cos(PI * t))
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub config: AdamWConfig,
    pub total_steps: usize,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore, total_steps: usize) -> Result<Self> {
        config.validate()?;
        let zeros = |e: &crate::params::ParamEntry| match e.role {
            Role::Trainable => vec![0.0; e.value.len()],
            _ => Vec::new(),
        };
        Ok(Self {
            m: store.entries().iter().map(zeros).collect(),
            v: store.entries().iter().map(zeros).collect(),
            config,
            total_steps,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.config.lr, self.step, self.total_steps)
    }

    /// Moment estimates per parameter, for checkpointing.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    pub fn restore(&mut self, step: usize, m: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> Result<()> {
        let ok =
            |a: &[Vec<f64>], b: &[Vec<f64>]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len());
        if !ok(&m, &self.m) || !ok(&v, &self.v) {
            return Err(Error::Config("optimizer state does not match the model".into()));
        }
        self.step = step;
        self.m = m;
        self.v = v;
        Ok(())
    }

    /// One update of every trainable parameter. Frozen entries and buffers
    /// are never touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Grads) {
        let lr = self.current_lr();
        self.step += 1;
        let c = &self.config;
        let bc1 = 1.0 - libm::pow(c.beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(c.beta2, self.step as f64);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(g) = grads.get(id) else { continue };
            let i = id.index();
            let decay = store.get(id).shape().len() >= 2;
            let w = store.get_mut(id).data_mut();
            for k in 0..w.len() {
                let gk = g[k];
                self.m[i][k] = c.beta1 * self.m[i][k] + (1.0 - c.beta1) * gk;
                self.v[i][k] = c.beta2 * self.v[i][k] + (1.0 - c.beta2) * gk * gk;
                let mh = self.m[i][k] / bc1;
                let vh = self.v[i][k] / bc2;
                if decay {
                    w[k] -= lr * c.weight_decay * w[k];
                }
                w[k] -= lr * mh / (libm::sqrt(vh) + c.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn schedule_endpoints() {
        assert_eq!(cosine_lr(0.1, 0, 10), 0.1);
        assert!(cosine_lr(0.1, 10, 10).abs() < 1e-18);
        assert!((cosine_lr(0.1, 5, 10) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn frozen_untouched_and_first_step_is_lr_sized() {
        let mut ps = ParamStore::new();
        let f = ps.add("f".into(), "g", Role::Frozen, Tensor::filled(&[2], 1.0));
        let t = ps.add("t".into(), "g", Role::Trainable, Tensor::filled(&[2], 1.0));
        let mut grads = Grads::new(&ps);
        grads.slot(t).copy_from_slice(&[3.0, -0.5]);
        let mut opt = AdamW::new(AdamWConfig::default(), &ps, 100).unwrap();
        opt.step(&mut ps, &grads);
        assert_eq!(ps.get(f).data(), &[1.0, 1.0]);
        let d = ps.get(t).data();
        assert!((d[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((d[1] - (1.0 + 1e-3)).abs() < 1e-9);
    }
}
