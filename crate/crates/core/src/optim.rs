//! Adam with step-decay learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::tensor::{precision, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_every_epochs: usize,
    pub betas: (f64, f64),
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            kind: OptimizerKind::Adam,
            lr: 1e-4,
            lr_decay_factor: 10.0,
            lr_decay_every_epochs: 60,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// `lr / factor^floor(epoch / every)` for a zero-based epoch index.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = epoch / self.lr_decay_every_epochs.max(1);
        self.lr / self.lr_decay_factor.powi(k as i32)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be positive, got {}", self.lr));
        }
        if self.lr_decay_factor <= 0.0 {
            return Err("lr_decay_factor must be positive".into());
        }
        if self.lr_decay_every_epochs == 0 {
            return Err("lr_decay_every_epochs must be >= 1".into());
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err("betas must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.numel()]).collect();
        Adam { cfg, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update with learning rate `lr` using the gradients accumulated in
    /// `store`. Parameters without a gradient are left unchanged.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let (b1, b2) = self.cfg.betas;
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let p = precision::current();
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let Some(grad) = store.grad(id).map(<[f64]>::to_vec) else { continue };
            let (m, v) = (&mut self.m[id.index()], &mut self.v[id.index()]);
            let data = store.get_mut(id).value.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let update = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.cfg.eps);
                data[i] = precision::round(data[i] - update, p);
            }
        }
    }
}
