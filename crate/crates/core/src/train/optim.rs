use crate::error::{Error, Result};
use crate::model::ParamStore;

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimConfig {
    pub steps: usize,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap; off when `None`.
    pub clip_norm: Option<f64>,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            peak_lr: 1e-3,
            min_lr: 1e-5,
            warmup_steps: 1_000,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_lr > self.peak_lr || self.min_lr < 0.0 {
            return Err(Error::Config(format!(
                "need 0 ≤ min_lr ≤ peak_lr, got {} and {}",
                self.min_lr, self.peak_lr
            )));
        }
        if self.steps > 0 && self.warmup_steps >= self.steps {
            return Err(Error::Config(format!(
                "warmup_steps {} must be below steps {}",
                self.warmup_steps, self.steps
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// Linear warm-up from 0 to `peak_lr`, then cosine decay reaching `min_lr` on
/// the final step.
pub fn lr_schedule(step: usize, cfg: &OptimConfig) -> f64 {
    if step < cfg.warmup_steps {
        return cfg.peak_lr * step as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.steps.saturating_sub(1).saturating_sub(cfg.warmup_steps);
    if span == 0 {
        return cfg.peak_lr;
    }
    let t = ((step - cfg.warmup_steps) as f64 / span as f64).min(1.0);
    cfg.min_lr + 0.5 * (cfg.peak_lr - cfg.min_lr) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub m: ParamStore,
    pub v: ParamStore,
    /// Number of updates applied so far.
    pub t: u64,
}

impl AdamW {
    pub fn new(params: &ParamStore) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    /// `p ← p − lr·(m̂/(√v̂ + ε) + wd·p)`.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64, cfg: &OptimConfig) -> Result<()> {
        if !grads.is_finite() {
            return Err(Error::NonFinite("AdamW gradients"));
        }
        self.t += 1;
        let clip = match cfg.clip_norm {
            Some(c) => {
                let n = grads.norm2();
                if n > c {
                    c / n
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for g in 0..params.len() {
            let grad = grads.get(g);
            let m = self.m.get_mut(g);
            for (mk, &gk) in m.iter_mut().zip(grad) {
                *mk = cfg.beta1 * *mk + (1.0 - cfg.beta1) * clip * gk;
            }
            let v = self.v.get_mut(g);
            for (vk, &gk) in v.iter_mut().zip(grad) {
                *vk = cfg.beta2 * *vk + (1.0 - cfg.beta2) * (clip * gk).powi(2);
            }
            let (m, v) = (self.m.get(g), self.v.get(g));
            for ((p, &mk), &vk) in params.get_mut(g).iter_mut().zip(m).zip(v) {
                let update = (mk / bc1) / ((vk / bc2).sqrt() + cfg.eps) + cfg.weight_decay * *p;
                *p -= lr * update;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamW::step`].
pub fn adamw_step(
    params: &mut ParamStore,
    grads: &ParamStore,
    state: &mut AdamW,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    state.step(params, grads, lr, cfg)
}
