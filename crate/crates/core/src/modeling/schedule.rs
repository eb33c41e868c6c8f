use serde::{Deserialize, Serialize};

/// Training hyper-parameters. Defaults follow the reference setup: batch
/// 32, 1,000 warmup steps to 1e-4, polynomial decay over 10,000 steps to
/// 5e-5, evaluation every 1,000 steps with patience 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub warmup_steps: u64,
    pub max_lr: f64,
    pub decay_steps: u64,
    pub min_lr: f64,
    /// Exponent of the polynomial decay; 1 is linear.
    pub decay_power: f64,
    pub eval_interval: u64,
    pub patience: usize,
    pub seed: u64,
    pub max_steps: Option<u64>,
    /// Stop with reason `exhausted` after this many passes over the mixture.
    pub max_epochs: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            warmup_steps: 1000,
            max_lr: 1e-4,
            decay_steps: 10_000,
            min_lr: 5e-5,
            decay_power: 1.0,
            eval_interval: 1000,
            patience: 5,
            seed: 42,
            max_steps: None,
            max_epochs: None,
        }
    }
}

impl TrainConfig {
    /// Field-level validation; the message names the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size == 0 {
            return Err("batch_size: must be at least 1".into());
        }
        if !(self.min_lr > 0.0 && self.min_lr <= self.max_lr && self.max_lr.is_finite()) {
            return Err(format!(
                "min_lr/max_lr: need 0 < min_lr <= max_lr, got min_lr={} max_lr={}",
                self.min_lr, self.max_lr
            ));
        }
        if !(self.decay_power > 0.0 && self.decay_power.is_finite()) {
            return Err(format!("decay_power: must be positive, got {}", self.decay_power));
        }
        if self.eval_interval == 0 {
            return Err("eval_interval: must be at least 1".into());
        }
        if self.patience == 0 {
            return Err("patience: must be at least 1".into());
        }
        if self.max_steps == Some(0) {
            return Err("max_steps: must be at least 1 when set".into());
        }
        if self.max_epochs == Some(0) {
            return Err("max_epochs: must be at least 1 when set".into());
        }
        Ok(())
    }
}

/// Learning rate at `step`.
///
/// Linear warmup from 0 reaching `max_lr` at `warmup_steps`, then
/// polynomial decay `(max - min) * (1 - p)^power + min` over `decay_steps`,
/// then constant `min_lr`.
pub fn lr_schedule(step: u64, config: &TrainConfig) -> f64 {
    let warmup = config.warmup_steps;
    if step <= warmup {
        if warmup == 0 {
            return config.max_lr;
        }
        return config.max_lr * step as f64 / warmup as f64;
    }
    let since = step - warmup;
    if since >= config.decay_steps {
        return config.min_lr;
    }
    let remaining = 1.0 - since as f64 / config.decay_steps as f64;
    (config.max_lr - config.min_lr) * remaining.powf(config.decay_power) + config.min_lr
}
