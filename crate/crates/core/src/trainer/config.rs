use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, Toggles, MIN_WINDOW};
use crate::data::WindowConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Every training knob. Missing keys take their defaults when read from
/// JSON; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Multiplicative decay applied every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub adam: AdamConfig,
    pub mixup_alpha: f64,
    /// Center-loss weight.
    pub gamma: f64,
    /// Dropout on the refined feature maps.
    pub p_feat: f64,
    /// Dropout on the classifier input.
    pub p_cls: f64,
    pub seed: u64,
    pub toggles: Toggles,
    pub window: usize,
    pub overlap: f64,
    /// Skip training windows whose majority label is Null.
    pub drop_null: bool,
    pub feature_maps: usize,
    pub hidden: usize,
    pub cie_bias: bool,
    /// Whether the Null class counts toward the validation mean F1.
    pub include_null_in_fm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 256,
            lr: 1e-3,
            lr_decay: 0.9,
            lr_decay_every: 10,
            adam: AdamConfig::default(),
            mixup_alpha: 0.8,
            gamma: 3e-4,
            p_feat: 0.5,
            p_cls: 0.5,
            seed: 0,
            toggles: Toggles::all_on(),
            window: 24,
            overlap: 0.5,
            drop_null: false,
            feature_maps: 64,
            hidden: 128,
            cie_bias: false,
            include_null_in_fm: true,
        }
    }
}

impl TrainConfig {
    pub fn window_config(&self) -> WindowConfig {
        WindowConfig {
            width: self.window,
            overlap: self.overlap,
            drop_null: self.drop_null,
        }
    }

    pub fn model_config(&self, channels: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            channels,
            window: self.window,
            num_classes,
            feature_maps: self.feature_maps,
            hidden: self.hidden,
            cie_bias: self.cie_bias,
            toggles: self.toggles,
        }
    }

    /// Checks every value range; the first violation is reported.
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must lie in [0, 1), got {v}"))
            }
        };
        if self.batch_size == 0 {
            return Err("batch_size must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(format!("lr must be a finite value ≥ 0, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(format!("lr_decay must lie in (0, 1], got {}", self.lr_decay));
        }
        if self.lr_decay_every == 0 {
            return Err("lr_decay_every must be at least 1".into());
        }
        unit("adam.beta1", self.adam.beta1)?;
        unit("adam.beta2", self.adam.beta2)?;
        if !(self.adam.eps > 0.0 && self.adam.eps.is_finite()) {
            return Err(format!("adam.eps must be positive, got {}", self.adam.eps));
        }
        if !(self.mixup_alpha > 0.0 && self.mixup_alpha.is_finite()) {
            return Err(format!("mixup_alpha must be positive, got {}", self.mixup_alpha));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(format!("gamma must be a finite value ≥ 0, got {}", self.gamma));
        }
        unit("p_feat", self.p_feat)?;
        unit("p_cls", self.p_cls)?;
        if self.window < MIN_WINDOW {
            return Err(format!(
                "window {} too short: the backbone needs at least {MIN_WINDOW} samples",
                self.window
            ));
        }
        if self.feature_maps == 0 || self.hidden == 0 {
            return Err("feature_maps and hidden must be positive".into());
        }
        self.window_config().stride().map_err(|e| e.to_string())?;
        Ok(())
    }
}

/// `lr · decay^⌊epoch / every⌋`, with `epoch` counted from 0.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    let steps = (epoch / config.lr_decay_every.max(1)) as i32;
    config.lr * config.lr_decay.powi(steps)
}
