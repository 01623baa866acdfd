//! Architecture and component switches shared by the model and trainer.

use serde::{Deserialize, Serialize};

/// Convolution layers in the backbone.
pub const BACKBONE_LAYERS: usize = 4;
/// Temporal filter length of every backbone layer.
pub const KERNEL_SIZE: usize = 5;
/// Smallest window that leaves at least one time-step after the backbone.
pub const MIN_WINDOW: usize = BACKBONE_LAYERS * (KERNEL_SIZE - 1) + 1;

/// Component switches. `cie`, `age_attention` and `center_loss` change the
/// parameter set and are fixed once a model is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Toggles {
    pub mixup: bool,
    pub center_loss: bool,
    pub cie: bool,
    pub age_attention: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self::all_on()
    }
}

impl Toggles {
    pub fn all_on() -> Self {
        Self {
            mixup: true,
            center_loss: true,
            cie: true,
            age_attention: true,
        }
    }

    pub fn all_off() -> Self {
        Self {
            mixup: false,
            center_loss: false,
            cie: false,
            age_attention: false,
        }
    }

    /// All 16 combinations, in a fixed order.
    pub fn combinations() -> impl Iterator<Item = Toggles> {
        (0..16u8).map(|bits| Toggles {
            mixup: bits & 1 != 0,
            center_loss: bits & 2 != 0,
            cie: bits & 4 != 0,
            age_attention: bits & 8 != 0,
        })
    }

    /// Sets a switch by name (`mixup`, `center_loss`, `cie`, `age_attention`).
    pub fn set(&mut self, name: &str, on: bool) -> Result<(), String> {
        match name {
            "mixup" => self.mixup = on,
            "center_loss" => self.center_loss = on,
            "cie" => self.cie = on,
            "age_attention" => self.age_attention = on,
            other => return Err(format!("unknown toggle `{other}`")),
        }
        Ok(())
    }
}

/// Network geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Sensor channels `D`.
    pub channels: usize,
    /// Window length `W`.
    pub window: usize,
    pub num_classes: usize,
    /// Backbone feature maps `C`.
    #[serde(default = "default_feature_maps")]
    pub feature_maps: usize,
    /// GRU width, shared by both layers.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    /// Bias terms on the cross-channel embeddings.
    #[serde(default)]
    pub cie_bias: bool,
    pub toggles: Toggles,
}

fn default_feature_maps() -> usize {
    64
}

fn default_hidden() -> usize {
    128
}

impl ModelConfig {
    pub fn new(channels: usize, window: usize, num_classes: usize, toggles: Toggles) -> Self {
        Self {
            channels,
            window,
            num_classes,
            feature_maps: default_feature_maps(),
            hidden: default_hidden(),
            cie_bias: false,
            toggles,
        }
    }

    /// Time-steps left after the backbone.
    pub fn time_steps(&self) -> usize {
        self.window.saturating_sub(BACKBONE_LAYERS * (KERNEL_SIZE - 1))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.window < MIN_WINDOW {
            return Err(format!(
                "window {} too short: the backbone needs at least {MIN_WINDOW} samples",
                self.window
            ));
        }
        if self.channels == 0 || self.num_classes == 0 || self.feature_maps == 0 || self.hidden == 0 {
            return Err("channels, classes, feature maps and hidden size must be positive".into());
        }
        Ok(())
    }
}
