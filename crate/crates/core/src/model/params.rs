use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::ModelError;
use crate::config::{ModelConfig, BACKBONE_LAYERS, KERNEL_SIZE};
use crate::rng::derived;
use crate::tensor::{Tape, Tensor, Var};

/// Names of the cross-channel embeddings, in registration order.
pub const CIE_EMBEDDINGS: [&str; 4] = ["f", "g", "h", "v"];
/// Stacked recurrent layers.
pub const GRU_LAYERS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Zeros,
    /// `U(−√(6/fan_in), √(6/fan_in))`, for weights followed by a ReLU.
    HeUniform(usize),
    /// `U(−1/√fan_in, 1/√fan_in)`.
    FanIn(usize),
}

/// One named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: Tensor,
}

/// Every trainable tensor of a model, in a fixed registration order that is
/// a pure function of the [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    blocks: Vec<ParamBlock>,
}

fn blueprint(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let c = cfg.feature_maps;
    let h = cfg.hidden;
    let k = KERNEL_SIZE;
    let mut out = Vec::new();
    for layer in 0..BACKBONE_LAYERS {
        let c_in = if layer == 0 { 1 } else { c };
        out.push((format!("backbone.conv{layer}.weight"), vec![c, c_in, k], Init::HeUniform(c_in * k)));
        out.push((format!("backbone.conv{layer}.bias"), vec![c], Init::Zeros));
    }
    if cfg.toggles.cie {
        for e in CIE_EMBEDDINGS {
            let init = if e == "v" { Init::Zeros } else { Init::FanIn(c) };
            out.push((format!("cie.{e}.weight"), vec![c, c], init));
            if cfg.cie_bias {
                out.push((format!("cie.{e}.bias"), vec![c], Init::Zeros));
            }
        }
    }
    for layer in 0..GRU_LAYERS {
        let input = if layer == 0 { c * cfg.channels } else { h };
        out.push((format!("gru.l{layer}.w_ih"), vec![input, 3 * h], Init::FanIn(input)));
        out.push((format!("gru.l{layer}.w_hh"), vec![h, 3 * h], Init::FanIn(h)));
        out.push((format!("gru.l{layer}.b_ih"), vec![3 * h], Init::Zeros));
        out.push((format!("gru.l{layer}.b_hh"), vec![3 * h], Init::Zeros));
    }
    if cfg.toggles.age_attention {
        out.push(("age.scorer.weight".into(), vec![h, 1], Init::FanIn(h)));
        out.push(("age.scorer.bias".into(), vec![1], Init::Zeros));
    }
    out.push(("classifier.weight".into(), vec![h, cfg.num_classes], Init::FanIn(h)));
    out.push(("classifier.bias".into(), vec![cfg.num_classes], Init::Zeros));
    if cfg.toggles.center_loss {
        out.push(("centers".into(), vec![cfg.num_classes, h], Init::Zeros));
    }
    out
}

fn draw<R: Rng + ?Sized>(shape: &[usize], init: Init, rng: &mut R) -> Tensor {
    let bound = match init {
        Init::Zeros => return Tensor::zeros(shape),
        Init::HeUniform(fan_in) => (6.0 / fan_in as f64).sqrt(),
        Init::FanIn(fan_in) => 1.0 / (fan_in as f64).sqrt(),
    };
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = dist.sample(rng);
    }
    t
}

/// Expected `(name, shape)` of every block for `cfg`.
pub fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    blueprint(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

impl ModelParams {
    /// Fresh parameters. Each block draws from its own stream derived from
    /// `seed` and the block name, so adding or removing a block leaves the
    /// others unchanged.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let blocks = blueprint(config)
            .into_iter()
            .map(|(name, shape, init)| {
                let value = draw(&shape, init, &mut derived(seed, &name));
                ParamBlock { name, value }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            blocks,
        })
    }

    /// Reassembles parameters, checking names and shapes against `config`.
    pub fn from_blocks(config: &ModelConfig, blocks: Vec<ParamBlock>) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::Config)?;
        let expected = layout(config);
        let names = |v: &[String]| v.join(", ");
        let got: Vec<String> = blocks.iter().map(|b| b.name.clone()).collect();
        let want: Vec<String> = expected.iter().map(|(n, _)| n.clone()).collect();
        if got != want {
            return Err(ModelError::Config(format!(
                "parameter blocks do not match the model configuration: expected [{}], found [{}]",
                names(&want),
                names(&got)
            )));
        }
        for (block, (_, shape)) in blocks.iter().zip(&expected) {
            if block.value.shape() != shape.as_slice() {
                return Err(ModelError::Config(format!(
                    "block `{}` has shape {:?}, expected {:?}",
                    block.name,
                    block.value.shape(),
                    shape
                )));
            }
        }
        Ok(Self {
            config: config.clone(),
            blocks,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.blocks.iter().find(|b| b.name == name).map(|b| &b.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.blocks.iter_mut().find(|b| b.name == name).map(|b| &mut b.value)
    }

    /// Total number of scalars.
    pub fn num_parameters(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    /// Registers every block on `tape` as a gradient-carrying leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .blocks
            .iter()
            .map(|b| (b.name.clone(), tape.parameter(b.value.clone())))
            .collect();
        Bound { vars }
    }
}

/// Parameter blocks registered on a tape, in the order of
/// [`ModelParams::blocks`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<(String, Var)>,
}

impl Bound {
    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub(crate) fn get(&self, name: &str) -> Result<Var, ModelError> {
        self.try_get(name)
            .ok_or_else(|| ModelError::Config(format!("model has no parameter block `{name}`")))
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.iter().map(|&(_, v)| v)
    }
}
