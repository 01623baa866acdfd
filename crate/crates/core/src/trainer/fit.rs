use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::checkpoint::block_infos;
use super::{adam_step, lr_at, Checkpoint, CheckpointHeader, DatasetInfo, OptimizerState, TrainConfig, TrainError};
use crate::data::{make_batches, mixup_batch, LabelSpace, Segment, SensorSequence};
use crate::eval::{predict_segments, samplewise_predict, EvalReport};
use crate::model::{model_forward, ForwardOptions, ModelParams};
use crate::objective::{center_loss, cross_entropy, joint_loss};
use crate::rng::{derived, Rng, RngState};
use crate::tensor::Tensor;

/// Sample-weighted mean losses of one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub total_loss: f64,
    pub ce_loss: f64,
    pub center_loss: f64,
}

/// Model, optimizer and generator state of a training run.
#[derive(Clone, Debug)]
pub struct Trainer {
    config: TrainConfig,
    params: ModelParams,
    optimizer: OptimizerState,
    rng: Rng,
    epoch: usize,
    dataset: Option<DatasetInfo>,
}

impl Trainer {
    /// Fresh model for data with `channels` sensor channels and `num_classes`
    /// classes.
    pub fn new(config: TrainConfig, channels: usize, num_classes: usize) -> Result<Self, TrainError> {
        config.validate().map_err(TrainError::Config)?;
        let params = ModelParams::init(&config.model_config(channels, num_classes), config.seed)?;
        Ok(Self {
            optimizer: OptimizerState::new(&params),
            rng: derived(config.seed, "trainer"),
            params,
            config,
            epoch: 0,
            dataset: None,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, TrainError> {
        ckpt.validate()?;
        let rng = ckpt
            .header
            .rng
            .restore()
            .ok_or_else(|| TrainError::Checkpoint("malformed generator state".into()))?;
        Ok(Self {
            config: ckpt.header.train,
            params: ckpt.params,
            optimizer: ckpt.optimizer,
            rng,
            epoch: ckpt.header.epoch,
            dataset: ckpt.header.dataset,
        })
    }

    pub fn with_dataset(mut self, info: DatasetInfo) -> Self {
        self.dataset = Some(info);
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Changes the epoch budget, e.g. to continue a finished run.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.config.epochs = epochs;
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn dataset(&self) -> Option<&DatasetInfo> {
        self.dataset.as_ref()
    }

    pub fn checkpoint(&self, val_fm: Option<f64>) -> Checkpoint {
        Checkpoint {
            header: CheckpointHeader {
                toggles: self.config.toggles,
                model: self.params.config().clone(),
                train: self.config.clone(),
                blocks: block_infos(&self.params),
                rng: RngState::capture(&self.rng),
                epoch: self.epoch,
                adam_step: self.optimizer.step,
                val_fm,
                dataset: self.dataset.clone(),
            },
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
        }
    }

    /// One pass over `segments`: shuffle, then per batch mixup (if on),
    /// forward, joint loss, backward and an Adam step.
    pub fn train_epoch(&mut self, segments: &[Segment]) -> Result<EpochMetrics, TrainError> {
        let cfg = &self.config;
        let lr = lr_at(self.epoch, cfg);
        let opts = ForwardOptions {
            p_feat: cfg.p_feat,
            p_cls: cfg.p_cls,
            training: true,
        };
        let shuffle_seed = self.rng.next_u64();
        let mut sums = [0.0f64; 3];
        let mut seen = 0usize;
        for batch in make_batches(segments, cfg.batch_size, shuffle_seed)? {
            let batch = if cfg.toggles.mixup {
                mixup_batch(&batch, cfg.mixup_alpha, &mut self.rng)?
            } else {
                batch
            };
            let mut fwd = model_forward(&self.params, &batch.windows, &opts, &mut self.rng)?;
            let tape = &mut fwd.tape;
            let ce = cross_entropy(tape, fwd.logits, &batch.labels)?;
            let center = match fwd.params.try_get("centers") {
                Some(c) => Some(center_loss(tape, fwd.z, &batch.labels, c)?),
                None => None,
            };
            let (loss, report) = joint_loss(tape, ce, center, cfg.gamma)?;
            tape.backward(loss)?;
            let grads: Vec<Tensor> = fwd
                .params
                .vars()
                .map(|v| tape.grad(v).expect("parameters carry gradients"))
                .collect();
            adam_step(&mut self.params, &grads, &mut self.optimizer, lr, &cfg.adam)?;
            let n = batch.len() as f64;
            sums[0] += report.total * n;
            sums[1] += report.cross_entropy * n;
            sums[2] += report.center * n;
            seen += batch.len();
        }
        let metrics = EpochMetrics {
            epoch: self.epoch,
            lr,
            total_loss: sums[0] / seen.max(1) as f64,
            ce_loss: sums[1] / seen.max(1) as f64,
            center_loss: sums[2] / seen.max(1) as f64,
        };
        if !metrics.total_loss.is_finite() {
            return Err(TrainError::NonFinite { block: "loss".into() });
        }
        self.epoch += 1;
        Ok(metrics)
    }
}

/// Data the validation mean F1 is measured on.
#[derive(Clone, Copy, Debug)]
pub enum Validation<'a> {
    /// One prediction per window against its majority label.
    Windows(&'a [Segment]),
    /// One prediction per sample of continuous recordings.
    Sequences(&'a [SensorSequence]),
}

/// Mean F1 of `params` on `val`.
pub fn validation_fm(
    params: &ModelParams,
    val: &Validation<'_>,
    labels: &LabelSpace,
    include_null_in_fm: bool,
) -> Result<f64, TrainError> {
    let (truth, pred) = match val {
        Validation::Windows(segments) => (
            segments.iter().map(Segment::hard_label).collect::<Vec<_>>(),
            predict_segments(params, segments)?,
        ),
        Validation::Sequences(seqs) => {
            let mut truth = Vec::new();
            let mut pred = Vec::new();
            for s in *seqs {
                pred.extend(samplewise_predict(params, s)?);
                truth.extend_from_slice(s.labels());
            }
            (truth, pred)
        }
    };
    Ok(EvalReport::from_streams(&truth, &pred, labels, include_null_in_fm)?.fm)
}

/// One line of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// Epoch index, from 0.
    pub epoch: usize,
    pub lr: f64,
    pub total_loss: f64,
    pub ce_loss: f64,
    pub center_loss: f64,
    #[serde(rename = "val_Fm")]
    pub val_fm: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    /// Highest validation mean F1 (earliest on ties); the starting state if
    /// no epoch ran.
    pub best: Checkpoint,
    /// State after the last epoch.
    pub last: Checkpoint,
    pub history: Vec<HistoryRow>,
}

/// Trains until `config.epochs` epochs are complete, measuring validation
/// mean F1 after each. `on_epoch` sees every history row as it is produced.
pub fn fit(
    trainer: &mut Trainer,
    train: &[Segment],
    val: &Validation<'_>,
    labels: &LabelSpace,
    mut on_epoch: impl FnMut(&HistoryRow),
) -> Result<FitOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Config("no training windows".into()));
    }
    let val_empty = match val {
        Validation::Windows(s) => s.is_empty(),
        Validation::Sequences(s) => s.is_empty(),
    };
    if val_empty {
        return Err(TrainError::Config("no validation data".into()));
    }
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut history = Vec::new();
    while trainer.epoch() < trainer.config().epochs {
        let m = trainer.train_epoch(train)?;
        let fm = validation_fm(trainer.params(), val, labels, trainer.config().include_null_in_fm)?;
        let row = HistoryRow {
            epoch: m.epoch,
            lr: m.lr,
            total_loss: m.total_loss,
            ce_loss: m.ce_loss,
            center_loss: m.center_loss,
            val_fm: fm,
        };
        log::info!(
            "epoch {:>4}  lr {:.3e}  loss {:.5}  ce {:.5}  center {:.5}  val F_m {:.4}",
            row.epoch,
            row.lr,
            row.total_loss,
            row.ce_loss,
            row.center_loss,
            row.val_fm
        );
        on_epoch(&row);
        history.push(row);
        if best.as_ref().is_none_or(|(b, _)| fm > *b) {
            best = Some((fm, trainer.checkpoint(Some(fm))));
        }
    }
    let last_fm = history.last().map(|r| r.val_fm);
    let last = trainer.checkpoint(last_fm);
    let best = best.map(|(_, c)| c).unwrap_or_else(|| last.clone());
    Ok(FitOutcome { best, last, history })
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<(), TrainError> {
    let io = |e: csv::Error| TrainError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["epoch", "lr", "total_loss", "ce_loss", "center_loss", "val_Fm"])
        .map_err(io)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.lr.to_string(),
            r.total_loss.to_string(),
            r.ce_loss.to_string(),
            r.center_loss.to_string(),
            r.val_fm.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>, TrainError> {
    let io = |e: csv::Error| TrainError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    r.deserialize().map(|row| row.map_err(io)).collect()
}
