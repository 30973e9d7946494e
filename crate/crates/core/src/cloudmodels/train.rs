use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::nn::{optimizer_step, AdamW, AdamWConfig, ScheduleMode};
use crate::rng;

use super::config::{AuxChannel, Task};
use super::input::{Batch, PreparedCloud};
use super::CloudModel;

/// Epochs, batch size and optimizer settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub schedule: ScheduleMode,
}

impl TrainConfig {
    /// Standard budgets: classification 20 epochs with features and
    /// 100 without (batch 16); segmentation 100 / 200 (batch 8).
    pub fn standard(task: Task, aux: AuxChannel) -> Self {
        let (epochs, batch_size) = match (task, aux) {
            (Task::Classify, AuxChannel::Features) => (20, 16),
            (Task::Classify, AuxChannel::Normals) => (100, 16),
            (Task::Segment, AuxChannel::Features) => (100, 8),
            (Task::Segment, AuxChannel::Normals) => (200, 8),
        };
        Self { epochs, batch_size, learning_rate: 1e-3, weight_decay: 0.01, schedule: ScheduleMode::default() }
    }

    pub fn optimizer(&self, total_steps: u64) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            weight_decay_max: self.weight_decay,
            weight_decay_min: 0.0,
            total_steps,
            mode: self.schedule,
            ..AdamWConfig::default()
        }
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("train.epochs", self.epochs);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.learning_rate", self.learning_rate);
        kv.set("train.weight_decay", self.weight_decay);
        kv.set("train.schedule", self.schedule.as_str());
        kv
    }

    pub fn from_kv(kv: &KvFile, default: Self) -> Result<Self> {
        let c = Self {
            epochs: kv.get_or("train.epochs", default.epochs)?,
            batch_size: kv.get_or("train.batch_size", default.batch_size)?,
            learning_rate: kv.get_or("train.learning_rate", default.learning_rate)?,
            weight_decay: kv.get_or("train.weight_decay", default.weight_decay)?,
            schedule: match kv.raw("train.schedule") {
                Some(s) => ScheduleMode::parse(s)?,
                None => default.schedule,
            },
        };
        if c.batch_size == 0 {
            return Err(Error::invalid_data("train.batch_size must be positive"));
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Mini-batch training with a per-epoch shuffle drawn from `seed`.
pub fn train(model: &mut CloudModel, data: &[PreparedCloud], config: &TrainConfig, seed: u64) -> Result<(TrainReport, AdamW<f32>)> {
    if data.is_empty() {
        return Err(Error::invalid_argument("no training objects"));
    }
    let per_epoch = data.len().div_ceil(config.batch_size);
    let total = (per_epoch * config.epochs) as u64;
    let mut optimizer = AdamW::new(config.optimizer(total), &model.params);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle = rng::stream(seed, "train-shuffle");
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let refs: Vec<&PreparedCloud> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = Batch::new(&refs)?;
            let net = &model.net;
            sum += optimizer_step(&mut model.params, &mut optimizer, |tape| net.loss(tape, &batch))?;
        }
        epoch_losses.push(sum / per_epoch as f64);
    }
    Ok((TrainReport { epoch_losses, steps: optimizer.step_count() }, optimizer))
}
