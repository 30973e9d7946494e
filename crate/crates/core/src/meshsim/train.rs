use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::formats::Checkpoint;
use crate::kv::KvFile;
use crate::nn::{optimizer_step, AdamW, AdamWConfig, ParamStore, ScheduleMode, Tape};
use crate::rng;

use super::graph::{input_width, node_inputs, Adjacency, AugmentConfig};
use super::model::{MaskMode, SizeClass, Surrogate, SurrogateConfig};
use super::rollout::DeltaModel;
use super::MeshGraphSequence;

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrainConfig {
    pub size: SizeClass,
    pub mask_mode: MaskMode,
    pub augment: AugmentConfig,
    /// Optimizer steps (not epochs).
    pub steps: usize,
    /// Transitions per step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub schedule: ScheduleMode,
}

impl Default for RolloutTrainConfig {
    fn default() -> Self {
        Self {
            size: SizeClass::S,
            mask_mode: MaskMode::Additive,
            augment: AugmentConfig::default(),
            steps: 500,
            batch_size: 4,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            schedule: ScheduleMode::default(),
        }
    }
}

impl RolloutTrainConfig {
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("rollout.size", self.size);
        kv.set("rollout.mask_mode", self.mask_mode.as_str());
        kv.set("rollout.hops", self.augment.hops);
        kv.set("rollout.random_edges", self.augment.random_edges.map_or("auto".to_string(), |r| r.to_string()));
        kv.set("rollout.global_nodes", self.augment.global_nodes);
        kv.set("train.steps", self.steps);
        kv.set("train.batch_size", self.batch_size);
        kv.set("train.learning_rate", self.learning_rate);
        kv.set("train.weight_decay", self.weight_decay);
        kv.set("train.schedule", self.schedule.as_str());
        kv
    }

    /// Reads `rollout.*` and `train.*` keys over `default`.
    pub fn from_kv(kv: &KvFile, default: Self) -> Result<Self> {
        let random_edges = match kv.raw("rollout.random_edges") {
            None => default.augment.random_edges,
            Some("auto") => None,
            Some(v) => Some(v.parse().map_err(|_| Error::invalid_data(format!("rollout.random_edges: {v:?}")))?),
        };
        let c = Self {
            size: kv.get_or("rollout.size", default.size)?,
            mask_mode: kv.get_or("rollout.mask_mode", default.mask_mode)?,
            augment: AugmentConfig {
                hops: kv.get_or("rollout.hops", default.augment.hops)?,
                random_edges,
                global_nodes: kv.get_or("rollout.global_nodes", default.augment.global_nodes)?,
            },
            steps: kv.get_or("train.steps", default.steps)?,
            batch_size: kv.get_or("train.batch_size", default.batch_size)?,
            learning_rate: kv.get_or("train.learning_rate", default.learning_rate)?,
            weight_decay: kv.get_or("train.weight_decay", default.weight_decay)?,
            schedule: match kv.raw("train.schedule") {
                Some(s) => ScheduleMode::parse(s)?,
                None => default.schedule,
            },
        };
        if c.batch_size == 0 || c.augment.hops == 0 {
            return Err(Error::invalid_data("train.batch_size and rollout.hops must be positive"));
        }
        Ok(c)
    }
}

/// Input standardization and the delta scale the network's outputs are
/// multiplied by. Stored at f32 so a reloaded model behaves identically.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub input_mean: Vec<f32>,
    pub input_std: Vec<f32>,
    pub delta_scale: Vec<f32>,
}

fn positive_or_one(v: f64) -> f32 {
    if v > 1e-12 {
        v as f32
    } else {
        1.0
    }
}

impl Normalizer {
    pub fn fit(data: &[MeshGraphSequence]) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::invalid_argument("no training sequences"))?;
        let (p, c) = (input_width(first), first.field_channels);
        if data.iter().any(|s| input_width(s) != p || s.field_channels != c) {
            return Err(Error::invalid_data("training sequences disagree on channel layout"));
        }
        if data.iter().any(|s| s.step_count() < 2) {
            return Err(Error::invalid_data("every training sequence needs at least two frames"));
        }
        let (mut sum, mut sq, mut rows) = (vec![0.0; p], vec![0.0; p], 0usize);
        let (mut dsq, mut drows) = (vec![0.0; c], 0usize);
        for s in data {
            for (t, f) in s.fields.iter().enumerate() {
                let x = node_inputs(s, f)?;
                for row in x.chunks_exact(p) {
                    row.iter().enumerate().for_each(|(j, v)| {
                        sum[j] += v;
                        sq[j] += v * v;
                    });
                    rows += 1;
                }
                if let Some(next) = s.fields.get(t + 1) {
                    for (i, (a, b)) in f.iter().zip(next).enumerate() {
                        dsq[i % c] += (b - a).powi(2);
                    }
                    drows += s.node_count();
                }
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / rows as f64).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| positive_or_one((q / rows as f64 - m * m).max(0.0).sqrt()));
        Ok(Self {
            input_mean: mean.iter().map(|&m| m as f32).collect(),
            input_std: std.collect(),
            delta_scale: dsq.iter().map(|q| positive_or_one((q / drows as f64).sqrt())).collect(),
        })
    }

    fn inputs(&self, x: &[f64]) -> Vec<f32> {
        let p = self.input_mean.len();
        x.iter().enumerate().map(|(i, &v)| (v as f32 - self.input_mean[i % p]) / self.input_std[i % p]).collect()
    }

    fn deltas(&self, d: &[f64]) -> Vec<f32> {
        let c = self.delta_scale.len();
        d.iter().enumerate().map(|(i, &v)| v as f32 / self.delta_scale[i % c]).collect()
    }
}

/// Surrogate parameters plus everything needed to run it on raw fields.
#[derive(Debug, Clone)]
pub struct RolloutModel {
    pub net: Surrogate,
    pub params: ParamStore<f32>,
    pub normalizer: Normalizer,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl RolloutModel {
    /// Freshly initialized model with the normalizer fitted to `data`.
    pub fn for_data(data: &[MeshGraphSequence], config: &RolloutTrainConfig, seed: u64) -> Result<Self> {
        let normalizer = Normalizer::fit(data)?;
        let mut sc = SurrogateConfig::new(config.size, normalizer.input_mean.len(), normalizer.delta_scale.len());
        sc.mask_mode = config.mask_mode;
        Self::new(&sc, normalizer, config.augment, seed)
    }

    pub fn new(config: &SurrogateConfig, normalizer: Normalizer, augment: AugmentConfig, seed: u64) -> Result<Self> {
        if normalizer.input_mean.len() != config.input_width || normalizer.delta_scale.len() != config.output_width {
            return Err(Error::invalid_argument("normalizer does not match the surrogate widths"));
        }
        let mut params = ParamStore::new();
        let net = Surrogate::build(config, &mut params, seed)?;
        Ok(Self { net, params, normalizer, augment, seed })
    }

    fn adjacency(&self, seq: &MeshGraphSequence, salt: &str) -> Result<Adjacency> {
        let base = Adjacency::from_edges(seq.node_count(), &seq.edges)?;
        self.augment.apply(&base, rng::derive_seed(self.seed, salt))
    }

    fn check_layout(&self, seq: &MeshGraphSequence) -> Result<()> {
        let c = &self.net.config;
        if input_width(seq) != c.input_width || seq.field_channels != c.output_width {
            return Err(Error::invalid_argument(format!(
                "sequence has {} input and {} field channels, model expects {} and {}",
                input_width(seq),
                seq.field_channels,
                c.input_width,
                c.output_width
            )));
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let c = &self.net.config;
        let mut ck = Checkpoint::from_params(&self.params)?;
        ck.push_meta("input_mean", self.normalizer.input_mean.clone());
        ck.push_meta("input_std", self.normalizer.input_std.clone());
        ck.push_meta("delta_scale", self.normalizer.delta_scale.clone());
        let mode = match c.mask_mode {
            MaskMode::Additive => 0.0,
            MaskMode::Product => 1.0,
        };
        ck.push_meta("surrogate", vec![c.latent as f32, c.blocks as f32, c.heads as f32, mode]);
        let a = &self.augment;
        let random = a.random_edges.map_or(-1.0, |r| r as f32);
        ck.push_meta("augment", vec![a.hops as f32, random, a.global_nodes as f32]);
        Ok(ck)
    }

    pub fn from_checkpoint(ck: &Checkpoint, size: SizeClass, seed: u64) -> Result<Self> {
        let meta = |name: &str| {
            ck.meta(name)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::invalid_data(format!("checkpoint lacks meta/{name}")))
        };
        let normalizer = Normalizer {
            input_mean: meta("input_mean")?,
            input_std: meta("input_std")?,
            delta_scale: meta("delta_scale")?,
        };
        let s = meta("surrogate")?;
        let a = meta("augment")?;
        if s.len() != 4 || a.len() != 3 {
            return Err(Error::invalid_data("malformed surrogate metadata"));
        }
        let config = SurrogateConfig {
            size,
            latent: s[0] as usize,
            blocks: s[1] as usize,
            heads: s[2] as usize,
            input_width: normalizer.input_mean.len(),
            output_width: normalizer.delta_scale.len(),
            mask_mode: if s[3] == 1.0 { MaskMode::Product } else { MaskMode::Additive },
        };
        let augment = AugmentConfig {
            hops: a[0] as usize,
            random_edges: (a[1] >= 0.0).then_some(a[1] as usize),
            global_nodes: a[2] as usize,
        };
        let mut model = Self::new(&config, normalizer, augment, seed)?;
        ck.restore_params(&mut model.params)?;
        Ok(model)
    }
}

impl DeltaModel for RolloutModel {
    fn predict_delta(&self, seq: &MeshGraphSequence, fields: &[f64], step: usize) -> Result<Vec<f64>> {
        self.check_layout(seq)?;
        let adjacency = self.adjacency(seq, &format!("rollout-edges/{step}"))?;
        let x = self.normalizer.inputs(&node_inputs(seq, fields)?);
        let mut tape = Tape::new(&self.params);
        let xv = tape.input(seq.node_count(), self.net.config.input_width, x)?;
        let out = self.net.forward(&mut tape, xv, &adjacency)?;
        let c = self.normalizer.delta_scale.len();
        Ok(tape.value(out).iter().enumerate().map(|(i, &v)| (v * self.normalizer.delta_scale[i % c]) as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutTrainReport {
    pub losses: Vec<f64>,
}

/// One-step delta regression on all transitions of `data`, visited in
/// shuffled passes; random augmentation edges are redrawn for every sample.
pub fn train_rollout(
    model: &mut RolloutModel,
    data: &[MeshGraphSequence],
    config: &RolloutTrainConfig,
) -> Result<(RolloutTrainReport, AdamW<f32>)> {
    for s in data {
        model.check_layout(s)?;
    }
    let samples: Vec<(usize, usize)> =
        data.iter().enumerate().flat_map(|(i, s)| (0..s.step_count() - 1).map(move |t| (i, t))).collect();
    if samples.is_empty() || config.batch_size == 0 {
        return Err(Error::invalid_argument("no training transitions or zero batch size"));
    }
    let opt = AdamWConfig {
        learning_rate: config.learning_rate,
        weight_decay_max: config.weight_decay,
        weight_decay_min: 0.0,
        total_steps: config.steps as u64,
        mode: config.schedule,
        ..AdamWConfig::default()
    };
    let mut optimizer = AdamW::new(opt, &model.params);
    let mut shuffle = rng::stream(model.seed, "rollout-shuffle");
    let mut order = samples.clone();
    let mut cursor = order.len();
    let mut losses = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for b in 0..config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle);
                cursor = 0;
            }
            let (i, t) = order[cursor];
            cursor += 1;
            let seq = &data[i];
            let adjacency = model.adjacency(seq, &format!("train-edges/{step}/{b}"))?;
            let x = model.normalizer.inputs(&node_inputs(seq, &seq.fields[t])?);
            let delta: Vec<f64> = seq.fields[t + 1].iter().zip(&seq.fields[t]).map(|(b, a)| b - a).collect();
            batch.push((seq.node_count(), x, adjacency, model.normalizer.deltas(&delta)));
        }
        let net = &model.net;
        let width = net.config.input_width;
        let loss = optimizer_step(&mut model.params, &mut optimizer, |tape| {
            let mut total = None;
            for (n, x, adjacency, target) in &batch {
                let xv = tape.input(*n, width, x.clone())?;
                let pred = net.forward(tape, xv, adjacency)?;
                let l = tape.mse(pred, target)?;
                total = Some(match total {
                    None => l,
                    Some(t) => tape.add(t, l)?,
                });
            }
            let total = total.expect("batch is not empty");
            Ok(tape.scale(total, 1.0 / batch.len() as f64))
        })?;
        losses.push(loss);
    }
    Ok((RolloutTrainReport { losses }, optimizer))
}
