//! Trainers for the classification, segmentation and rollout benchmarks.

use super::metrics::{metrics_classification, metrics_segmentation, metrics_segmentation_macro};
use super::protocol::{fan_out, MetricReport, RunMetrics, Trainer};
use crate::cloudmodels::{train, CloudModel, CloudModelConfig, PreparedCloud, Task, TrainConfig};
use crate::error::{Error, Result};
use crate::featurestore::LabeledCloud;
use crate::meshsim::{pooled_rmse, rollout, synth_mesh, train_rollout, MeshGraphSequence, MeshSynthSpec, RolloutModel, RolloutTrainConfig};

/// Trains a point-cloud model on the train indices and scores the test indices.
pub struct CloudTrainer {
    pub data: Vec<LabeledCloud>,
    pub model: CloudModelConfig,
    pub train: TrainConfig,
    /// Pool segmentation metrics per object instead of over all points.
    pub macro_average: bool,
}

impl CloudTrainer {
    pub fn new(data: Vec<LabeledCloud>, model: CloudModelConfig, train: TrainConfig) -> Self {
        Self { data, model, train, macro_average: false }
    }

    /// Trained model and its test-set metrics.
    pub fn fit(&self, train_idx: &[usize], test_idx: &[usize], seed: u64) -> Result<(CloudModel, RunMetrics)> {
        let mut model = CloudModel::new(&self.model, seed)?;
        let prepare = |idx: &[usize]| -> Result<Vec<PreparedCloud>> {
            idx.iter().map(|&i| model.prepare(&self.data[i])).collect()
        };
        let train_set = prepare(train_idx)?;
        let test_set = prepare(test_idx)?;
        train(&mut model, &train_set, &self.train, seed)?;
        let predictions = model.predict_all(&test_set, 1)?;
        let metrics = match self.model.task {
            Task::Classify => {
                let pred: Vec<u8> = predictions.iter().map(|p| p[0]).collect();
                let target: Vec<u8> = test_set.iter().map(|o| o.label.unwrap_or(0)).collect();
                let m = metrics_classification(&pred, &target)?;
                RunMetrics { accuracy_v: m.accuracy_v, accuracy_a: m.accuracy_a, f1: Some(m.f1), ..Default::default() }
            }
            Task::Segment => {
                let pairs = predictions
                    .iter()
                    .zip(&test_set)
                    .map(|(p, o)| {
                        let t = o.point_labels.as_deref().ok_or_else(|| Error::invalid_data("object has no point labels"))?;
                        Ok((p.as_slice(), t))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let m = if self.macro_average { metrics_segmentation_macro(&pairs)? } else { metrics_segmentation(&pairs)? };
                RunMetrics { iou_v: m.iou[0], iou_a: m.iou[1], dsc_v: m.dsc[0], dsc_a: m.dsc[1], ..Default::default() }
            }
        };
        Ok((model, metrics))
    }
}

impl Trainer for CloudTrainer {
    fn labels(&self) -> Vec<u8> {
        self.data.iter().map(|o| o.object_label.unwrap_or(0)).collect()
    }

    fn run(&self, train: &[usize], test: &[usize], seed: u64) -> Result<RunMetrics> {
        self.fit(train, test, seed).map(|(_, m)| m)
    }
}

/// Synthetic diffusion benchmark: per seed, fresh training and test sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBenchmark {
    pub nodes: usize,
    pub steps: usize,
    pub diffusivity: f64,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub with_features: bool,
    pub config: RolloutTrainConfig,
}

impl Default for RolloutBenchmark {
    fn default() -> Self {
        Self {
            nodes: 100,
            steps: 10,
            diffusivity: 0.03,
            train_sequences: 8,
            test_sequences: 4,
            with_features: true,
            config: RolloutTrainConfig::default(),
        }
    }
}

/// One seed of the rollout benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutOutcome {
    pub seed: u64,
    pub initial_rmse: f64,
    pub rmse: f64,
}

impl RolloutBenchmark {
    /// Training and test sequences for `seed`; the same graphs and fields
    /// whether or not features are kept.
    pub fn data(&self, seed: u64) -> Result<(Vec<MeshGraphSequence>, Vec<MeshGraphSequence>)> {
        let make = |offset: u64, count: usize| -> Result<Vec<MeshGraphSequence>> {
            (0..count as u64)
                .map(|i| {
                    let s = synth_mesh(&MeshSynthSpec::new(self.nodes, self.steps, self.diffusivity, seed * 1000 + offset + i))?;
                    Ok(if self.with_features { s } else { s.without_features() })
                })
                .collect()
        };
        Ok((make(0, self.train_sequences)?, make(500, self.test_sequences)?))
    }

    pub fn fit(&self, seed: u64) -> Result<(RolloutModel, RolloutOutcome)> {
        let (train, test) = self.data(seed)?;
        let mut model = RolloutModel::for_data(&train, &self.config, seed)?;
        let score = |m: &RolloutModel| -> Result<f64> {
            let records = test.iter().map(|s| rollout(m, s, self.steps)).collect::<Result<Vec<_>>>()?;
            Ok(pooled_rmse(&records))
        };
        let initial_rmse = score(&model)?;
        train_rollout(&mut model, &train, &self.config)?;
        let rmse = score(&model)?;
        Ok((model, RolloutOutcome { seed, initial_rmse, rmse }))
    }

    /// All seeds, summarized as an RMSE report alongside the per-seed outcomes.
    pub fn run(&self, label: &str, seeds: &[u64], threads: usize) -> (MetricReport, Vec<RolloutOutcome>) {
        let results = fan_out(seeds.len(), threads, |i| self.fit(seeds[i]).map(|(_, o)| o));
        let outcomes: Vec<RolloutOutcome> = results.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let runs = results
            .into_iter()
            .map(|r| r.map(|o| RunMetrics { rmse: Some(o.rmse), ..Default::default() }))
            .collect();
        (MetricReport::new(label, "repeated", seeds.to_vec(), runs), outcomes)
    }
}
