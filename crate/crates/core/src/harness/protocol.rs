//! Repeated-seed and k-fold protocols over a pluggable trainer.

use serde::{Deserialize, Serialize};

use super::split::{stratified_folds, stratified_split};
use crate::error::{Error, Result};

/// Metrics from one run; unset fields do not apply to the task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub accuracy_v: Option<f64>,
    pub accuracy_a: Option<f64>,
    pub f1: Option<f64>,
    pub iou_v: Option<f64>,
    pub iou_a: Option<f64>,
    pub dsc_v: Option<f64>,
    pub dsc_a: Option<f64>,
    pub rmse: Option<f64>,
}

/// Column names and accessors, in report order.
pub const METRIC_COLUMNS: [&str; 8] = ["accuracy_v", "accuracy_a", "f1", "iou_v", "iou_a", "dsc_v", "dsc_a", "rmse"];

impl RunMetrics {
    pub fn values(&self) -> [Option<f64>; 8] {
        [self.accuracy_v, self.accuracy_a, self.f1, self.iou_v, self.iou_a, self.dsc_v, self.dsc_a, self.rmse]
    }

    pub fn from_values(v: [Option<f64>; 8]) -> Self {
        Self { accuracy_v: v[0], accuracy_a: v[1], f1: v[2], iou_v: v[3], iou_a: v[4], dsc_v: v[5], dsc_a: v[6], rmse: v[7] }
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt(), count: values.len() })
    }
}

/// Aggregate over runs or folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub protocol: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunMetrics>,
    /// `(run index, reason)` for runs that aborted.
    pub failures: Vec<(usize, String)>,
    pub summary: [Option<Summary>; 8],
}

impl MetricReport {
    pub fn new(label: &str, protocol: &str, seeds: Vec<u64>, outcomes: Vec<Result<RunMetrics>>) -> Self {
        let mut runs = Vec::new();
        let mut failures = Vec::new();
        for (i, o) in outcomes.into_iter().enumerate() {
            match o {
                Ok(m) => runs.push(m),
                Err(e) => failures.push((i, e.to_string())),
            }
        }
        let summary = std::array::from_fn(|c| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.values()[c]).collect();
            Summary::of(&vals)
        });
        Self { label: label.to_string(), protocol: protocol.to_string(), seeds, runs, failures, summary }
    }

    /// Some runs aborted; statistics cover the survivors.
    pub fn partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn get(&self, column: &str) -> Option<Summary> {
        METRIC_COLUMNS.iter().position(|c| *c == column).and_then(|i| self.summary[i])
    }
}

/// One training and evaluation on the given object indices.
pub trait Trainer: Sync {
    fn labels(&self) -> Vec<u8>;
    fn run(&self, train: &[usize], test: &[usize], seed: u64) -> Result<RunMetrics>;
}

/// `f(i)` for every `i < count`, on up to `threads` scoped threads; results in index order.
pub fn fan_out<T: Send>(count: usize, threads: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let threads = threads.clamp(1, count.max(1));
    if threads == 1 {
        return (0..count).map(&f).collect();
    }
    let mut slots: Vec<Option<T>> = (0..count).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = slots.chunks_mut(count.div_ceil(threads)).enumerate().collect();
        for (c, chunk) in chunks {
            let f = &f;
            let base = c * count.div_ceil(threads);
            s.spawn(move || {
                for (k, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + k));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("every slot filled")).collect()
}

/// Independent runs, each on a fresh stratified 80/20 split drawn from its seed.
pub fn run_repeated(trainer: &dyn Trainer, label: &str, seeds: &[u64], threads: usize) -> Result<MetricReport> {
    let labels = trainer.labels();
    let splits: Vec<(Vec<usize>, Vec<usize>)> =
        seeds.iter().map(|&s| stratified_split(&labels, 0.2, s)).collect::<Result<_>>()?;
    let outcomes = fan_out(seeds.len(), threads, |i| trainer.run(&splits[i].0, &splits[i].1, seeds[i]));
    Ok(MetricReport::new(label, "repeated", seeds.to_vec(), outcomes))
}

/// Stratified k-fold cross-validation; fold `f` trains with seed `seed + f`.
pub fn run_kfold(trainer: &dyn Trainer, label: &str, folds: usize, seed: u64, threads: usize) -> Result<MetricReport> {
    let labels = trainer.labels();
    let parts = stratified_folds(&labels, folds, seed)?;
    let seeds: Vec<u64> = (0..folds as u64).map(|f| seed.wrapping_add(f)).collect();
    let outcomes = fan_out(folds, threads, |f| {
        let train: Vec<usize> = parts.iter().enumerate().filter(|(g, _)| *g != f).flat_map(|(_, p)| p.iter().copied()).collect();
        let mut train = train;
        train.sort_unstable();
        trainer.run(&train, &parts[f], seeds[f])
    });
    Ok(MetricReport::new(label, "kfold", seeds, outcomes))
}

/// Report with every run failed is an error rather than an empty table.
pub fn require_runs(report: MetricReport) -> Result<MetricReport> {
    if report.runs.is_empty() {
        let reason = report.failures.first().map_or("no runs".to_string(), |f| f.1.clone());
        return Err(Error::Aborted { step: 0, reason: format!("every run failed: {reason}") });
    }
    Ok(report)
}
