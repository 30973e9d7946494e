use crate::error::{Error, Result};

use super::MeshGraphSequence;

/// Anything that maps the current fields on a mesh to per-node field deltas.
pub trait DeltaModel {
    /// `step` is the 1-based index of the frame being predicted.
    fn predict_delta(&self, seq: &MeshGraphSequence, fields: &[f64], step: usize) -> Result<Vec<f64>>;
}

/// Predictions and targets for frames `1..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutRecord {
    pub predicted: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub step_rmse: Vec<f64>,
    /// Root of the squared error pooled over all steps, nodes and channels.
    pub rmse: f64,
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Autoregressive rollout from frame 0 of `seq`, scored against its frames.
pub fn rollout(model: &dyn DeltaModel, seq: &MeshGraphSequence, steps: usize) -> Result<RolloutRecord> {
    if steps == 0 {
        return Err(Error::invalid_argument("rollout needs at least one step"));
    }
    if steps >= seq.step_count() {
        return Err(Error::invalid_argument(format!(
            "{steps} rollout steps but the sequence has only {} frames",
            seq.step_count()
        )));
    }
    let mut current = seq.fields[0].clone();
    let mut predicted = Vec::with_capacity(steps);
    let mut step_mse = Vec::with_capacity(steps);
    for t in 1..=steps {
        let delta = model.predict_delta(seq, &current, t)?;
        if delta.len() != current.len() {
            return Err(Error::invalid_argument(format!(
                "model returned {} deltas for {} field values",
                delta.len(),
                current.len()
            )));
        }
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Aborted { step: t, reason: "non-finite prediction during rollout".into() });
        }
        current.iter_mut().zip(&delta).for_each(|(c, d)| *c += d);
        step_mse.push(mse(&current, &seq.fields[t]));
        predicted.push(current.clone());
    }
    let rmse = (step_mse.iter().sum::<f64>() / steps as f64).sqrt();
    Ok(RolloutRecord {
        predicted,
        targets: seq.fields[1..=steps].to_vec(),
        step_rmse: step_mse.iter().map(|m| m.sqrt()).collect(),
        rmse,
    })
}

/// Predicts no change at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDelta;

impl DeltaModel for ZeroDelta {
    fn predict_delta(&self, _seq: &MeshGraphSequence, fields: &[f64], _step: usize) -> Result<Vec<f64>> {
        Ok(vec![0.0; fields.len()])
    }
}

/// Pooled RMSE over several rollouts.
pub fn pooled_rmse(records: &[RolloutRecord]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for r in records {
        for (p, t) in r.predicted.iter().zip(&r.targets) {
            sum += p.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            count += p.len();
        }
    }
    (sum / count.max(1) as f64).sqrt()
}
