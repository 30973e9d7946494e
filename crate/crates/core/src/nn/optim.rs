//! AdamW with decoupled weight decay and a cosine schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamStore, Real, Tape, Tensor, Var};

/// `min + (max − min) · ½ · (1 + cos(π · step / total))`; `step` is clamped to `total`.
pub fn cosine_schedule(step: u64, total: u64, max: f64, min: f64) -> f64 {
    if total == 0 {
        return min;
    }
    let frac = step.min(total) as f64 / total as f64;
    min + (max - min) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Which coefficient the cosine schedule drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    /// Weight decay follows the cosine from its max to its min; learning rate is constant.
    #[default]
    CosineWeightDecay,
    /// Learning rate follows the cosine down to zero; weight decay stays at its max.
    CosineLearningRate,
}

impl ScheduleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleMode::CosineWeightDecay => "cosine-weight-decay",
            ScheduleMode::CosineLearningRate => "cosine-learning-rate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cosine-weight-decay" => Ok(Self::CosineWeightDecay),
            "cosine-learning-rate" => Ok(Self::CosineLearningRate),
            other => Err(Error::invalid_argument(format!("unknown schedule mode {other:?}"))),
        }
    }

    fn code(self) -> f64 {
        match self {
            ScheduleMode::CosineWeightDecay => 0.0,
            ScheduleMode::CosineLearningRate => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay_max: f64,
    pub weight_decay_min: f64,
    pub total_steps: u64,
    pub mode: ScheduleMode,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay_max: 0.01,
            weight_decay_min: 0.0,
            total_steps: 1,
            mode: ScheduleMode::CosineWeightDecay,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    first_moment: Vec<Tensor<T>>,
    second_moment: Vec<Tensor<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        Self { config, step: 0, first_moment: zeros(), second_moment: zeros() }
    }

    /// Number of updates applied so far (the schedule position).
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        match self.config.mode {
            ScheduleMode::CosineWeightDecay => self.config.learning_rate,
            ScheduleMode::CosineLearningRate => {
                cosine_schedule(self.step, self.config.total_steps, self.config.learning_rate, 0.0)
            }
        }
    }

    pub fn weight_decay(&self) -> f64 {
        match self.config.mode {
            ScheduleMode::CosineWeightDecay => cosine_schedule(
                self.step,
                self.config.total_steps,
                self.config.weight_decay_max,
                self.config.weight_decay_min,
            ),
            ScheduleMode::CosineLearningRate => self.config.weight_decay_max,
        }
    }

    /// One update from the gradients currently stored in `store`.
    pub fn step(&mut self, store: &mut ParamStore<T>) {
        let lr = self.learning_rate();
        let decay = T::from_f64(1.0 - lr * self.weight_decay());
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bc1 = T::from_f64(1.0 - c.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (lr, eps) = (T::from_f64(lr), T::from_f64(c.eps));
        for ((p, m), v) in store.iter_mut().zip(&mut self.first_moment).zip(&mut self.second_moment) {
            let grad = p.grad.data();
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *w *= decay;
                *m = b1 * *m + (T::one() - b1) * *g;
                *v = b2 * *v + (T::one() - b2) * *g * *g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }

    pub(crate) fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Scalars needed to resume: step, total, lr, betas, eps, decay bounds, mode.
    pub(crate) fn state_vector(&self) -> Vec<f64> {
        let c = &self.config;
        vec![
            self.step as f64,
            c.total_steps as f64,
            c.learning_rate,
            c.beta1,
            c.beta2,
            c.eps,
            c.weight_decay_max,
            c.weight_decay_min,
            c.mode.code(),
        ]
    }

    pub(crate) fn from_parts(state: &[f64], first: Vec<Tensor<T>>, second: Vec<Tensor<T>>) -> Result<Self> {
        if state.len() != 9 {
            return Err(Error::invalid_data("optimizer state record has wrong length"));
        }
        let mode = if state[8] == 0.0 { ScheduleMode::CosineWeightDecay } else { ScheduleMode::CosineLearningRate };
        Ok(Self {
            config: AdamWConfig {
                learning_rate: state[2],
                beta1: state[3],
                beta2: state[4],
                eps: state[5],
                weight_decay_max: state[6],
                weight_decay_min: state[7],
                total_steps: state[1] as u64,
                mode,
            },
            step: state[0] as u64,
            first_moment: first,
            second_moment: second,
        })
    }
}

/// One optimizer update from the loss built by `loss`; returns the loss value.
pub fn optimizer_step<F>(params: &mut ParamStore<f32>, optimizer: &mut AdamW<f32>, loss: F) -> Result<f64>
where
    F: FnOnce(&mut Tape<'_, f32>) -> Result<Var>,
{
    let (value, grads) = {
        let mut tape = Tape::new(params);
        let out = loss(&mut tape)?;
        let value = tape.scalar(out) as f64;
        if !value.is_finite() {
            return Err(Error::Aborted {
                step: optimizer.step_count() as usize,
                reason: "training loss became non-finite".into(),
            });
        }
        (value, tape.backward(out)?)
    };
    params.zero_grads();
    params.accumulate(&grads, 1.0);
    optimizer.step(params);
    Ok(value)
}
