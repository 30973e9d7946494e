//! Minimal reverse-mode differentiation, layers, losses and optimizer.

pub mod gradcheck;
pub mod layers;
pub mod optim;
mod params;
pub mod real;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use layers::{Activation, Linear, Mlp};
pub use optim::{cosine_schedule, optimizer_step, AdamW, AdamWConfig, ScheduleMode};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tape::{gelu_grad_scalar, gelu_scalar, masked_softmax_values, Groups, Mixing, Tape, Var};
pub use tensor::Tensor;

/// Epsilon used by every RMS normalization in the models.
pub const RMSNORM_EPS: f64 = 1e-6;
