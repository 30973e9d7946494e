use crate::error::Result;
use crate::nn::{ParamId, ParamStore, Real, Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply<T: Real>(self, tape: &mut Tape<'_, T>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Gelu => tape.gelu(x),
        }
    }
}

/// Affine layer with `name.weight` (`in×out`) and `name.bias` (`out`).
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, fan_in: usize, fan_out: usize, seed: u64) -> Result<Self> {
        let weight = store.add_glorot(&format!("{name}.weight"), fan_in, fan_out, seed)?;
        let bias = store.add_filled(&format!("{name}.bias"), fan_out, 0.0)?;
        Ok(Self { weight, bias, fan_in, fan_out })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.linear(x, w, Some(b))
    }

    pub fn param_count(fan_in: usize, fan_out: usize) -> usize {
        fan_in * fan_out + fan_out
    }
}

/// Stack of linear layers with an activation between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activation: Activation,
    /// Apply the activation after the final layer too.
    pub activate_last: bool,
}

impl Mlp {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        widths: &[usize],
        activation: Activation,
        activate_last: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{prefix}.{i}"), fan_in, w, seed)?);
            fan_in = w;
        }
        Ok(Self { layers, activation, activate_last })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(tape, x)?;
            if i < last || self.activate_last {
                x = self.activation.apply(tape, x);
            }
        }
        Ok(x)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn param_count(input: usize, widths: &[usize]) -> usize {
        let mut fan_in = input;
        let mut total = 0;
        for &w in widths {
            total += Linear::param_count(fan_in, w);
            fan_in = w;
        }
        total
    }
}
