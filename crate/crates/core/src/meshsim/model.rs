//! Encode-process-decode graph transformer.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{Activation, Linear, Mlp, ParamId, ParamStore, Real, Tape, Tensor, Var, RMSNORM_EPS};

use super::graph::Adjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeClass {
    S,
    L,
}

impl SizeClass {
    /// `(latent width, blocks, heads)`.
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            SizeClass::S => (64, 4, 4),
            SizeClass::L => (128, 8, 8),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SizeClass::S => "S",
            SizeClass::L => "L",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SizeClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(SizeClass::S),
            "L" | "l" => Ok(SizeClass::L),
            _ => Err(Error::invalid_argument(format!("unknown size class {s:?} (expected S or L)"))),
        }
    }
}

/// How the adjacency enters the attention scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaskMode {
    /// Non-neighbors get a score of −∞, hence exactly zero weight.
    #[default]
    Additive,
    /// Scores multiplied by A elementwise, then an unmasked softmax.
    Product,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::Additive => "additive",
            MaskMode::Product => "product",
        }
    }
}

impl FromStr for MaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(MaskMode::Additive),
            "product" => Ok(MaskMode::Product),
            _ => Err(Error::invalid_argument(format!("unknown mask mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateConfig {
    pub size: SizeClass,
    pub latent: usize,
    pub blocks: usize,
    pub heads: usize,
    pub input_width: usize,
    pub output_width: usize,
    pub mask_mode: MaskMode,
}

impl SurrogateConfig {
    pub fn new(size: SizeClass, input_width: usize, output_width: usize) -> Self {
        let (latent, blocks, heads) = size.dims();
        Self { size, latent, blocks, heads, input_width, output_width, mask_mode: MaskMode::Additive }
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.latent % self.heads != 0 {
            return Err(Error::invalid_argument(format!(
                "latent width {} is not divisible by {} heads",
                self.latent, self.heads
            )));
        }
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::invalid_argument("surrogate needs positive input and output widths"));
        }
        Ok(())
    }
}

/// Multi-head self-attention restricted by an adjacency mask.
#[derive(Debug, Clone)]
pub struct MaskedAttention {
    q: ParamId,
    k: ParamId,
    v: ParamId,
    out: Linear,
    heads: usize,
    mode: MaskMode,
}

impl MaskedAttention {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d: usize, heads: usize, mode: MaskMode, seed: u64) -> Result<Self> {
        if heads == 0 || d % heads != 0 {
            return Err(Error::invalid_argument(format!("latent width {d} is not divisible by {heads} heads")));
        }
        Ok(Self {
            q: store.add_glorot(&format!("{name}.q"), d, d, seed)?,
            k: store.add_glorot(&format!("{name}.k"), d, d, seed)?,
            v: store.add_glorot(&format!("{name}.v"), d, d, seed)?,
            out: Linear::new(store, &format!("{name}.out"), d, d, seed)?,
            heads,
            mode,
        })
    }

    /// Attention output plus the per-head `N×N` weight matrices.
    pub fn forward_with_weights<T: Real>(&self, tape: &mut Tape<'_, T>, z: Var, a: &Adjacency) -> Result<(Var, Vec<Var>)> {
        let (n, d) = tape.shape(z);
        if a.node_count() != n {
            return Err(Error::invalid_argument(format!("adjacency for {} nodes, input has {n}", a.node_count())));
        }
        if let Some(i) = (0..n).find(|&i| !a.get(i, i)) {
            return Err(Error::invalid_data(format!("node {i} has no self-loop")));
        }
        let dh = d / self.heads;
        let (wq, wk, wv) = (tape.param(self.q), tape.param(self.k), tape.param(self.v));
        let q = tape.matmul(z, wq)?;
        let k = tape.matmul(z, wk)?;
        let v = tape.matmul(z, wv)?;
        let scale = 1.0 / (dh as f64).sqrt();
        let product_mask = match self.mode {
            MaskMode::Additive => None,
            MaskMode::Product => {
                let values = a.bits().iter().map(|&b| if b { T::one() } else { T::zero() }).collect();
                Some(tape.constant(&Tensor::matrix(n, n, values)?))
            }
        };
        let all = vec![true; n * n];
        let mut outs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let raw = tape.matmul_nt(qh, kh)?;
            let scores = tape.scale(raw, scale);
            let w = match product_mask {
                None => tape.masked_softmax(scores, a.bits())?,
                Some(m) => {
                    let masked = tape.mul(scores, m)?;
                    tape.masked_softmax(masked, &all)?
                }
            };
            weights.push(w);
            outs.push(tape.matmul(w, vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs)? };
        Ok((self.out.forward(tape, joined)?, weights))
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, z: Var, a: &Adjacency) -> Result<Var> {
        Ok(self.forward_with_weights(tape, z, a)?.0)
    }
}

/// `W_f(GeLU(W_l z + b_l) ⊙ (W_r z + b_r)) + b_f` with hidden width 4d.
#[derive(Debug, Clone)]
pub struct GatedMlp {
    pub left: Linear,
    pub right: Linear,
    pub output: Linear,
}

impl GatedMlp {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d: usize, hidden: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            left: Linear::new(store, &format!("{name}.left"), d, hidden, seed)?,
            right: Linear::new(store, &format!("{name}.right"), d, hidden, seed)?,
            output: Linear::new(store, &format!("{name}.output"), hidden, d, seed)?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, z: Var) -> Result<Var> {
        let l = self.left.forward(tape, z)?;
        let l = tape.gelu(l);
        let r = self.right.forward(tape, z)?;
        let gated = tape.mul(l, r)?;
        self.output.forward(tape, gated)
    }
}

/// `z ← rms(z + attention(z))`, then `z ← rms(z + mlp(z))`.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub attention: MaskedAttention,
    pub mlp: GatedMlp,
    pub norm1: ParamId,
    pub norm2: ParamId,
}

impl TransformerBlock {
    pub fn new<T: Real>(store: &mut ParamStore<T>, name: &str, d: usize, heads: usize, mode: MaskMode, seed: u64) -> Result<Self> {
        Ok(Self {
            attention: MaskedAttention::new(store, &format!("{name}.attention"), d, heads, mode, seed)?,
            mlp: GatedMlp::new(store, &format!("{name}.mlp"), d, 4 * d, seed)?,
            norm1: store.add(format!("{name}.norm1.gain"), Tensor::filled(vec![1, d], T::one()))?,
            norm2: store.add(format!("{name}.norm2.gain"), Tensor::filled(vec![1, d], T::one()))?,
        })
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, z: Var, a: &Adjacency) -> Result<Var> {
        let att = self.attention.forward(tape, z, a)?;
        let sum = tape.add(z, att)?;
        let g1 = tape.param(self.norm1);
        let z = tape.rmsnorm(sum, g1, RMSNORM_EPS)?;
        let m = self.mlp.forward(tape, z)?;
        let sum = tape.add(z, m)?;
        let g2 = tape.param(self.norm2);
        tape.rmsnorm(sum, g2, RMSNORM_EPS)
    }
}

/// Full surrogate: node inputs to per-node field deltas.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub config: SurrogateConfig,
    pub encoder: Mlp,
    pub blocks: Vec<TransformerBlock>,
    pub decoder: Mlp,
}

impl Surrogate {
    pub fn build<T: Real>(config: &SurrogateConfig, store: &mut ParamStore<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.latent;
        let encoder = Mlp::new(store, "encoder", config.input_width, &[d, d], Activation::Gelu, false, seed)?;
        let blocks = (0..config.blocks)
            .map(|i| TransformerBlock::new(store, &format!("block{i}"), d, config.heads, config.mask_mode, seed))
            .collect::<Result<_>>()?;
        let decoder = Mlp::new(store, "decoder", d, &[d, config.output_width], Activation::Gelu, false, seed)?;
        Ok(Self { config: config.clone(), encoder, blocks, decoder })
    }

    pub fn param_count(config: &SurrogateConfig) -> usize {
        let d = config.latent;
        let block = 3 * d * d + Linear::param_count(d, d) + 2 * Linear::param_count(d, 4 * d) + Linear::param_count(4 * d, d) + 2 * d;
        Mlp::param_count(config.input_width, &[d, d]) + config.blocks * block + Mlp::param_count(d, &[d, config.output_width])
    }

    pub fn encode<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        let (_, p) = tape.shape(x);
        if p != self.config.input_width {
            return Err(Error::invalid_argument(format!(
                "node inputs have {p} columns, model expects {}",
                self.config.input_width
            )));
        }
        self.encoder.forward(tape, x)
    }

    pub fn decode<T: Real>(&self, tape: &mut Tape<'_, T>, z: Var) -> Result<Var> {
        let (_, d) = tape.shape(z);
        if d != self.config.latent {
            return Err(Error::invalid_argument(format!("latent has {d} columns, model expects {}", self.config.latent)));
        }
        self.decoder.forward(tape, z)
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var, a: &Adjacency) -> Result<Var> {
        let mut z = self.encode(tape, x)?;
        for block in &self.blocks {
            z = block.forward(tape, z, a)?;
        }
        self.decode(tape, z)
    }
}
