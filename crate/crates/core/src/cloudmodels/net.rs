//! Network definitions. Parameters live in a separate store so the same
//! network runs in f32 for training and in f64 for gradient checks.

use rand::Rng;

use crate::error::Result;
use crate::nn::{Activation, Groups, Mlp, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::rng;

use super::config::{Architecture, CloudModelConfig, Task};
use super::input::Batch;

/// Linear layer over the concatenation of several input blocks. Each row
/// block of the weight is drawn on its own stream with its own fan-in, so
/// the coordinate weights of a model do not depend on the width of its
/// auxiliary channel.
#[derive(Debug, Clone)]
pub(crate) struct SplitLinear {
    weight: ParamId,
    bias: ParamId,
}

impl SplitLinear {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, blocks: &[(&str, usize)], out: usize, seed: u64) -> Result<Self> {
        let rows: usize = blocks.iter().map(|b| b.1).sum();
        let mut data = Vec::with_capacity(rows * out);
        for &(block, fan_in) in blocks {
            let bound = (6.0 / (fan_in + out) as f64).sqrt();
            let mut stream = rng::stream(seed, &format!("init/{name}.weight.{block}"));
            data.extend((0..fan_in * out).map(|_| T::from_f64(stream.gen_range(-bound..=bound))));
        }
        let weight = store.add(format!("{name}.weight"), Tensor::matrix(rows, out, data)?)?;
        let bias = store.add_filled(&format!("{name}.bias"), out, 0.0)?;
        Ok(Self { weight, bias })
    }

    fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, parts: &[Var]) -> Result<Var> {
        let x = if parts.len() == 1 { parts[0] } else { tape.concat_cols(parts)? };
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        tape.linear(x, w, Some(b))
    }

    fn param_count(blocks: &[usize], out: usize) -> usize {
        blocks.iter().sum::<usize>() * out + out
    }
}

/// Shared ReLU MLP whose first layer reads several input blocks.
#[derive(Debug, Clone)]
pub(crate) struct BlockMlp {
    first: SplitLinear,
    rest: Mlp,
}

impl BlockMlp {
    fn new<T: Real>(store: &mut ParamStore<T>, name: &str, blocks: &[(&str, usize)], widths: &[usize], seed: u64) -> Result<Self> {
        let first = SplitLinear::new(store, &format!("{name}.0"), blocks, widths[0], seed)?;
        let mut rest = Mlp { layers: Vec::new(), activation: Activation::Relu, activate_last: true };
        let mut fan_in = widths[0];
        for (i, &w) in widths.iter().enumerate().skip(1) {
            rest.layers.push(crate::nn::Linear::new(store, &format!("{name}.{i}"), fan_in, w, seed)?);
            fan_in = w;
        }
        Ok(Self { first, rest })
    }

    fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, parts: &[Var]) -> Result<Var> {
        let h = self.first.forward(tape, parts)?;
        let h = tape.relu(h);
        self.rest.forward(tape, h)
    }

    fn param_count(blocks: &[usize], widths: &[usize]) -> usize {
        SplitLinear::param_count(blocks, widths[0]) + Mlp::param_count(widths[0], &widths[1..])
    }
}

/// Hidden ReLU layers followed by a linear class layer.
#[derive(Debug, Clone)]
pub(crate) struct Head {
    mlp: Mlp,
}

impl Head {
    fn new<T: Real>(store: &mut ParamStore<T>, input: usize, hidden: &[usize], classes: usize, seed: u64) -> Result<Self> {
        let mut widths = hidden.to_vec();
        widths.push(classes);
        Ok(Self { mlp: Mlp::new(store, "head", input, &widths, Activation::Relu, false, seed)? })
    }

    fn forward<T: Real>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var> {
        self.mlp.forward(tape, x)
    }

    fn param_count(input: usize, hidden: &[usize], classes: usize) -> usize {
        let mut widths = hidden.to_vec();
        widths.push(classes);
        Mlp::param_count(input, &widths)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Body {
    PointnetMod { layers: Vec<BlockMlp> },
    Pointnetpp { sa: [BlockMlp; 3], fp: Option<[BlockMlp; 3]> },
    MlpAblation { point: BlockMlp, global: Mlp },
}

/// Parameter-free description of a model; pair it with a [`ParamStore`] to run.
#[derive(Debug, Clone)]
pub struct CloudNet {
    pub config: CloudModelConfig,
    body: Body,
    head: Head,
}

fn input<T: Real>(tape: &mut Tape<'_, T>, rows: usize, cols: usize, data: &[f64]) -> Result<Var> {
    tape.input(rows, cols, data.iter().map(|&v| T::from_f64(v)).collect())
}

impl CloudNet {
    pub fn build<T: Real>(config: &CloudModelConfig, store: &mut ParamStore<T>, seed: u64) -> Result<Self> {
        config.validate()?;
        let a = config.aux_width();
        let c = config;
        let (body, head_in) = match c.architecture {
            Architecture::PointnetMod => {
                let mut layers = Vec::with_capacity(c.layers);
                let mut width = 0;
                for l in 0..c.layers {
                    let name = format!("layer{l}");
                    let layer = if l == 0 {
                        BlockMlp::new(store, &name, &[("coords", 3), ("aux", a), ("nbr_coords", 3), ("nbr_aux", a)], &c.layer_widths, seed)?
                    } else {
                        BlockMlp::new(store, &name, &[("self", width), ("nbr", width)], &c.layer_widths, seed)?
                    };
                    width = *c.layer_widths.last().expect("validated");
                    layers.push(layer);
                }
                let head_in = if c.task == Task::Segment { 2 * width } else { width };
                (Body::PointnetMod { layers }, head_in)
            }
            Architecture::Pointnetpp => {
                let w = |i: usize| *c.sa_widths[i].last().expect("validated");
                let sa = [
                    BlockMlp::new(store, "sa1", &[("rel", 3), ("aux", a)], &c.sa_widths[0], seed)?,
                    BlockMlp::new(store, "sa2", &[("rel", 3), ("feat", w(0))], &c.sa_widths[1], seed)?,
                    BlockMlp::new(store, "sa3", &[("pos", 3), ("feat", w(1))], &c.sa_widths[2], seed)?,
                ];
                if c.task == Task::Segment {
                    let f = |i: usize| *c.fp_widths[i].last().expect("validated");
                    let fp = [
                        BlockMlp::new(store, "fp1", &[("interp", w(2)), ("skip", w(1))], &c.fp_widths[0], seed)?,
                        BlockMlp::new(store, "fp2", &[("interp", f(0)), ("skip", w(0))], &c.fp_widths[1], seed)?,
                        BlockMlp::new(store, "fp3", &[("interp", f(1)), ("coords", 3), ("aux", a)], &c.fp_widths[2], seed)?,
                    ];
                    (Body::Pointnetpp { sa, fp: Some(fp) }, f(2))
                } else {
                    (Body::Pointnetpp { sa, fp: None }, w(2))
                }
            }
            Architecture::MlpAblation => {
                let point = BlockMlp::new(store, "point", &[("features", a)], &c.point_widths, seed)?;
                let pw = *c.point_widths.last().expect("validated");
                let global = Mlp::new(store, "global", pw, &c.global_widths, Activation::Relu, true, seed)?;
                (Body::MlpAblation { point, global }, *c.global_widths.last().expect("validated"))
            }
        };
        let head = Head::new(store, head_in, &c.head_widths, c.classes, seed)?;
        Ok(Self { config: config.clone(), body, head })
    }

    /// Closed-form parameter count for a configuration.
    pub fn param_count(c: &CloudModelConfig) -> usize {
        let a = c.aux_width();
        match c.architecture {
            Architecture::PointnetMod => {
                let w = *c.layer_widths.last().unwrap_or(&0);
                let first = BlockMlp::param_count(&[3, a, 3, a], &c.layer_widths);
                let later = BlockMlp::param_count(&[w, w], &c.layer_widths);
                let head_in = if c.task == Task::Segment { 2 * w } else { w };
                first + (c.layers - 1) * later + Head::param_count(head_in, &c.head_widths, c.classes)
            }
            Architecture::Pointnetpp => {
                let w = |i: usize| *c.sa_widths[i].last().unwrap_or(&0);
                let sa = BlockMlp::param_count(&[3, a], &c.sa_widths[0])
                    + BlockMlp::param_count(&[3, w(0)], &c.sa_widths[1])
                    + BlockMlp::param_count(&[3, w(1)], &c.sa_widths[2]);
                if c.task == Task::Segment {
                    let f = |i: usize| *c.fp_widths[i].last().unwrap_or(&0);
                    sa + BlockMlp::param_count(&[w(2), w(1)], &c.fp_widths[0])
                        + BlockMlp::param_count(&[f(0), w(0)], &c.fp_widths[1])
                        + BlockMlp::param_count(&[f(1), 3, a], &c.fp_widths[2])
                        + Head::param_count(f(2), &c.head_widths, c.classes)
                } else {
                    sa + Head::param_count(w(2), &c.head_widths, c.classes)
                }
            }
            Architecture::MlpAblation => {
                let pw = *c.point_widths.last().unwrap_or(&0);
                BlockMlp::param_count(&[a], &c.point_widths)
                    + Mlp::param_count(pw, &c.global_widths)
                    + Head::param_count(*c.global_widths.last().unwrap_or(&0), &c.head_widths, c.classes)
            }
        }
    }

    /// Per-point representations (rows = batch points) and the pooled
    /// per-object descriptor (rows = batch objects).
    fn encode<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &Batch) -> Result<(Option<Var>, Var)> {
        let rows = batch.rows();
        let objects = Groups::consecutive_sizes(&batch.sizes);
        match &self.body {
            Body::PointnetMod { layers } => {
                let knn = batch.knn.as_ref().ok_or_else(|| crate::Error::invalid_argument("batch lacks neighbour lists"))?;
                let coords = input(tape, rows, 3, &batch.coords)?;
                let aux = input(tape, rows, batch.aux_width, &batch.aux)?;
                let x = tape.concat_cols(&[coords, aux])?;
                let m = tape.group_max(x, knn)?;
                let mut h = layers[0].forward(tape, &[x, m])?;
                for layer in &layers[1..] {
                    let m = tape.group_max(h, knn)?;
                    h = layer.forward(tape, &[h, m])?;
                }
                let g = tape.group_max(h, &objects)?;
                Ok((Some(h), g))
            }
            Body::MlpAblation { point, .. } => {
                let feats = input(tape, rows, batch.aux_width, &batch.aux)?;
                let h = point.forward(tape, &[feats])?;
                Ok((None, tape.group_max(h, &objects)?))
            }
            Body::Pointnetpp { sa, fp } => {
                let hb = batch.hierarchy.as_ref().ok_or_else(|| crate::Error::invalid_argument("batch lacks set abstraction structure"))?;
                let aux = input(tape, rows, batch.aux_width, &batch.aux)?;
                let m1 = hb.sa1_members.len();
                let rel1 = input(tape, m1, 3, &hb.sa1_rel)?;
                let ga = tape.gather_rows(aux, hb.sa1_members.clone())?;
                let h = sa[0].forward(tape, &[rel1, ga])?;
                let l1 = tape.group_max(h, &hb.sa1_groups)?;
                let rel2 = input(tape, hb.sa2_members.len(), 3, &hb.sa2_rel)?;
                let g1 = tape.gather_rows(l1, hb.sa2_members.clone())?;
                let h = sa[1].forward(tape, &[rel2, g1])?;
                let l2 = tape.group_max(h, &hb.sa2_groups)?;
                let pos2 = input(tape, hb.l2_coords.len() / 3, 3, &hb.l2_coords)?;
                let h = sa[2].forward(tape, &[pos2, l2])?;
                let l3 = tape.group_max(h, &hb.l2_groups)?;
                let Some(fp) = fp else {
                    return Ok((None, l3));
                };
                let i2 = tape.mix_rows(l3, hb.fp1.clone())?;
                let f2 = fp[0].forward(tape, &[i2, l2])?;
                let i1 = tape.mix_rows(f2, hb.fp2.clone())?;
                let f1 = fp[1].forward(tape, &[i1, l1])?;
                let i0 = tape.mix_rows(f1, hb.fp3.clone())?;
                let coords = input(tape, rows, 3, &batch.coords)?;
                let f0 = fp[2].forward(tape, &[i0, coords, aux])?;
                Ok((Some(f0), l3))
            }
        }
    }

    /// Pooled descriptor per object, before the head.
    pub fn global_feature<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &Batch) -> Result<Var> {
        Ok(self.encode(tape, batch)?.1)
    }

    /// Object logits (classification) or point logits (segmentation).
    pub fn logits<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &Batch) -> Result<Var> {
        let (local, global) = self.encode(tape, batch)?;
        match (self.config.task, &self.body) {
            (Task::Classify, Body::MlpAblation { global: mlp, .. }) => {
                let g = mlp.forward(tape, global)?;
                self.head.forward(tape, g)
            }
            (Task::Classify, _) => self.head.forward(tape, global),
            (Task::Segment, Body::PointnetMod { .. }) => {
                let local = local.expect("per-point features");
                let owner: Vec<usize> = batch.sizes.iter().enumerate().flat_map(|(o, &n)| std::iter::repeat(o).take(n)).collect();
                let spread = tape.gather_rows(global, std::sync::Arc::new(owner))?;
                let x = tape.concat_cols(&[local, spread])?;
                self.head.forward(tape, x)
            }
            (Task::Segment, _) => self.head.forward(tape, local.expect("per-point features")),
        }
    }

    /// Mean cross-entropy against the batch's object or point labels.
    pub fn loss<T: Real>(&self, tape: &mut Tape<'_, T>, batch: &Batch) -> Result<Var> {
        let logits = self.logits(tape, batch)?;
        let targets = match self.config.task {
            Task::Classify => &batch.labels,
            Task::Segment => &batch.point_labels,
        };
        if targets.len() != tape.shape(logits).0 {
            return Err(crate::Error::invalid_data("batch lacks labels for every output row"));
        }
        tape.cross_entropy(logits, targets)
    }
}
