//! Reverse-mode differentiation over row-major matrices.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are read
//! in place from a borrowed [`ParamStore`]; [`Tape::backward`] returns their
//! gradients as a separate [`Gradients`] value so the store can be updated
//! once the tape is dropped.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::real::gemm;
use crate::nn::{Gradients, ParamId, ParamStore, Real, Tensor};

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Row index lists in compressed form: group `g` is `indices[offsets[g]..offsets[g+1]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl Groups {
    pub fn from_lists<L: AsRef<[usize]>>(lists: &[L]) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        let mut indices = Vec::new();
        offsets.push(0);
        for l in lists {
            indices.extend_from_slice(l.as_ref());
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    /// `count` consecutive groups of `size` rows each.
    pub fn consecutive(count: usize, size: usize) -> Self {
        Self {
            offsets: (0..=count).map(|g| g * size).collect(),
            indices: (0..count * size).collect(),
        }
    }

    /// Consecutive groups with the given sizes.
    pub fn consecutive_sizes(sizes: &[usize]) -> Self {
        let mut offsets = vec![0];
        for s in sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        let total = *offsets.last().unwrap();
        Self { offsets, indices: (0..total).collect() }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn group(&self, g: usize) -> &[usize] {
        &self.indices[self.offsets[g]..self.offsets[g + 1]]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Fixed linear combinations of rows: output row `i` is `Σ weights[k] · row[indices[k]]`
/// over the entries of group `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixing {
    pub groups: Groups,
    pub weights: Vec<f64>,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    Linear { x: Var, w: Var, b: Option<Var> },
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Gelu(Var),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize },
    GatherRows { x: Var, idx: Arc<Vec<usize>> },
    GroupMax { x: Var, argmax: Vec<usize> },
    MixRows { x: Var, mixing: Arc<Mixing> },
    MaskedSoftmax(Var),
    RmsNorm { x: Var, gain: Var, inv_rms: Vec<T> },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    Mse { pred: Var, diff: Vec<T> },
    WeightedSum { x: Var, weights: Vec<T> },
}

struct Node<T> {
    rows: usize,
    cols: usize,
    value: Vec<T>,
    op: Op<T>,
}

pub struct Tape<'p, T: Real> {
    store: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
    param_nodes: HashMap<ParamId, Var>,
    grads: Vec<Option<Vec<T>>>,
}

fn shape_err(what: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::invalid_argument(format!("{what}: incompatible shapes {}x{} and {}x{}", a.0, a.1, b.0, b.1))
}

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact GeLU, `x · Φ(x)`.
pub fn gelu_scalar(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2))
}

/// Derivative of [`gelu_scalar`]: `Φ(x) + x · φ(x)`.
pub fn gelu_grad_scalar(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * INV_SQRT_2)) + x * INV_SQRT_2PI * (-0.5 * x * x).exp()
}

impl<'p, T: Real> Tape<'p, T> {
    pub fn new(store: &'p ParamStore<T>) -> Self {
        Self { store, nodes: Vec::new(), param_nodes: HashMap::new(), grads: Vec::new() }
    }

    pub fn store(&self) -> &'p ParamStore<T> {
        self.store
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<T>, op: Op<T>) -> Var {
        debug_assert!(matches!(op, Op::Param(_)) || value.len() == rows * cols);
        self.nodes.push(Node { rows, cols, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[T] {
        match self.nodes[v.0].op {
            Op::Param(id) => self.store.get(id).value.data(),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        let (r, c) = self.shape(v);
        Tensor::matrix(r, c, self.value(v).to_vec()).expect("node shape is consistent")
    }

    /// Scalar value of a `1×1` node.
    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[0]
    }

    /// Gradient of the last backward pass with respect to `v`, if it was reached.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn input(&mut self, rows: usize, cols: usize, data: Vec<T>) -> Result<Var> {
        if data.len() != rows * cols {
            return Err(Error::invalid_argument(format!(
                "input of {} values cannot be {rows}x{cols}",
                data.len()
            )));
        }
        Ok(self.push(rows, cols, data, Op::Leaf))
    }

    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.rows(), t.cols(), t.data().to_vec(), Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let t = &self.store.get(id).value;
        let v = self.push(t.rows(), t.cols(), Vec::new(), Op::Param(id));
        self.param_nodes.insert(id, v);
        v
    }

    /// `x · W + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, k) = self.shape(x);
        let (k2, m) = self.shape(w);
        if k != k2 {
            return Err(shape_err("linear", (n, k), (k2, m)));
        }
        if let Some(b) = b {
            let (br, bc) = self.shape(b);
            if br != 1 || bc != m {
                return Err(shape_err("linear bias", (k2, m), (br, bc)));
            }
        }
        let mut out = vec![T::zero(); n * m];
        if let Some(b) = b {
            let bias = self.value(b);
            for row in out.chunks_exact_mut(m) {
                row.copy_from_slice(bias);
            }
        }
        gemm(n, k, m, self.value(x), false, self.value(w), false, &mut out, b.is_some());
        Ok(self.push(n, m, out, Op::Linear { x, w, b }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (k2, m) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", (n, k), (k2, m)));
        }
        let mut out = vec![T::zero(); n * m];
        gemm(n, k, m, self.value(a), false, self.value(b), false, &mut out, false);
        Ok(self.push(n, m, out, Op::MatMul(a, b)))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.shape(a);
        let (m, k2) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul_nt", (n, k), (m, k2)));
        }
        let mut out = vec![T::zero(); n * m];
        gemm(n, k, m, self.value(a), false, self.value(b), true, &mut out, false);
        Ok(self.push(n, m, out, Op::MatMulNT(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    /// Adds a `1×c` row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(row) != (1, c) {
            return Err(shape_err("add_row", (r, c), self.shape(row)));
        }
        let bias = self.value(row);
        let mut out = self.value(x).to_vec();
        for chunk in out.chunks_exact_mut(c.max(1)) {
            for (o, b) in chunk.iter_mut().zip(bias) {
                *o += *b;
            }
        }
        Ok(self.push(r, c, out, Op::AddRow(x, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("mul", self.shape(a), self.shape(b)));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let (r, c) = self.shape(a);
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let s = T::from_f64(s);
        let out = self.value(a).iter().map(|x| *x * s).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Relu(a))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| T::from_f64(gelu_scalar(x.as_f64()))).collect();
        let (r, c) = self.shape(a);
        self.push(r, c, out, Op::Gelu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.shape(p).0,
            None => return Err(Error::invalid_argument("concat of zero parts")),
        };
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::invalid_argument("concat_cols: row counts differ"));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        Ok(self.push(rows, cols, out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(Error::invalid_argument(format!("column slice {start}+{len} exceeds {c}")));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(r * len);
        for row in src.chunks_exact(c.max(1)).take(r) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.push(r, len, out, Op::SliceCols { x, start }))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(Error::invalid_argument(format!("row index {bad} out of range for {r} rows")));
        }
        let src = self.value(x);
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx.iter() {
            out.extend_from_slice(&src[i * c..(i + 1) * c]);
        }
        Ok(self.push(idx.len(), c, out, Op::GatherRows { x, idx }))
    }

    /// Per-group, per-column maximum over the listed rows. Gradients go to
    /// the lowest-index row attaining the maximum.
    pub fn group_max(&mut self, x: Var, groups: &Groups) -> Result<Var> {
        let (r, c) = self.shape(x);
        let g = groups.len();
        let src = self.value(x);
        let mut out = vec![T::zero(); g * c];
        let mut argmax = vec![0usize; g * c];
        for gi in 0..g {
            let members = groups.group(gi);
            let Some(&first) = members.first() else {
                return Err(Error::invalid_argument(format!("group {gi} is empty")));
            };
            if let Some(&bad) = members.iter().find(|&&i| i >= r) {
                return Err(Error::invalid_argument(format!("row index {bad} out of range for {r} rows")));
            }
            let orow = &mut out[gi * c..(gi + 1) * c];
            let arow = &mut argmax[gi * c..(gi + 1) * c];
            orow.copy_from_slice(&src[first * c..(first + 1) * c]);
            arow.iter_mut().for_each(|a| *a = first);
            for &m in &members[1..] {
                let row = &src[m * c..(m + 1) * c];
                for ((o, a), &v) in orow.iter_mut().zip(arow.iter_mut()).zip(row) {
                    if v > *o || (v == *o && m < *a) {
                        *o = v;
                        *a = m;
                    }
                }
            }
        }
        Ok(self.push(g, c, out, Op::GroupMax { x, argmax }))
    }

    pub fn mix_rows(&mut self, x: Var, mixing: Arc<Mixing>) -> Result<Var> {
        let (r, c) = self.shape(x);
        if mixing.weights.len() != mixing.groups.indices().len() {
            return Err(Error::invalid_argument("mixing weights do not match indices"));
        }
        if let Some(&bad) = mixing.groups.indices().iter().find(|&&i| i >= r) {
            return Err(Error::invalid_argument(format!("row index {bad} out of range for {r} rows")));
        }
        let src = self.value(x);
        let g = mixing.groups.len();
        let mut out = vec![T::zero(); g * c];
        for gi in 0..g {
            let start = mixing.groups.offsets[gi];
            for (k, &i) in mixing.groups.group(gi).iter().enumerate() {
                let w = T::from_f64(mixing.weights[start + k]);
                for j in 0..c {
                    out[gi * c + j] += w * src[i * c + j];
                }
            }
        }
        Ok(self.push(g, c, out, Op::MixRows { x, mixing }))
    }

    /// Row-wise softmax restricted to entries where `mask` is true; masked
    /// entries are exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if mask.len() != r * c {
            return Err(Error::invalid_argument(format!(
                "mask of {} entries for {r}x{c} scores",
                mask.len()
            )));
        }
        let out = masked_softmax_values(self.value(x), mask, r, c)?;
        Ok(self.push(r, c, out, Op::MaskedSoftmax(x)))
    }

    /// `x / sqrt(mean(x²) + eps) · gain`, per row.
    pub fn rmsnorm(&mut self, x: Var, gain: Var, eps: f64) -> Result<Var> {
        let (r, c) = self.shape(x);
        if c == 0 {
            return Err(Error::invalid_argument("rmsnorm over zero columns"));
        }
        if self.shape(gain) != (1, c) {
            return Err(shape_err("rmsnorm gain", (r, c), self.shape(gain)));
        }
        let src = self.value(x);
        let g = self.value(gain);
        let eps = T::from_f64(eps);
        let n = T::from_f64(c as f64);
        let mut out = Vec::with_capacity(r * c);
        let mut inv_rms = Vec::with_capacity(r);
        for row in src.chunks_exact(c) {
            let ms = row.iter().map(|v| *v * *v).sum::<T>() / n;
            let inv = T::one() / (ms + eps).sqrt();
            inv_rms.push(inv);
            out.extend(row.iter().zip(g).map(|(v, gi)| *v * inv * *gi));
        }
        Ok(self.push(r, c, out, Op::RmsNorm { x, gain, inv_rms }))
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(logits);
        if targets.len() != r {
            return Err(Error::invalid_argument(format!("{} targets for {r} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::invalid_argument(format!("target class {bad} out of range for {c} classes")));
        }
        let src = self.value(logits);
        let mut probs = Vec::with_capacity(r * c);
        let mut loss = 0.0f64;
        for (row, &t) in src.chunks_exact(c).zip(targets) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let sum: T = row.iter().map(|v| (*v - max).exp()).sum();
            let log_z = max + sum.ln();
            loss += (log_z - row[t]).as_f64();
            probs.extend(row.iter().map(|v| (*v - log_z).exp()));
        }
        let value = vec![T::from_f64(loss / r as f64)];
        Ok(self.push(1, 1, value, Op::CrossEntropy { logits, targets: targets.to_vec(), probs }))
    }

    /// Mean squared difference from a constant target.
    pub fn mse(&mut self, pred: Var, target: &[T]) -> Result<Var> {
        let src = self.value(pred);
        if target.len() != src.len() {
            return Err(Error::invalid_argument(format!(
                "target of {} values for prediction of {}",
                target.len(),
                src.len()
            )));
        }
        let diff: Vec<T> = src.iter().zip(target).map(|(p, t)| *p - *t).collect();
        let loss = diff.iter().map(|d| d.as_f64() * d.as_f64()).sum::<f64>() / diff.len().max(1) as f64;
        Ok(self.push(1, 1, vec![T::from_f64(loss)], Op::Mse { pred, diff }))
    }

    /// `Σ weights ⊙ x`, mostly used to scalarize outputs for gradient checks.
    pub fn weighted_sum(&mut self, x: Var, weights: &[T]) -> Result<Var> {
        let src = self.value(x);
        if weights.len() != src.len() {
            return Err(Error::invalid_argument("weighted_sum: length mismatch"));
        }
        let s = src.iter().zip(weights).map(|(a, b)| *a * *b).sum();
        Ok(self.push(1, 1, vec![s], Op::WeightedSum { x, weights: weights.to_vec() }))
    }

    /// Reverse pass from a `1×1` output.
    pub fn backward(&mut self, output: Var) -> Result<Gradients<T>> {
        if self.shape(output) != (1, 1) {
            return Err(Error::invalid_argument("backward needs a scalar output"));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(vec![T::one()]);
        for i in (0..=output.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        let mut per_param: Vec<Option<Vec<T>>> = (0..self.store.len()).map(|_| None).collect();
        for (&id, &v) in &self.param_nodes {
            per_param[id.0] = grads[v.0].clone();
        }
        self.grads = grads;
        Ok(Gradients { per_param })
    }

    fn backprop_node(&self, i: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let (rows, cols) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Linear { x, w, b } => {
                let (n, k) = self.shape(*x);
                let m = cols;
                let dx = acc(grads, *x, n * k);
                gemm(n, m, k, dy, false, self.value(*w), true, dx, true);
                let dw = acc(grads, *w, k * m);
                gemm(k, n, m, self.value(*x), true, dy, false, dw, true);
                if let Some(b) = b {
                    let db = acc(grads, *b, m);
                    for row in dy.chunks_exact(m) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += *g;
                        }
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (n, k) = self.shape(*a);
                let m = cols;
                let da = acc(grads, *a, n * k);
                gemm(n, m, k, dy, false, self.value(*b), true, da, true);
                let db = acc(grads, *b, k * m);
                gemm(k, n, m, self.value(*a), true, dy, false, db, true);
            }
            Op::MatMulNT(a, b) => {
                let (n, k) = self.shape(*a);
                let m = cols;
                let da = acc(grads, *a, n * k);
                gemm(n, m, k, dy, false, self.value(*b), false, da, true);
                let db = acc(grads, *b, m * k);
                gemm(m, n, k, dy, true, self.value(*a), false, db, true);
            }
            Op::Add(a, b) => {
                add_into(acc(grads, *a, dy.len()), dy);
                add_into(acc(grads, *b, dy.len()), dy);
            }
            Op::AddRow(x, row) => {
                add_into(acc(grads, *x, dy.len()), dy);
                let dr = acc(grads, *row, cols);
                for chunk in dy.chunks_exact(cols.max(1)) {
                    add_into(dr, chunk);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let da = acc(grads, *a, dy.len());
                for ((d, g), y) in da.iter_mut().zip(dy).zip(vb) {
                    *d += *g * *y;
                }
                let db = acc(grads, *b, dy.len());
                for ((d, g), x) in db.iter_mut().zip(dy).zip(va) {
                    *d += *g * *x;
                }
            }
            Op::Scale(a, s) => {
                for (d, g) in acc(grads, *a, dy.len()).iter_mut().zip(dy) {
                    *d += *g * *s;
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                for ((d, g), x) in acc(grads, *a, dy.len()).iter_mut().zip(dy).zip(va) {
                    if *x > T::zero() {
                        *d += *g;
                    }
                }
            }
            Op::Gelu(a) => {
                let va = self.value(*a);
                for ((d, g), x) in acc(grads, *a, dy.len()).iter_mut().zip(dy).zip(va) {
                    *d += *g * T::from_f64(gelu_grad_scalar(x.as_f64()));
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let pc = self.shape(p).1;
                    let dp = acc(grads, p, rows * pc);
                    for r in 0..rows {
                        add_into(&mut dp[r * pc..(r + 1) * pc], &dy[r * cols + offset..r * cols + offset + pc]);
                    }
                    offset += pc;
                }
            }
            Op::SliceCols { x, start } => {
                let xc = self.shape(*x).1;
                let dx = acc(grads, *x, rows * xc);
                for r in 0..rows {
                    add_into(&mut dx[r * xc + start..r * xc + start + cols], &dy[r * cols..(r + 1) * cols]);
                }
            }
            Op::GatherRows { x, idx } => {
                let xr = self.shape(*x).0;
                let dx = acc(grads, *x, xr * cols);
                for (k, &src) in idx.iter().enumerate() {
                    add_into(&mut dx[src * cols..(src + 1) * cols], &dy[k * cols..(k + 1) * cols]);
                }
            }
            Op::GroupMax { x, argmax } => {
                let xr = self.shape(*x).0;
                let dx = acc(grads, *x, xr * cols);
                for (k, (&src, g)) in argmax.iter().zip(dy).enumerate() {
                    dx[src * cols + k % cols] += *g;
                }
            }
            Op::MixRows { x, mixing } => {
                let xr = self.shape(*x).0;
                let dx = acc(grads, *x, xr * cols);
                for gi in 0..mixing.groups.len() {
                    let start = mixing.groups.offsets[gi];
                    let drow = &dy[gi * cols..(gi + 1) * cols];
                    for (k, &src) in mixing.groups.group(gi).iter().enumerate() {
                        let w = T::from_f64(mixing.weights[start + k]);
                        for (d, g) in dx[src * cols..(src + 1) * cols].iter_mut().zip(drow) {
                            *d += w * *g;
                        }
                    }
                }
            }
            Op::MaskedSoftmax(x) => {
                let y = &node.value;
                let dx = acc(grads, *x, rows * cols);
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &dy[r * cols..(r + 1) * cols];
                    let dot: T = yr.iter().zip(gr).map(|(a, b)| *a * *b).sum();
                    for j in 0..cols {
                        dx[r * cols + j] += yr[j] * (gr[j] - dot);
                    }
                }
            }
            Op::RmsNorm { x, gain, inv_rms } => {
                let vx = self.value(*x);
                let g = self.value(*gain);
                let n = T::from_f64(cols as f64);
                let mut dgain = vec![T::zero(); cols];
                let mut dxs = vec![T::zero(); rows * cols];
                for r in 0..rows {
                    let inv = inv_rms[r];
                    let xr = &vx[r * cols..(r + 1) * cols];
                    let gr = &dy[r * cols..(r + 1) * cols];
                    let mut dot = T::zero();
                    for j in 0..cols {
                        let xhat = xr[j] * inv;
                        dgain[j] += gr[j] * xhat;
                        dot += gr[j] * g[j] * xhat;
                    }
                    let mean = dot / n;
                    for j in 0..cols {
                        let xhat = xr[j] * inv;
                        dxs[r * cols + j] = (gr[j] * g[j] - xhat * mean) * inv;
                    }
                }
                add_into(acc(grads, *x, rows * cols), &dxs);
                add_into(acc(grads, *gain, cols), &dgain);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let (r, c) = self.shape(*logits);
                let scale = dy[0] / T::from_f64(r as f64);
                let dl = acc(grads, *logits, r * c);
                for (row, &t) in targets.iter().enumerate() {
                    for j in 0..c {
                        let onehot = if j == t { T::one() } else { T::zero() };
                        dl[row * c + j] += scale * (probs[row * c + j] - onehot);
                    }
                }
            }
            Op::Mse { pred, diff } => {
                let scale = dy[0] * T::from_f64(2.0 / diff.len().max(1) as f64);
                for (d, v) in acc(grads, *pred, diff.len()).iter_mut().zip(diff) {
                    *d += scale * *v;
                }
            }
            Op::WeightedSum { x, weights } => {
                for (d, w) in acc(grads, *x, weights.len()).iter_mut().zip(weights) {
                    *d += dy[0] * *w;
                }
            }
        }
    }
}

fn acc<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn add_into<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

/// Row-wise softmax over allowed entries, with per-row max subtraction.
pub fn masked_softmax_values<T: Real>(x: &[T], mask: &[bool], rows: usize, cols: usize) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mr = &mask[r * cols..(r + 1) * cols];
        let max = xr
            .iter()
            .zip(mr)
            .filter(|(_, &m)| m)
            .map(|(v, _)| *v)
            .fold(T::neg_infinity(), T::max);
        if max == T::neg_infinity() {
            return Err(Error::invalid_argument(format!("mask row {r} allows no entries")));
        }
        let orow = &mut out[r * cols..(r + 1) * cols];
        let mut sum = T::zero();
        for j in 0..cols {
            if mr[j] {
                orow[j] = (xr[j] - max).exp();
                sum += orow[j];
            }
        }
        orow.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(out)
}
