//! Classifiers on 2D PCA projections of per-object feature statistics.

use std::fmt;
use std::str::FromStr;

use crate::analytics::Pca;
use crate::error::{Error, Result};
use crate::featurestore::ObjectStats;
use crate::nn::{Activation, AdamW, AdamWConfig, Mlp, ParamStore, Tape};

const LOGISTIC_GRAD_TOL: f64 = 1e-6;
const LOGISTIC_MAX_ITERS: usize = 10_000;
const MLP_HIDDEN: usize = 16;
const MLP_STEPS: usize = 2000;
const MLP_LEARNING_RATE: f64 = 0.01;

/// Which statistics are projected and concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatVariant {
    Mean,
    MeanStd,
    All,
}

impl StatVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            StatVariant::Mean => "mean",
            StatVariant::MeanStd => "mean+std",
            StatVariant::All => "all",
        }
    }

    fn select(self, s: &ObjectStats) -> Vec<&[f64]> {
        match self {
            StatVariant::Mean => vec![&s.mean],
            StatVariant::MeanStd => vec![&s.mean, &s.std],
            StatVariant::All => vec![&s.mean, &s.std, &s.min, &s.max],
        }
    }
}

impl fmt::Display for StatVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StatVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "mean+std" => Ok(Self::MeanStd),
            "all" => Ok(Self::All),
            _ => Err(Error::invalid_argument(format!("unknown statistic variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatModel {
    SmallMlp,
    Logistic,
}

impl FromStr for StatModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small-mlp" => Ok(Self::SmallMlp),
            "logistic" => Ok(Self::Logistic),
            _ => Err(Error::invalid_argument(format!("unknown statistic model {s:?}"))),
        }
    }
}

/// Binary logistic regression in the original input coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub final_grad_norm: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_labels(labels: &[u8], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::invalid_data("label count differs from sample count"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid_data("labels must be binary"));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones < 2 || n - ones < 2 {
        return Err(Error::invalid_data("training needs at least 2 objects of each class"));
    }
    Ok(())
}

impl LogisticRegression {
    /// Gradient descent on the mean logistic loss over standardized inputs,
    /// stopping when the gradient norm drops below 1e-6 or after 10k steps.
    pub fn fit(x: &[Vec<f64>], labels: &[u8]) -> Result<Self> {
        check_labels(labels, x.len())?;
        let m = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..m).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..m)
            .map(|j| {
                let s = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        let z: Vec<Vec<f64>> = x.iter().map(|r| (0..m).map(|j| (r[j] - mean[j]) / scale[j]).collect()).collect();
        // ±1 targets keep the iterates exactly antisymmetric under label flips
        let t: Vec<f64> = labels.iter().map(|&l| if l == 1 { 1.0 } else { -1.0 }).collect();
        // curvature of the mean logistic loss is at most ¼ · mean ‖[z, 1]‖² = (m + 1) / 4
        let step = 4.0 / (m as f64 + 1.0);
        let mut w = vec![0.0; m];
        let mut b = 0.0;
        let mut iterations = 0;
        let mut grad_norm = f64::INFINITY;
        while iterations < LOGISTIC_MAX_ITERS {
            let mut gw = vec![0.0; m];
            let mut gb = 0.0;
            for (zi, &ti) in z.iter().zip(&t) {
                let margin = ti * (zi.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + b);
                let c = -ti * sigmoid(-margin) / n;
                gw.iter_mut().zip(zi).for_each(|(g, v)| *g += c * v);
                gb += c;
            }
            grad_norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
            if grad_norm < LOGISTIC_GRAD_TOL {
                break;
            }
            w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
            b -= step * gb;
            iterations += 1;
        }
        let weights: Vec<f64> = (0..m).map(|j| w[j] / scale[j]).collect();
        let bias = b - (0..m).map(|j| w[j] * mean[j] / scale[j]).sum::<f64>();
        Ok(Self { weights, bias, iterations, final_grad_norm: grad_norm })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        u8::from(self.decision(x) > 0.0)
    }
}

/// One-hidden-layer ReLU network trained full-batch with AdamW.
#[derive(Debug, Clone)]
pub struct SmallMlp {
    mlp: Mlp,
    params: ParamStore<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl SmallMlp {
    pub fn fit(x: &[Vec<f64>], labels: &[u8], seed: u64) -> Result<Self> {
        check_labels(labels, x.len())?;
        let m = x[0].len();
        let n = x.len() as f64;
        let mean: Vec<f64> = (0..m).map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..m)
            .map(|j| {
                let s = (x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 { s } else { 1.0 }
            })
            .collect();
        let mut params = ParamStore::new();
        let mlp = Mlp::new(&mut params, "stat_mlp", m, &[MLP_HIDDEN, 2], Activation::Relu, false, seed)?;
        let mut model = Self { mlp, params, mean, scale };
        let data: Vec<f64> = x.iter().flat_map(|r| model.standardize(r)).collect();
        let targets: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        let config = AdamWConfig { learning_rate: MLP_LEARNING_RATE, total_steps: MLP_STEPS as u64, ..AdamWConfig::default() };
        let mut opt = AdamW::new(config, &model.params);
        for _ in 0..MLP_STEPS {
            let grads = {
                let mut tape = Tape::new(&model.params);
                let input = tape.input(x.len(), m, data.clone())?;
                let logits = model.mlp.forward(&mut tape, input)?;
                let loss = tape.cross_entropy(logits, &targets)?;
                tape.backward(loss)?
            };
            model.params.zero_grads();
            model.params.accumulate(&grads, 1.0);
            opt.step(&mut model.params);
        }
        Ok(model)
    }

    fn standardize(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        let mut tape = Tape::new(&self.params);
        let input = tape.input(1, x.len(), self.standardize(x))?;
        let logits = self.mlp.forward(&mut tape, input)?;
        let v = tape.value(logits);
        Ok(u8::from(v[1] > v[0]))
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    Logistic(LogisticRegression),
    Mlp(SmallMlp),
}

/// PCA projection of object statistics followed by a small classifier.
#[derive(Debug, Clone)]
pub struct PcaStatClassifier {
    pub variant: StatVariant,
    pcas: Vec<Pca>,
    model: Fitted,
}

impl PcaStatClassifier {
    pub fn fit(stats: &[ObjectStats], labels: &[u8], variant: StatVariant, model: StatModel, seed: u64) -> Result<Self> {
        check_labels(labels, stats.len())?;
        let blocks = variant.select(&stats[0]).len();
        let pcas = (0..blocks)
            .map(|b| {
                let vectors: Vec<Vec<f64>> = stats.iter().map(|s| variant.select(s)[b].to_vec()).collect();
                Pca::fit(&vectors, 2)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut c = Self { variant, pcas, model: Fitted::Logistic(LogisticRegression { weights: vec![], bias: 0.0, iterations: 0, final_grad_norm: 0.0 }) };
        let x: Vec<Vec<f64>> = stats.iter().map(|s| c.embed(s)).collect();
        c.model = match model {
            StatModel::Logistic => Fitted::Logistic(LogisticRegression::fit(&x, labels)?),
            StatModel::SmallMlp => Fitted::Mlp(SmallMlp::fit(&x, labels, seed)?),
        };
        Ok(c)
    }

    /// The 2, 4 or 8 projected values fed to the classifier.
    pub fn embed(&self, s: &ObjectStats) -> Vec<f64> {
        self.variant.select(s).iter().zip(&self.pcas).flat_map(|(v, p)| p.project(v)).collect()
    }

    pub fn predict(&self, stats: &[ObjectStats]) -> Result<Vec<u8>> {
        stats
            .iter()
            .map(|s| {
                if s.dim() != self.pcas[0].mean.len() {
                    return Err(Error::invalid_data("statistic dimension differs from training data"));
                }
                let x = self.embed(s);
                match &self.model {
                    Fitted::Logistic(l) => Ok(l.predict(&x)),
                    Fitted::Mlp(m) => m.predict(&x),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Newton's method on the raw (unstandardized) 1D logistic loss.
    fn newton_1d(x: &[f64], y: &[u8]) -> (f64, f64) {
        let (mut w, mut b) = (0.0, 0.0);
        for _ in 0..100 {
            let (mut gw, mut gb, mut hww, mut hwb, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for (&xi, &yi) in x.iter().zip(y) {
                let p = 1.0 / (1.0 + (-(w * xi + b)).exp());
                let r = p - yi as f64;
                gw += r * xi;
                gb += r;
                let s = p * (1.0 - p);
                hww += s * xi * xi;
                hwb += s * xi;
                hbb += s;
            }
            let det = hww * hbb - hwb * hwb;
            w -= (hbb * gw - hwb * gb) / det;
            b -= (hww * gb - hwb * gw) / det;
        }
        (w, b)
    }

    #[test]
    fn logistic_matches_newton() {
        let x = [-2.0, -1.0, 1.0, 2.0];
        let y = [0u8, 1, 0, 1];
        let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let fit = LogisticRegression::fit(&rows, &y).unwrap();
        let (w, b) = newton_1d(&x, &y);
        assert!((fit.weights[0] - w).abs() < 1e-3, "{} vs {w}", fit.weights[0]);
        assert!((fit.bias - b).abs() < 1e-3, "{} vs {b}", fit.bias);
        assert!(fit.final_grad_norm < 1e-6);
    }

    fn blobs(seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut r = rng::stream(seed, "lr-blobs");
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let c = (i % 2) as u8;
            let shift = if c == 1 { 4.0 } else { -4.0 };
            x.push(vec![shift + r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)]);
            y.push(c);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let (x, y) = blobs(1);
        let lr = LogisticRegression::fit(&x, &y).unwrap();
        assert!(x.iter().zip(&y).all(|(r, &l)| lr.predict(r) == l));
        let mlp = SmallMlp::fit(&x, &y, 3).unwrap();
        assert!(x.iter().zip(&y).all(|(r, &l)| mlp.predict(r).unwrap() == l));
    }

    #[test]
    fn label_flip_mirrors_model() {
        let (x, y) = blobs(2);
        let flipped: Vec<u8> = y.iter().map(|l| 1 - l).collect();
        let a = LogisticRegression::fit(&x, &y).unwrap();
        let b = LogisticRegression::fit(&x, &flipped).unwrap();
        for r in &x {
            assert_eq!(a.decision(r), -b.decision(r));
            assert_eq!(a.predict(r), 1 - b.predict(r));
        }
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![vec![0.0]; 4];
        assert!(matches!(LogisticRegression::fit(&x, &[1, 1, 1, 1]), Err(Error::InvalidData(_))));
    }

    #[test]
    fn stats_pipeline() {
        let mut r = rng::stream(4, "stats");
        let mut stats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..20 {
            let c = (i % 2) as u8;
            let shift = if c == 1 { 1.0 } else { -1.0 };
            let v = |r: &mut crate::rng::StreamRng| (0..6).map(|_| shift + 0.3 * r.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>();
            stats.push(ObjectStats { mean: v(&mut r), std: v(&mut r), min: v(&mut r), max: v(&mut r) });
            labels.push(c);
        }
        for (variant, width) in [(StatVariant::Mean, 2), (StatVariant::MeanStd, 4), (StatVariant::All, 8)] {
            let clf = PcaStatClassifier::fit(&stats, &labels, variant, StatModel::Logistic, 0).unwrap();
            assert_eq!(clf.embed(&stats[0]).len(), width);
            assert_eq!(clf.predict(&stats).unwrap(), labels);
        }
    }
}
