//! Exact (quadratic) t-SNE.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;

use super::{Method, Projection2D};

const ENTROPY_TOL: f64 = 1e-4;
const MAX_BISECTION: usize = 50;
const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const LEARNING_RATE: f64 = 200.0;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self { perplexity: 30.0, iterations: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    pub projection: Projection2D,
    /// Rows whose bandwidth search stopped before reaching the entropy tolerance.
    pub unconverged_rows: Vec<usize>,
    pub kl_divergence: f64,
}

fn squared_distances(x: &[Vec<f64>]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional affinities `P(j|i)` whose entropy (natural log) matches
/// `ln(perplexity)`. Returns the row-major matrix and the rows that did not converge.
pub fn conditional_affinities(x: &[Vec<f64>], perplexity: f64) -> (Vec<f64>, Vec<usize>) {
    let n = x.len();
    let d = squared_distances(x);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    let mut unconverged = Vec::new();
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0f64, 0.0f64, f64::INFINITY);
        let mut converged = false;
        for _ in 0..MAX_BISECTION {
            // subtract the smallest off-diagonal distance for numerical range
            let dmin = (0..n).filter(|&j| j != i).map(|j| row[j]).fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    p[i * n + j] = 0.0;
                    continue;
                }
                let w = (-(row[j] - dmin) * beta).exp();
                p[i * n + j] = w;
                sum += w;
                weighted += w * (row[j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted / sum;
            for j in 0..n {
                p[i * n + j] /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL {
                converged = true;
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        if !converged {
            unconverged.push(i);
        }
    }
    (p, unconverged)
}

/// Embed `vectors` into two dimensions.
pub fn tsne_2d(vectors: &[Vec<f64>], config: &TsneConfig) -> Result<TsneResult> {
    let n = vectors.len();
    if !(config.perplexity > 0.0) {
        return Err(Error::invalid_argument("perplexity must be positive"));
    }
    if (n as f64) < 3.0 * config.perplexity {
        return Err(Error::invalid_argument(format!(
            "t-SNE needs at least 3×perplexity = {} objects, got {n}",
            3.0 * config.perplexity
        )));
    }
    let dim = vectors[0].len();
    if vectors.iter().any(|v| v.len() != dim) || vectors.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid_data("t-SNE input must be finite vectors of equal dimension"));
    }
    let (cond, unconverged_rows) = conditional_affinities(vectors, config.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(1e-12);
        }
    }

    let mut stream = rng::stream(config.seed, "tsne-init");
    let mut y: Vec<[f64; 2]> =
        (0..n).map(|_| [1e-4 * stream.sample::<f64, _>(StandardNormal), 1e-4 * stream.sample::<f64, _>(StandardNormal)]).collect();
    let mut velocity = vec![[0.0; 2]; n];
    let mut gains = vec![[1.0; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut grad = vec![[0.0; 2]; n];

    for iter in 0..config.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS { EXAGGERATION } else { 1.0 };
        let momentum = if iter < EXAGGERATION_ITERS { 0.5 } else { 0.8 };
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                total += 2.0 * v;
            }
        }
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[i * n + j] / total).max(1e-12);
                let m = (exaggeration * p[i * n + j] - q) * num[i * n + j];
                g[0] += 4.0 * m * (y[i][0] - y[j][0]);
                g[1] += 4.0 * m * (y[i][1] - y[j][1]);
            }
            grad[i] = g;
        }
        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (velocity[i][c] > 0.0);
                gains[i][c] = if same_sign { (gains[i][c] * 0.8f64).max(MIN_GAIN) } else { gains[i][c] + 0.2 };
                velocity[i][c] = momentum * velocity[i][c] - LEARNING_RATE * gains[i][c] * grad[i][c];
                y[i][c] += velocity[i][c];
            }
        }
        let mean = [y.iter().map(|p| p[0]).sum::<f64>() / n as f64, y.iter().map(|p| p[1]).sum::<f64>() / n as f64];
        y.iter_mut().for_each(|p| {
            p[0] -= mean[0];
            p[1] -= mean[1];
        });
        if y.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Aborted { step: iter, reason: "t-SNE embedding became non-finite".into() });
        }
    }

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                num[i * n + j] = 1.0 / (1.0 + dx * dx + dy * dy);
                total += num[i * n + j];
            }
        }
    }
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let q = (num[i * n + j] / total).max(1e-12);
                kl += p[i * n + j] * (p[i * n + j] / q).ln();
            }
        }
    }

    Ok(TsneResult {
        projection: Projection2D {
            coords: y,
            labels: Vec::new(),
            method: Method::Tsne,
            components: None,
            explained_ratio: None,
        },
        unconverged_rows,
        kl_divergence: kl,
    })
}
