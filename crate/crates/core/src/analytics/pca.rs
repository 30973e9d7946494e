//! Principal components by power iteration with deflation.

use crate::error::{Error, Result};

use super::{Method, Projection2D};

const RESIDUAL_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 100_000;

/// Fitted principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit component vectors, strongest first. The largest-magnitude entry of each is positive.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues of the (1/N) covariance matrix.
    pub variances: Vec<f64>,
    /// Share of total variance per component; zero for zero-variance data.
    pub explained_ratio: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: &[f64], d: usize, v: &[f64]) -> Vec<f64> {
    m.chunks_exact(d).map(|row| dot(row, v)).collect()
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Dominant eigenpair of a symmetric PSD matrix, or `None` if it is (numerically) zero.
fn power_iteration(m: &[f64], d: usize, exclude: &[Vec<f64>]) -> Option<(f64, Vec<f64>)> {
    let scale = m.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    if scale == 0.0 {
        return None;
    }
    // Start from the largest-norm column, made orthogonal to known components.
    let mut start = 0;
    let mut best = -1.0;
    for j in 0..d {
        let norm: f64 = (0..d).map(|i| m[i * d + j] * m[i * d + j]).sum();
        if norm > best {
            best = norm;
            start = j;
        }
    }
    let mut v: Vec<f64> = (0..d).map(|i| m[i * d + start] + 1e-3 * ((i + 1) as f64).sqrt()).collect();
    let orthogonalize = |v: &mut Vec<f64>| {
        for e in exclude {
            let p = dot(v, e);
            v.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
        }
    };
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let mut stalled = 0;
    for _ in 0..MAX_ITERATIONS {
        orthogonalize(&mut v);
        let norm = dot(&v, &v).sqrt();
        if norm <= scale * 1e-14 {
            return None;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        // deflation by projection: iterate with P·M·P where P removes known components
        let mut mv = matvec(m, d, &v);
        orthogonalize(&mut mv);
        let lambda = dot(&v, &mv);
        let residual = mv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if residual <= RESIDUAL_TOL * scale.max(1.0) {
            return Some((lambda.max(0.0), v));
        }
        if best.as_ref().map_or(true, |b| residual < b.0) {
            best = Some((residual, lambda, v.clone()));
            stalled = 0;
        } else {
            // rounding floor reached above the tolerance
            stalled += 1;
            if stalled > 100 {
                break;
            }
        }
        v = mv;
    }
    best.map(|(_, lambda, v)| (lambda.max(0.0), v))
}

impl Pca {
    pub fn fit(vectors: &[Vec<f64>], components: usize) -> Result<Self> {
        let n = vectors.len();
        let d = vectors.first().map_or(0, Vec::len);
        if n < 3 {
            return Err(Error::invalid_argument(format!("PCA needs at least 3 vectors, got {n}")));
        }
        if d < components.max(2) {
            return Err(Error::invalid_argument(format!("PCA needs dimension ≥ {}, got {d}", components.max(2))));
        }
        if vectors.iter().any(|v| v.len() != d) {
            return Err(Error::invalid_data("vectors have differing dimensions"));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("non-finite input to PCA"));
        }
        let mut mean = vec![0.0; d];
        for v in vectors {
            mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut cov = vec![0.0; d * d];
        for v in vectors {
            let c: Vec<f64> = v.iter().zip(&mean).map(|(x, m)| x - m).collect();
            for i in 0..d {
                let ci = c[i];
                for j in i..d {
                    cov[i * d + j] += ci * c[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] /= n as f64;
                cov[j * d + i] = cov[i * d + j];
            }
        }
        let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
        let mut comps: Vec<Vec<f64>> = Vec::with_capacity(components);
        let mut variances = Vec::with_capacity(components);
        for _ in 0..components {
            match power_iteration(&cov, d, &comps) {
                Some((lambda, mut v)) => {
                    fix_sign(&mut v);
                    comps.push(v);
                    variances.push(lambda);
                }
                None => {
                    // Remaining variance is zero: complete with basis vectors orthogonal to what we have.
                    let mut e = (0..d)
                        .map(|axis| {
                            let mut e = vec![0.0; d];
                            e[axis] = 1.0;
                            for c in &comps {
                                let p = dot(&e, c);
                                e.iter_mut().zip(c).for_each(|(x, y)| *x -= p * y);
                            }
                            e
                        })
                        .max_by(|a, b| dot(a, a).total_cmp(&dot(b, b)))
                        .expect("d ≥ 2");
                    let norm = dot(&e, &e).sqrt();
                    e.iter_mut().for_each(|x| *x /= norm);
                    fix_sign(&mut e);
                    comps.push(e);
                    variances.push(0.0);
                }
            }
        }
        let explained_ratio = variances
            .iter()
            .map(|&v| if trace > 0.0 { (v / trace).min(1.0) } else { 0.0 })
            .collect();
        Ok(Self { mean, components: comps, variances, explained_ratio })
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = v.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        self.components.iter().map(|c| dot(c, &centered)).collect()
    }
}

/// Two-component PCA projection of every vector.
pub fn pca_2d(vectors: &[Vec<f64>]) -> Result<Projection2D> {
    let pca = Pca::fit(vectors, 2)?;
    let coords = vectors.iter().map(|v| {
        let p = pca.project(v);
        [p[0], p[1]]
    });
    Ok(Projection2D {
        coords: coords.collect(),
        labels: Vec::new(),
        method: Method::Pca,
        components: Some([pca.components[0].clone(), pca.components[1].clone()]),
        explained_ratio: Some([pca.explained_ratio[0], pca.explained_ratio[1]]),
    })
}
