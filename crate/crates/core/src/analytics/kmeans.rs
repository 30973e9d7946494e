//! k-means (Lloyd) with farthest-first initialisation and silhouette-based k selection.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub silhouette: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KSelection {
    pub best: ClusterAssignment,
    /// `(k, silhouette, inertia)` for every candidate.
    pub table: Vec<(usize, f64, f64)>,
}

fn d2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn validate(points: &[Vec<f64>]) -> Result<usize> {
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(Error::invalid_argument("clustering needs non-empty points"));
    }
    if points.iter().any(|p| p.len() != dim) || points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid_data("clustering input must be finite points of equal dimension"));
    }
    Ok(dim)
}

fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, l) in points.iter().zip(labels.iter_mut()) {
        let mut best = (f64::INFINITY, 0);
        for (c, centroid) in centroids.iter().enumerate() {
            let d = d2(p, centroid);
            if d < best.0 {
                best = (d, c);
            }
        }
        *l = best.1;
        inertia += best.0;
    }
    inertia
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterAssignment> {
    let dim = validate(points)?;
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid_argument(format!("k must be in 1..={n}, got {k}")));
    }
    let first = rng::stream(seed, "kmeans-init").gen_range(0..n);
    let mut centroids = vec![points[first].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| d2(p, &points[first])).collect();
    while centroids.len() < k {
        let mut far = 0;
        for i in 1..n {
            if nearest[i] > nearest[far] {
                far = i;
            }
        }
        centroids.push(points[far].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(d2(p, &points[far]));
        }
    }

    let mut labels = vec![0; n];
    let mut history = vec![assign(points, &centroids, &mut labels)];
    for _ in 0..MAX_ITERATIONS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed an empty cluster at the point worst served by its centroid
                let mut worst = 0;
                let mut worst_d = -1.0;
                for (i, p) in points.iter().enumerate() {
                    let d = d2(p, &centroids[labels[i]]);
                    if d > worst_d {
                        worst_d = d;
                        worst = i;
                    }
                }
                centroids[c] = points[worst].clone();
                labels[worst] = c;
            }
        }
        let previous = labels.clone();
        history.push(assign(points, &centroids, &mut labels));
        if labels == previous {
            break;
        }
    }
    let inertia = *history.last().expect("at least one assignment");
    let silhouette = silhouette(points, &labels, k);
    Ok(ClusterAssignment { k, labels, centroids, inertia, inertia_history: history, silhouette })
}

/// Mean silhouette width; singleton clusters score 0, as does `k = 1`.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let n = points.len();
    if k < 2 || n == 0 {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    labels.iter().for_each(|&l| sizes[l] += 1);
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if i != j {
                sums[labels[j]] += d2(&points[i], &points[j]).sqrt();
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 && b.is_finite() {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Cluster for each k in `range` and keep the one with the highest silhouette
/// (smallest k on ties).
pub fn select_k(points: &[Vec<f64>], range: std::ops::RangeInclusive<usize>, seed: u64) -> Result<KSelection> {
    validate(points)?;
    let n = points.len();
    let (lo, hi) = (*range.start(), *range.end());
    if lo < 2 || hi < lo || hi > n.saturating_sub(1) {
        return Err(Error::invalid_argument(format!("k range must lie within 2..={}, got {lo}..={hi}", n.saturating_sub(1))));
    }
    let mut best: Option<ClusterAssignment> = None;
    let mut table = Vec::new();
    for k in range {
        let c = kmeans(points, k, seed)?;
        table.push((k, c.silhouette, c.inertia));
        if best.as_ref().map_or(true, |b| c.silhouette > b.silhouette) {
            best = Some(c);
        }
    }
    Ok(KSelection { best: best.expect("non-empty range"), table })
}
