//! Diffusion on random planar triangulations, standing in for CFD data.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::StandardNormal;

use super::graph::Adjacency;
use super::MeshGraphSequence;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::rng;

/// Size and dynamics of a synthetic mesh sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSynthSpec {
    pub nodes: usize,
    /// Transitions; the sequence holds `steps + 1` frames.
    pub steps: usize,
    pub diffusivity: f64,
    /// Noise on the surface-feature channels (0 disables them).
    pub feature_noise: f64,
    pub with_features: bool,
    pub seed: u64,
}

impl MeshSynthSpec {
    pub fn new(nodes: usize, steps: usize, diffusivity: f64, seed: u64) -> Self {
        Self { nodes, steps, diffusivity, feature_noise: 0.05, with_features: true, seed }
    }
}

/// Bowyer–Watson Delaunay triangulation; returns triangles as index triples.
fn delaunay(pts: &[[f64; 2]]) -> Vec<[usize; 3]> {
    let n = pts.len();
    // super triangle well outside the unit square
    let mut all = pts.to_vec();
    all.extend([[-10.0, -10.0], [10.0, -10.0], [0.0, 20.0]]);
    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    let circum = |t: &[usize; 3], p: [f64; 2]| -> bool {
        let [a, b, c] = t.map(|i| all[i]);
        let (ax, ay) = (a[0] - p[0], a[1] - p[1]);
        let (bx, by) = (b[0] - p[0], b[1] - p[1]);
        let (cx, cy) = (c[0] - p[0], c[1] - p[1]);
        let det = (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay)
            + (cx * cx + cy * cy) * (ax * by - bx * ay);
        let orient = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
        if orient > 0.0 {
            det > 0.0
        } else {
            det < 0.0
        }
    };
    for i in 0..n {
        let (bad, keep): (Vec<[usize; 3]>, Vec<[usize; 3]>) = tris.into_iter().partition(|t| circum(t, all[i]));
        let mut boundary: Vec<(usize, usize)> = Vec::new();
        for t in &bad {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let shared = bad.iter().filter(|u| u.contains(&a) && u.contains(&b)).count() > 1;
                if !shared {
                    boundary.push((a, b));
                }
            }
        }
        tris = keep;
        tris.extend(boundary.into_iter().map(|(a, b)| [a, b, i]));
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    tris
}

/// Random planar triangulation with `n` nodes in the unit square.
fn random_triangulation(n: usize, seed: u64) -> (Vec<Vec3>, Vec<[u32; 2]>) {
    let mut r = rng::stream(seed, "mesh-points");
    let pts: Vec<[f64; 2]> = (0..n).map(|_| [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)]).collect();
    let mut edges = BTreeSet::new();
    for t in delaunay(&pts) {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            edges.insert((a.min(b) as u32, a.max(b) as u32));
        }
    }
    let positions = pts.iter().map(|p| [p[0], p[1], 0.0]).collect();
    (positions, edges.into_iter().map(|(a, b)| [a, b]).collect())
}

/// Scalar field evolved by `u ← u − κ·L·u` on a random triangulation, where
/// `L` is the Laplacian with edge weights `(c_i + c_j)/2` and node
/// conductance `c_i = (deg_i / mean degree)²`. The optional features are
/// noisy copies of normalized degree and initial field; degree sets each
/// node's diffusion rate, so they carry signal.
pub fn synth_mesh(spec: &MeshSynthSpec) -> Result<MeshGraphSequence> {
    let n = spec.nodes;
    if n < 4 {
        return Err(Error::invalid_argument(format!("mesh needs at least 4 nodes, got {n}")));
    }
    let (positions, edges) = random_triangulation(n, spec.seed);
    let adj = Adjacency::from_edges(n, &edges)?;
    let degrees: Vec<f64> = (0..n).map(|i| adj.degree(i) as f64).collect();
    let mean_degree = degrees.iter().sum::<f64>() / n as f64;
    let conductance: Vec<f64> = degrees.iter().map(|d| (d / mean_degree).powi(2)).collect();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i && adj.get(i, j)).collect()).collect();
    // symmetric edge weights keep the Laplacian symmetric, so the total is conserved
    let weight = |i: usize, j: usize| 0.5 * (conductance[i] + conductance[j]);
    let max_rate = (0..n).map(|i| neighbors[i].iter().map(|&j| weight(i, j)).sum::<f64>()).fold(0.0, f64::max);
    if !(spec.diffusivity >= 0.0 && spec.diffusivity * max_rate <= 1.0) {
        return Err(Error::invalid_argument(format!(
            "diffusivity {} outside the stable range [0, {:.4}]",
            spec.diffusivity,
            1.0 / max_rate
        )));
    }
    let mut r = rng::stream(spec.seed, "mesh-field");
    let bumps: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| (r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.1..0.3), r.gen_range(-1.0..1.0)))
        .collect();
    let mut u: Vec<f64> = positions
        .iter()
        .map(|p: &Vec3| {
            bumps
                .iter()
                .map(|&(cx, cy, w, a)| a * (-((p[0] - cx).powi(2) + (p[1] - cy).powi(2)) / (2.0 * w * w)).exp())
                .sum()
        })
        .collect();
    let mut fields = vec![u.clone()];
    for _ in 0..spec.steps {
        let next: Vec<f64> = (0..n)
            .map(|i| u[i] - spec.diffusivity * neighbors[i].iter().map(|&j| weight(i, j) * (u[i] - u[j])).sum::<f64>())
            .collect();
        u = next;
        fields.push(u.clone());
    }
    let features = spec.with_features.then(|| {
        let mut noise = rng::stream(spec.seed, "mesh-features");
        (0..n)
            .map(|i| {
                let mut eps = || spec.feature_noise * noise.sample::<f64, _>(StandardNormal);
                vec![(degrees[i] / mean_degree + eps()) as f32, (fields[0][i] + eps()) as f32]
            })
            .collect()
    });
    MeshGraphSequence::new(positions, edges, 1, features, fields)
}

/// [`synth_mesh`] with default feature settings.
pub fn synth_mesh_sequence(nodes: usize, steps: usize, diffusivity: f64, seed: u64) -> Result<MeshGraphSequence> {
    synth_mesh(&MeshSynthSpec::new(nodes, steps, diffusivity, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delaunay_square() {
        let t = delaunay(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.1], [0.0, 1.0]]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn delaunay_empty_circumcircles() {
        let mut r = rng::stream(7, "t");
        let pts: Vec<[f64; 2]> = (0..40).map(|_| [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)]).collect();
        let tris = delaunay(&pts);
        // Euler: a triangulation of n points with h hull vertices has 2n − 2 − h triangles
        assert!(tris.len() >= 40 && tris.len() <= 2 * 40 - 5);
        for t in &tris {
            let [a, b, c] = t.map(|i| pts[i]);
            let d = 2.0 * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
            let sq = |p: [f64; 2]| p[0] * p[0] + p[1] * p[1];
            let ux = (sq(a) * (b[1] - c[1]) + sq(b) * (c[1] - a[1]) + sq(c) * (a[1] - b[1])) / d;
            let uy = (sq(a) * (c[0] - b[0]) + sq(b) * (a[0] - c[0]) + sq(c) * (b[0] - a[0])) / d;
            let r2 = (a[0] - ux).powi(2) + (a[1] - uy).powi(2);
            for (i, p) in pts.iter().enumerate() {
                if !t.contains(&i) {
                    assert!((p[0] - ux).powi(2) + (p[1] - uy).powi(2) >= r2 - 1e-9);
                }
            }
        }
    }

    #[test]
    fn zero_diffusivity_is_constant() {
        let s = synth_mesh_sequence(20, 5, 0.0, 1).unwrap();
        assert!(s.fields.iter().all(|f| f == &s.fields[0]));
        assert_eq!(s.step_count(), 6);
    }

    #[test]
    fn conserves_total_field() {
        let s = synth_mesh_sequence(60, 10, 0.03, 2).unwrap();
        let total = |f: &Vec<f64>| f.iter().sum::<f64>();
        let t0 = total(&s.fields[0]);
        for f in &s.fields {
            assert!((total(f) - t0).abs() < 1e-6);
        }
    }

    #[test]
    fn seeded_and_planar() {
        let a = synth_mesh_sequence(50, 3, 0.03, 3).unwrap();
        assert_eq!(a, synth_mesh_sequence(50, 3, 0.03, 3).unwrap());
        // planar triangulations have at most 3n − 6 edges, and every node is connected
        assert!(a.edges.len() <= 3 * 50 - 6);
        let adj = Adjacency::from_edges(50, &a.edges).unwrap();
        assert!((0..50).all(|i| adj.degree(i) >= 2));
        assert_eq!(a.feature_channels(), 2);
        assert!(synth_mesh_sequence(3, 3, 0.05, 3).is_err());
        assert!(synth_mesh_sequence(10, 3, 5.0, 3).is_err());
    }
}
