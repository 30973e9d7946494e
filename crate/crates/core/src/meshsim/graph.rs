use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

use super::MeshGraphSequence;

/// Dense binary adjacency with self-loops.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    n: usize,
    bits: Vec<bool>,
}

impl Adjacency {
    /// Undirected edges plus the full self-loop diagonal.
    pub fn from_edges(n: usize, edges: &[[u32; 2]]) -> Result<Self> {
        let mut bits = vec![false; n * n];
        for i in 0..n {
            bits[i * n + i] = true;
        }
        for e in edges {
            let (a, b) = (e[0] as usize, e[1] as usize);
            if a >= n || b >= n {
                return Err(Error::invalid_data(format!("edge {e:?} references a missing node")));
            }
            bits[a * n + b] = true;
            bits[b * n + a] = true;
        }
        Ok(Self { n, bits })
    }

    /// Row-major `n×n` matrix as given. Must be symmetric; the diagonal is
    /// not forced, so attention can reject nodes without a self-loop.
    pub fn from_bits(n: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != n * n {
            return Err(Error::invalid_data(format!("{} adjacency entries for {n} nodes", bits.len())));
        }
        for i in 0..n {
            for j in i + 1..n {
                if bits[i * n + j] != bits[j * n + i] {
                    return Err(Error::invalid_data(format!("adjacency is not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, bits })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.get(i, i))
    }

    /// Neighbors other than the node itself.
    pub fn degree(&self, i: usize) -> usize {
        (0..self.n).filter(|&j| j != i && self.get(i, j)).count()
    }

    /// Each undirected non-loop edge once, as `(i, j)` with `i < j`.
    pub fn edges(&self) -> Vec<[u32; 2]> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                if self.get(i, j) {
                    out.push([i as u32, j as u32]);
                }
            }
        }
        out
    }

    fn set_pair(&mut self, i: usize, j: usize) {
        self.bits[i * self.n + j] = true;
        self.bits[j * self.n + i] = true;
    }
}

/// Graph view of one frame: node inputs `[fields, positions, features]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshGraph {
    /// Row-major `N×p`.
    pub x: Vec<f64>,
    pub width: usize,
    pub edges: Vec<[u32; 2]>,
    pub adjacency: Adjacency,
}

impl MeshGraph {
    pub fn new(x: Vec<f64>, width: usize, edges: Vec<[u32; 2]>) -> Result<Self> {
        if width == 0 || x.len() % width != 0 {
            return Err(Error::invalid_argument(format!("{} values do not form rows of width {width}", x.len())));
        }
        let adjacency = Adjacency::from_edges(x.len() / width, &edges)?;
        Ok(Self { x, width, edges, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.node_count()
    }

    /// Node inputs for `fields` on the mesh of `seq`.
    pub fn from_fields(seq: &MeshGraphSequence, fields: &[f64]) -> Result<Self> {
        let x = node_inputs(seq, fields)?;
        Self::new(x, input_width(seq), seq.edges.clone())
    }
}

pub(crate) fn input_width(seq: &MeshGraphSequence) -> usize {
    seq.field_channels + 3 + seq.feature_channels()
}

/// Row-major node inputs; positions and features are constant over time.
pub(crate) fn node_inputs(seq: &MeshGraphSequence, fields: &[f64]) -> Result<Vec<f64>> {
    let n = seq.node_count();
    let c = seq.field_channels;
    if fields.len() != n * c {
        return Err(Error::invalid_argument(format!("{} field values for {n} nodes × {c} channels", fields.len())));
    }
    let mut x = Vec::with_capacity(n * input_width(seq));
    for i in 0..n {
        x.extend_from_slice(&fields[i * c..(i + 1) * c]);
        x.extend(seq.positions[i].iter().copied());
        if let Some(f) = &seq.features {
            x.extend(f[i].iter().map(|&v| v as f64));
        }
    }
    Ok(x)
}

/// Union of k-hop reachability, `r` seeded random pairs and full rows and
/// columns for the global nodes.
pub fn augment_adjacency(a: &Adjacency, hops: usize, random_edges: usize, globals: &[usize], seed: u64) -> Result<Adjacency> {
    let n = a.node_count();
    if !a.has_self_loops() {
        return Err(Error::invalid_data("adjacency lacks self-loops"));
    }
    if let Some(&g) = globals.iter().find(|&&g| g >= n) {
        return Err(Error::invalid_argument(format!("global node {g} out of range for {n} nodes")));
    }
    let neighbors: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| j != i && a.get(i, j)).collect()).collect();
    let mut out = Adjacency { n, bits: vec![false; n * n] };
    let mut depth = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        depth.iter_mut().for_each(|d| *d = usize::MAX);
        depth[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            out.bits[s * n + u] = true;
            if depth[u] == hops {
                continue;
            }
            for &v in &neighbors[u] {
                if depth[v] == usize::MAX {
                    depth[v] = depth[u] + 1;
                    queue.push_back(v);
                }
            }
        }
    }
    if n > 1 {
        let mut r = rng::stream(seed, "augment-random-edges");
        for _ in 0..random_edges {
            let i = r.gen_range(0..n);
            let mut j = r.gen_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            out.set_pair(i, j);
        }
    }
    for &g in globals {
        for j in 0..n {
            out.set_pair(g, j);
        }
    }
    Ok(out)
}

/// Augmentation settings: hop count, random pairs (default ⌈N/20⌉) and
/// the number of global nodes, chosen by highest degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentConfig {
    pub hops: usize,
    pub random_edges: Option<usize>,
    pub global_nodes: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { hops: 2, random_edges: None, global_nodes: 1 }
    }
}

impl AugmentConfig {
    /// No augmentation at all.
    pub fn none() -> Self {
        Self { hops: 1, random_edges: Some(0), global_nodes: 0 }
    }

    pub fn apply(&self, a: &Adjacency, seed: u64) -> Result<Adjacency> {
        let n = a.node_count();
        let r = self.random_edges.unwrap_or(n.div_ceil(20));
        augment_adjacency(a, self.hops, r, &highest_degree_nodes(a, self.global_nodes), seed)
    }
}

/// `count` nodes of highest degree, lower index first on ties.
pub fn highest_degree_nodes(a: &Adjacency, count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..a.node_count()).collect();
    let degrees: Vec<usize> = order.iter().map(|&i| a.degree(i)).collect();
    order.sort_by(|&x, &y| degrees[y].cmp(&degrees[x]).then(x.cmp(&y)));
    order.truncate(count);
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Adjacency {
        Adjacency::from_edges(3, &[[0, 1], [1, 2]]).unwrap()
    }

    #[test]
    fn identity_augmentation() {
        let a = path3();
        assert_eq!(augment_adjacency(&a, 1, 0, &[], 0).unwrap(), a);
    }

    #[test]
    fn two_hops_on_path() {
        let b = augment_adjacency(&path3(), 2, 0, &[], 0).unwrap();
        assert!(b.get(0, 2) && b.get(2, 0));
    }

    #[test]
    fn global_node_row_and_column() {
        let a = Adjacency::from_edges(5, &[[1, 2], [3, 4]]).unwrap();
        let b = augment_adjacency(&a, 1, 0, &[0], 0).unwrap();
        assert!((0..5).all(|j| b.get(0, j) && b.get(j, 0)));
        assert!(!b.get(1, 3));
    }

    #[test]
    fn random_pairs_are_symmetric_and_seeded() {
        let a = Adjacency::from_edges(30, &[]).unwrap();
        let b = augment_adjacency(&a, 1, 10, &[], 4).unwrap();
        assert_eq!(b, augment_adjacency(&a, 1, 10, &[], 4).unwrap());
        let added = b.edges().len();
        assert!(added > 0 && added <= 10);
        assert!(b.has_self_loops());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(augment_adjacency(&path3(), 1, 0, &[3], 0).is_err());
        assert!(Adjacency::from_bits(2, vec![true, true, false, true]).is_err());
        let no_loops = Adjacency::from_bits(2, vec![false; 4]).unwrap();
        assert!(augment_adjacency(&no_loops, 1, 0, &[], 0).is_err());
    }

    #[test]
    fn highest_degree_ties_break_low() {
        let a = Adjacency::from_edges(4, &[[0, 1], [2, 3], [1, 2]]).unwrap();
        assert_eq!(highest_degree_nodes(&a, 2), vec![1, 2]);
    }
}
