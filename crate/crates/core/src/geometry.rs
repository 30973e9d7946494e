//! Point-set kernels: sampling, neighborhood search and normalization.
//!
//! All distances are exact Euclidean distances in `f64`. Ties are always
//! resolved in favour of the lowest index so results are platform independent.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

pub type Vec3 = [f64; 3];

/// Sample sizes used for the point-cloud experiments.
pub const STANDARD_SAMPLE_SIZES: [usize; 3] = [512, 1024, 2048];

#[inline]
pub fn dist2(a: &Vec3, b: &Vec3) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// A finite point set with optional unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("point cloud has non-finite coordinates"));
        }
        if let Some(normals) = &normals {
            if normals.len() != positions.len() {
                return Err(Error::invalid_data(format!(
                    "{} normals for {} points",
                    normals.len(),
                    positions.len()
                )));
            }
            for (i, n) in normals.iter().enumerate() {
                let norm = dist2(n, &[0.0; 3]).sqrt();
                if !norm.is_finite() || (norm - 1.0).abs() > 1e-4 {
                    return Err(Error::invalid_data(format!(
                        "normal {i} has norm {norm}, expected unit length"
                    )));
                }
            }
        }
        Ok(Self { positions, normals })
    }

    pub fn from_positions(positions: Vec<Vec3>) -> Result<Self> {
        Self::new(positions, None)
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn normals(&self) -> Option<&[Vec3]> {
        self.normals.as_deref()
    }

    /// New cloud made of the points at `indices` (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
        }
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Option<Vec<Vec3>>) {
        (self.positions, self.normals)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NeighborMode {
    KNearest(usize),
    RadiusCapped { radius: f64, cap: usize },
}

/// Neighbor lists per center, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodIndex {
    /// Center point indices; for free-standing queries, the query ordinal.
    pub centers: Vec<usize>,
    pub members: Vec<Vec<usize>>,
    /// Euclidean distances parallel to `members`.
    pub distances: Vec<Vec<f64>>,
    pub mode: NeighborMode,
}

fn check_nonempty(positions: &[Vec3]) -> Result<()> {
    if positions.is_empty() {
        return Err(Error::invalid_argument("empty point cloud"));
    }
    Ok(())
}

/// Greedy farthest point sampling over raw positions.
pub fn fps_positions(positions: &[Vec3], k: usize, start: usize) -> Result<Vec<usize>> {
    check_nonempty(positions)?;
    let n = positions.len();
    if k == 0 || k > n {
        return Err(Error::invalid_argument(format!(
            "cannot sample {k} points from {n}"
        )));
    }
    if start >= n {
        return Err(Error::invalid_argument(format!(
            "start index {start} out of range for {n} points"
        )));
    }
    let mut selected = Vec::with_capacity(k);
    let mut min_d2 = vec![f64::INFINITY; n];
    let mut taken = vec![false; n];
    let mut current = start;
    for _ in 0..k {
        selected.push(current);
        taken[current] = true;
        let p = positions[current];
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, q) in positions.iter().enumerate() {
            let d = dist2(&p, q);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
            if !taken[i] && min_d2[i] > best_d2 {
                best_d2 = min_d2[i];
                best = i;
            }
        }
        current = best;
    }
    Ok(selected)
}

/// Farthest point sampling: `k` distinct indices, each maximizing the
/// minimum distance to those already chosen.
pub fn farthest_point_sample(cloud: &PointCloud, k: usize, start: usize) -> Result<Vec<usize>> {
    fps_positions(cloud.positions(), k, start)
}

/// The `k` nearest source points of `query`, as `(index, squared distance)`.
pub(crate) fn nearest_k(positions: &[Vec3], query: &Vec3, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| (i, dist2(p, query)))
        .collect();
    let by_dist = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < all.len() {
        all.select_nth_unstable_by(k, by_dist);
        all.truncate(k);
    }
    all.sort_unstable_by(by_dist);
    all
}

/// k-nearest neighbors of each query among the cloud's points.
pub fn knn(cloud: &PointCloud, queries: &[Vec3], k: usize) -> Result<NeighborhoodIndex> {
    knn_positions(cloud.positions(), queries, k)
}

pub fn knn_positions(positions: &[Vec3], queries: &[Vec3], k: usize) -> Result<NeighborhoodIndex> {
    if k == 0 || k > positions.len() {
        return Err(Error::invalid_argument(format!(
            "k = {k} neighbors requested from {} points",
            positions.len()
        )));
    }
    let mut members = Vec::with_capacity(queries.len());
    let mut distances = Vec::with_capacity(queries.len());
    for q in queries {
        let near = nearest_k(positions, q, k);
        members.push(near.iter().map(|&(i, _)| i).collect());
        distances.push(near.iter().map(|&(_, d)| d.sqrt()).collect());
    }
    Ok(NeighborhoodIndex {
        centers: (0..queries.len()).collect(),
        members,
        distances,
        mode: NeighborMode::KNearest(k),
    })
}

/// Ball query: up to `cap` points within `radius` of each center, nearest first.
///
/// The center always leads its own group, so every group is non-empty.
pub fn radius_group(
    cloud: &PointCloud,
    centers: &[usize],
    radius: f64,
    cap: usize,
) -> Result<NeighborhoodIndex> {
    radius_group_positions(cloud.positions(), centers, radius, cap)
}

pub fn radius_group_positions(
    positions: &[Vec3],
    centers: &[usize],
    radius: f64,
    cap: usize,
) -> Result<NeighborhoodIndex> {
    if !(radius > 0.0) {
        return Err(Error::invalid_argument(format!("radius must be positive, got {radius}")));
    }
    if cap == 0 {
        return Err(Error::invalid_argument("group cap must be at least 1"));
    }
    let r2 = radius * radius;
    let mut members = Vec::with_capacity(centers.len());
    let mut distances = Vec::with_capacity(centers.len());
    for &c in centers {
        let center = positions.get(c).ok_or_else(|| {
            Error::invalid_argument(format!("center {c} out of range for {} points", positions.len()))
        })?;
        let mut inside: Vec<(usize, f64)> = positions
            .iter()
            .enumerate()
            .map(|(i, p)| (i, dist2(p, center)))
            .filter(|&(_, d)| d <= r2)
            .collect();
        inside.sort_unstable_by(|a, b| {
            a.1.total_cmp(&b.1)
                .then((a.0 != c).cmp(&(b.0 != c)))
                .then(a.0.cmp(&b.0))
        });
        inside.truncate(cap);
        members.push(inside.iter().map(|&(i, _)| i).collect());
        distances.push(inside.iter().map(|&(_, d)| d.sqrt()).collect());
    }
    Ok(NeighborhoodIndex {
        centers: centers.to_vec(),
        members,
        distances,
        mode: NeighborMode::RadiusCapped { radius, cap },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Farthest point sampling from a seeded random start.
    #[default]
    Fps,
    /// Uniform random subset.
    Uniform,
}

/// Result of resampling a cloud to a fixed size.
#[derive(Debug, Clone)]
pub struct FixedSample {
    pub cloud: PointCloud,
    pub features: Option<Vec<Vec<f32>>>,
    pub labels: Option<Vec<u8>>,
    /// Source index of each output point.
    pub indices: Vec<usize>,
    /// FPS start index, when FPS was used.
    pub fps_start: Option<usize>,
}

/// Resample to exactly `n` points, carrying per-point features and labels.
///
/// Larger clouds are subsampled (FPS or uniform); smaller clouds keep every
/// point once and are topped up by seeded draws with replacement.
pub fn sample_to_fixed(
    cloud: &PointCloud,
    features: Option<&[Vec<f32>]>,
    labels: Option<&[u8]>,
    n: usize,
    seed: u64,
    mode: SamplingMode,
) -> Result<FixedSample> {
    let count = cloud.count();
    check_nonempty(cloud.positions())?;
    if n == 0 {
        return Err(Error::invalid_argument("sample size must be positive"));
    }
    if features.is_some_and(|f| f.len() != count) || labels.is_some_and(|l| l.len() != count) {
        return Err(Error::invalid_data("per-point attributes do not match point count"));
    }
    let mut rng = rng::stream(seed, "sample-to-fixed");
    let mut fps_start = None;
    let indices = if count >= n {
        match mode {
            SamplingMode::Fps => {
                let start = rng.gen_range(0..count);
                fps_start = Some(start);
                farthest_point_sample(cloud, n, start)?
            }
            SamplingMode::Uniform => rand::seq::index::sample(&mut rng, count, n).into_vec(),
        }
    } else {
        let mut idx: Vec<usize> = (0..count).collect();
        idx.extend((count..n).map(|_| rng.gen_range(0..count)));
        idx.shuffle(&mut rng);
        idx
    };
    Ok(FixedSample {
        cloud: cloud.select(&indices),
        features: features.map(|f| indices.iter().map(|&i| f[i].clone()).collect()),
        labels: labels.map(|l| indices.iter().map(|&i| l[i]).collect()),
        indices,
        fps_start,
    })
}

/// Center at the origin and scale so the farthest point lies on the unit sphere.
pub fn normalize_cloud(cloud: &PointCloud) -> Result<PointCloud> {
    check_nonempty(cloud.positions())?;
    if cloud.positions().iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid_data("point cloud has non-finite coordinates"));
    }
    let n = cloud.count() as f64;
    let mut centroid = [0.0; 3];
    for p in cloud.positions() {
        for a in 0..3 {
            centroid[a] += p[a];
        }
    }
    centroid.iter_mut().for_each(|c| *c /= n);
    let max_r = cloud
        .positions()
        .iter()
        .map(|p| dist2(p, &centroid))
        .fold(0.0_f64, f64::max)
        .sqrt();
    let scale = if max_r > 0.0 { 1.0 / max_r } else { 1.0 };
    let positions = cloud
        .positions()
        .iter()
        .map(|p| {
            [
                (p[0] - centroid[0]) * scale,
                (p[1] - centroid[1]) * scale,
                (p[2] - centroid[2]) * scale,
            ]
        })
        .collect();
    Ok(PointCloud {
        positions,
        normals: cloud.normals.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Exhaustive greedy FPS: recompute every candidate's distance to the
    /// whole selected set at every step.
    fn greedy_oracle(points: &[Vec3], k: usize, start: usize) -> Vec<usize> {
        let mut selected = vec![start];
        while selected.len() < k {
            let mut best = None;
            let mut best_d = -1.0;
            for i in 0..points.len() {
                if selected.contains(&i) {
                    continue;
                }
                let d = selected
                    .iter()
                    .map(|&s| dist2(&points[i], &points[s]))
                    .fold(f64::INFINITY, f64::min);
                if d > best_d {
                    best_d = d;
                    best = Some(i);
                }
            }
            selected.push(best.unwrap());
        }
        selected
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect()
    }

    fn cloud(points: &[Vec3]) -> PointCloud {
        PointCloud::from_positions(points.to_vec()).unwrap()
    }

    #[test]
    fn fps_examples() {
        assert_eq!(farthest_point_sample(&cloud(&[[1.0, 2.0, 3.0]]), 1, 0).unwrap(), vec![0]);
        let square = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(farthest_point_sample(&square, 2, 0).unwrap(), vec![0, 2]);
        let line = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        assert_eq!(farthest_point_sample(&line, 3, 0).unwrap(), vec![0, 2, 1]);
    }

    #[test]
    fn fps_errors() {
        let c = cloud(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(matches!(farthest_point_sample(&c, 3, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(farthest_point_sample(&c, 1, 2), Err(Error::InvalidArgument(_))));
        let empty = PointCloud::from_positions(vec![]).unwrap();
        assert!(matches!(farthest_point_sample(&empty, 1, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fps_matches_greedy_oracle() {
        let mut rng = rng::stream(11, "fps-oracle");
        for _ in 0..100 {
            let n = rng.gen_range(1..=64);
            let pts = random_points(&mut rng, n);
            let k = rng.gen_range(1..=n);
            let start = rng.gen_range(0..n);
            assert_eq!(fps_positions(&pts, k, start).unwrap(), greedy_oracle(&pts, k, start));
        }
    }

    #[test]
    fn fps_rotation_invariant() {
        let mut rng = rng::stream(12, "fps-rot");
        let (s, c) = (0.7_f64.sin(), 0.7_f64.cos());
        for _ in 0..20 {
            let pts = random_points(&mut rng, 40);
            let rotated: Vec<Vec3> = pts.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1], p[2]]).collect();
            assert_eq!(fps_positions(&pts, 12, 3).unwrap(), fps_positions(&rotated, 12, 3).unwrap());
        }
    }

    #[test]
    fn knn_examples() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let c = cloud(&pts);
        let nb = knn(&c, &[[3.0, 0.0, 0.0]], 1).unwrap();
        assert_eq!(nb.members[0], vec![3]);
        assert_eq!(nb.distances[0], vec![0.0]);
        // duplicates at (1,0,0): lower index first
        let nb = knn(&c, &[[1.0, 0.0, 0.0]], 2).unwrap();
        assert_eq!(nb.members[0], vec![1, 2]);
        assert!(matches!(knn(&c, &[[0.0; 3]], 5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn knn_matches_sort_oracle() {
        let mut rng = rng::stream(13, "knn");
        let pts = random_points(&mut rng, 10);
        let queries = random_points(&mut rng, 5);
        let nb = knn(&cloud(&pts), &queries, 3).unwrap();
        for (q, got) in queries.iter().zip(&nb.members) {
            let mut order: Vec<usize> = (0..10).collect();
            order.sort_by(|&a, &b| dist2(&pts[a], q).partial_cmp(&dist2(&pts[b], q)).unwrap().then(a.cmp(&b)));
            assert_eq!(got, &order[..3].to_vec());
        }
    }

    #[test]
    fn radius_group_examples() {
        let pts: Vec<Vec3> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let c = cloud(&pts);
        let g = radius_group(&c, &[0, 2, 4], 0.5, 4).unwrap();
        assert_eq!(g.members, vec![vec![0], vec![2], vec![4]]);
        let g = radius_group(&c, &[2], 1.5, 10).unwrap();
        assert_eq!(g.members, vec![vec![2, 1, 3]]);
        assert!(radius_group(&c, &[0], 0.0, 1).is_err());
        assert!(radius_group(&c, &[0], 1.0, 0).is_err());
    }

    #[test]
    fn radius_group_matches_filter_oracle() {
        let mut rng = rng::stream(14, "radius");
        let pts: Vec<Vec3> = (0..20)
            .map(|_| [rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1), rng.gen_range(0.0..0.1)])
            .collect();
        let g = radius_group(&cloud(&pts), &[0, 7], 0.2, 8).unwrap();
        for (ci, &c) in [0usize, 7].iter().enumerate() {
            let mut within: Vec<usize> = (0..20).filter(|&j| dist2(&pts[j], &pts[c]).sqrt() <= 0.2).collect();
            within.sort_by(|&a, &b| dist2(&pts[a], &pts[c]).partial_cmp(&dist2(&pts[b], &pts[c])).unwrap().then(a.cmp(&b)));
            assert_eq!(g.members[ci], within[..8].to_vec());
        }
    }

    #[test]
    fn sample_to_fixed_cases() {
        let mut rng = rng::stream(15, "sample");
        let pts = random_points(&mut rng, 32);
        let c = cloud(&pts);
        let same = sample_to_fixed(&c, None, None, 32, 1, SamplingMode::Fps).unwrap();
        let mut sorted = same.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..32).collect::<Vec<_>>());

        let half = sample_to_fixed(&c, None, None, 16, 1, SamplingMode::Fps).unwrap();
        assert_eq!(half.indices, greedy_oracle(&pts, 16, half.fps_start.unwrap()));

        let labels: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();
        let up = sample_to_fixed(&c, None, Some(&labels), 64, 1, SamplingMode::Fps).unwrap();
        assert_eq!(up.cloud.count(), 64);
        for i in 0..32 {
            assert!(up.indices.contains(&i));
        }
        for (k, &src) in up.indices.iter().enumerate() {
            assert_eq!(up.labels.as_ref().unwrap()[k], labels[src]);
        }

        let uni = sample_to_fixed(&c, None, None, 10, 3, SamplingMode::Uniform).unwrap();
        let mut u = uni.indices.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 10);
    }

    #[test]
    fn normalize_examples() {
        let a = normalize_cloud(&cloud(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])).unwrap();
        assert_eq!(a.positions(), &[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let b = normalize_cloud(&cloud(&[[2.0, 0.0, 0.0], [4.0, 0.0, 0.0]])).unwrap();
        assert_eq!(b.positions(), &[[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
        let c = normalize_cloud(&cloud(&[[5.0, 5.0, 5.0]])).unwrap();
        assert_eq!(c.positions(), &[[0.0, 0.0, 0.0]]);
        assert!(PointCloud::from_positions(vec![[f64::NAN, 0.0, 0.0]]).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(raw in prop::collection::vec(prop::array::uniform3(-50.0f64..50.0), 1..40)) {
            let once = normalize_cloud(&cloud(&raw)).unwrap();
            let twice = normalize_cloud(&once).unwrap();
            for (a, b) in once.positions().iter().zip(twice.positions()) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn knn_agrees_with_brute_force(raw in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 2..30), k in 1usize..6) {
            let k = k.min(raw.len());
            let nb = knn_positions(&raw, &raw, k).unwrap();
            for (qi, q) in raw.iter().enumerate() {
                let mut all: Vec<(f64, usize)> = raw.iter().enumerate().map(|(i, p)| (dist2(p, q), i)).collect();
                all.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let want: Vec<usize> = all[..k].iter().map(|x| x.1).collect();
                prop_assert_eq!(&nb.members[qi], &want);
            }
        }
    }
}
