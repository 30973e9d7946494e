//! Surface-feature tokens: ingestion types, voxel-to-point assignment,
//! per-object statistics and synthetic feature generation.

mod synth;

use std::collections::HashSet;

pub use synth::{
    synth_classification_set, synth_features, synth_part_features, synth_segmentation_set, SynthCloudSpec,
};

use crate::error::{Error, Result};
use crate::geometry::{dist2, PointCloud, Vec3};

/// Voxels per grid side in the reference feature encoder.
pub const DEFAULT_GRID_SIDE: u32 = 64;

/// Token width produced by the reference feature encoder.
pub const TOKEN_FEATURE_DIM: usize = 1024;

/// A point cloud with whatever per-point and per-object annotations it carries.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub features: Option<Vec<Vec<f32>>>,
    pub point_labels: Option<Vec<u8>>,
    pub object_label: Option<u8>,
}

impl LabeledCloud {
    pub fn new(
        cloud: PointCloud,
        features: Option<Vec<Vec<f32>>>,
        point_labels: Option<Vec<u8>>,
        object_label: Option<u8>,
    ) -> Result<Self> {
        let n = cloud.count();
        if let Some(f) = &features {
            if f.len() != n {
                return Err(Error::invalid_data(format!("{} feature rows for {n} points", f.len())));
            }
            let dim = f.first().map_or(0, Vec::len);
            if f.iter().any(|row| row.len() != dim) {
                return Err(Error::invalid_data("feature rows have differing dimensions"));
            }
            if f.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::invalid_data("non-finite feature value"));
            }
        }
        if point_labels.as_ref().is_some_and(|l| l.len() != n) {
            return Err(Error::invalid_data("point label count differs from point count"));
        }
        Ok(Self { cloud, features, point_labels, object_label })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.as_ref().and_then(|f| f.first()).map_or(0, Vec::len)
    }
}

/// Sparse voxel-indexed feature tokens for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureField {
    grid_side: u32,
    coords: Vec<[u16; 3]>,
    tokens: Vec<Vec<f32>>,
}

impl FeatureField {
    pub fn new(grid_side: u32, coords: Vec<[u16; 3]>, tokens: Vec<Vec<f32>>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid_data("feature field has no active voxels"));
        }
        if coords.len() != tokens.len() {
            return Err(Error::invalid_data(format!(
                "{} voxels but {} tokens",
                coords.len(),
                tokens.len()
            )));
        }
        if let Some(c) = coords.iter().find(|c| c.iter().any(|&v| u32::from(v) >= grid_side)) {
            return Err(Error::invalid_data(format!("voxel {c:?} outside grid of side {grid_side}")));
        }
        let mut seen = HashSet::with_capacity(coords.len());
        if let Some(c) = coords.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::invalid_data(format!("duplicate voxel {c:?}")));
        }
        let dim = tokens[0].len();
        if tokens.iter().any(|t| t.len() != dim) {
            return Err(Error::invalid_data("tokens have differing dimensions"));
        }
        if tokens.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid_data("non-finite token value"));
        }
        Ok(Self { grid_side, coords, tokens })
    }

    pub fn grid_side(&self) -> u32 {
        self.grid_side
    }

    pub fn coords(&self) -> &[[u16; 3]] {
        &self.coords
    }

    pub fn tokens(&self) -> &[Vec<f32>] {
        &self.tokens
    }

    pub fn active_count(&self) -> usize {
        self.coords.len()
    }

    pub fn dim(&self) -> usize {
        self.tokens[0].len()
    }

    /// Center of voxel `i` in grid units.
    pub fn voxel_center(&self, i: usize) -> Vec3 {
        let c = self.coords[i];
        [c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5]
    }
}

/// Map a normalized position (unit-sphere convention) into grid units.
pub fn to_grid(p: &Vec3, grid_side: u32) -> Vec3 {
    let s = grid_side as f64;
    [(p[0] + 1.0) / 2.0 * s, (p[1] + 1.0) / 2.0 * s, (p[2] + 1.0) / 2.0 * s]
}

/// Index of the nearest active voxel center for every point.
pub fn nearest_voxels(field: &FeatureField, cloud: &PointCloud) -> Vec<usize> {
    let centers: Vec<Vec3> = (0..field.active_count()).map(|i| field.voxel_center(i)).collect();
    cloud
        .positions()
        .iter()
        .map(|p| {
            let g = to_grid(p, field.grid_side);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, c) in centers.iter().enumerate() {
                let d = dist2(&g, c);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Give each point the token of its nearest active voxel.
pub fn assign_voxel_features(field: &FeatureField, cloud: &PointCloud) -> Result<Vec<Vec<f32>>> {
    if field.active_count() == 0 {
        return Err(Error::invalid_data("feature field has no active voxels"));
    }
    Ok(nearest_voxels(field, cloud)
        .into_iter()
        .map(|i| field.tokens[i].clone())
        .collect())
}

/// Per-dimension population statistics of one object's features.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ObjectStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Mean, population standard deviation, minimum and maximum per dimension.
pub fn aggregate_stats(features: &[Vec<f32>]) -> Result<ObjectStats> {
    let first = features.first().ok_or_else(|| Error::invalid_data("no points to aggregate"))?;
    let dim = first.len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::invalid_data("feature dimension mismatch"));
    }
    let n = features.len() as f64;
    let mut sum = vec![0.0f64; dim];
    let mut min = vec![f64::INFINITY; dim];
    let mut max = vec![f64::NEG_INFINITY; dim];
    for f in features {
        for (j, &v) in f.iter().enumerate() {
            let v = v as f64;
            sum[j] += v;
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    let mean: Vec<f64> = (0..dim).map(|j| (sum[j] / n).clamp(min[j], max[j])).collect();
    let mut sq = vec![0.0f64; dim];
    for f in features {
        for (j, &v) in f.iter().enumerate() {
            let d = v as f64 - mean[j];
            sq[j] += d * d;
        }
    }
    let std = sq.iter().map(|s| (s / n).sqrt()).collect();
    Ok(ObjectStats { mean, std, min, max })
}

/// Statistics for the points labeled 0 and 1; `None` marks a part with no points.
pub fn aggregate_stats_by_label(features: &[Vec<f32>], labels: &[u8]) -> Result<[Option<ObjectStats>; 2]> {
    if features.len() != labels.len() {
        return Err(Error::invalid_data("label count differs from feature count"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::invalid_data(format!("part label {bad} is not binary")));
    }
    let part = |label: u8| -> Result<Option<ObjectStats>> {
        let members: Vec<Vec<f32>> = features
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == label)
            .map(|(f, _)| f.clone())
            .collect();
        if members.is_empty() {
            Ok(None)
        } else {
            aggregate_stats(&members).map(Some)
        }
    };
    Ok([part(0)?, part(1)?])
}
