//! Per-object input tensors and the neighbourhood structures each
//! architecture needs. Everything here depends only on the geometry, so it is
//! computed once per object and reused across epochs.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::featurestore::LabeledCloud;
use crate::geometry::{dist2, fps_positions, nearest_k, radius_group_positions, Vec3};
use crate::nn::{Groups, Mixing};

use super::config::{Architecture, AuxChannel, CloudModelConfig};

/// Inverse-squared-distance weights over the `k` nearest coarse points of
/// each fine point. A coarse point at zero distance takes the whole weight.
pub fn interpolation_weights(fine: &[Vec3], coarse: &[Vec3], k: usize) -> (Vec<Vec<usize>>, Vec<Vec<f64>>) {
    let k = k.min(coarse.len());
    let mut members = Vec::with_capacity(fine.len());
    let mut weights = Vec::with_capacity(fine.len());
    for q in fine {
        let near = nearest_k(coarse, q, k);
        if near[0].1 == 0.0 {
            members.push(vec![near[0].0]);
            weights.push(vec![1.0]);
            continue;
        }
        let inv: Vec<f64> = near.iter().map(|&(_, d2)| 1.0 / d2).collect();
        let total: f64 = inv.iter().sum();
        members.push(near.iter().map(|&(i, _)| i).collect());
        weights.push(inv.iter().map(|w| w / total).collect());
    }
    (members, weights)
}

/// First FPS seed: the point farthest from the centroid, so sampling does
/// not depend on point order.
fn fps_start(positions: &[Vec3]) -> usize {
    let n = positions.len() as f64;
    let mut c = [0.0; 3];
    for p in positions {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    let mut best = 0;
    for (i, p) in positions.iter().enumerate() {
        if dist2(p, &c) > dist2(&positions[best], &c) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SetLevel {
    pub centers: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Hierarchy {
    pub l1: Vec<Vec3>,
    pub l2: Vec<Vec3>,
    pub sa1: SetLevel,
    pub sa2: SetLevel,
    /// l1 points interpolated from l2, and l0 from l1.
    pub fp2: (Vec<Vec<usize>>, Vec<Vec<f64>>),
    pub fp3: (Vec<Vec<usize>>, Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Structure {
    Knn(Vec<Vec<usize>>),
    Hierarchy(Box<Hierarchy>),
    Pointwise,
}

/// One object ready to be batched.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCloud {
    pub positions: Vec<Vec3>,
    /// Row-major `n × aux_width` auxiliary channel (normals or features).
    pub aux: Vec<f64>,
    pub aux_width: usize,
    pub label: Option<u8>,
    pub point_labels: Option<Vec<u8>>,
    pub(crate) structure: Structure,
}

impl PreparedCloud {
    pub fn count(&self) -> usize {
        self.positions.len()
    }

    /// The same object with its auxiliary channel set to zero.
    pub fn zero_aux(&self) -> Self {
        let mut c = self.clone();
        c.aux.iter_mut().for_each(|v| *v = 0.0);
        c
    }

    pub fn new(config: &CloudModelConfig, object: &LabeledCloud) -> Result<Self> {
        let cloud = &object.cloud;
        let n = cloud.count();
        if n == 0 {
            return Err(Error::invalid_argument("empty point cloud"));
        }
        let aux_width = config.aux_width();
        let aux: Vec<f64> = match config.aux {
            AuxChannel::Normals => cloud
                .normals()
                .ok_or_else(|| Error::invalid_argument("model expects normals but the cloud has none"))?
                .iter()
                .flat_map(|v| v.iter().copied())
                .collect(),
            AuxChannel::Features => {
                let f = object
                    .features
                    .as_ref()
                    .ok_or_else(|| Error::invalid_argument("model expects surface features but the cloud has none"))?;
                if object.feature_dim() != aux_width {
                    return Err(Error::invalid_argument(format!(
                        "model expects {aux_width} feature channels, cloud has {}",
                        object.feature_dim()
                    )));
                }
                f.iter().flat_map(|r| r.iter().map(|&v| v as f64)).collect()
            }
        };
        let positions = cloud.positions().to_vec();
        let structure = match config.architecture {
            Architecture::PointnetMod => Structure::Knn(knn_lists(&positions, config.neighbors)),
            Architecture::Pointnetpp => Structure::Hierarchy(Box::new(hierarchy(&positions, config)?)),
            Architecture::MlpAblation => Structure::Pointwise,
        };
        Ok(Self {
            positions,
            aux,
            aux_width,
            label: object.object_label,
            point_labels: object.point_labels.clone(),
            structure,
        })
    }
}

/// The `k` nearest points of every point, the point itself included.
fn knn_lists(positions: &[Vec3], k: usize) -> Vec<Vec<usize>> {
    let take = k.min(positions.len());
    positions
        .iter()
        .map(|p| nearest_k(positions, p, take).into_iter().map(|(j, _)| j).collect())
        .collect()
}

fn hierarchy(positions: &[Vec3], config: &CloudModelConfig) -> Result<Hierarchy> {
    let n = positions.len();
    let n1 = (n / 4).max(1);
    let n2 = (n / 16).max(1).min(n1);
    let c1 = fps_positions(positions, n1, fps_start(positions))?;
    let l1: Vec<Vec3> = c1.iter().map(|&i| positions[i]).collect();
    let g1 = radius_group_positions(positions, &c1, config.sa_radii[0], config.sa_caps[0])?;
    let c2 = fps_positions(&l1, n2, fps_start(&l1))?;
    let l2: Vec<Vec3> = c2.iter().map(|&i| l1[i]).collect();
    let g2 = radius_group_positions(&l1, &c2, config.sa_radii[1], config.sa_caps[1])?;
    Ok(Hierarchy {
        fp2: interpolation_weights(&l1, &l2, 3),
        fp3: interpolation_weights(positions, &l1, 3),
        l1,
        l2,
        sa1: SetLevel { centers: c1, groups: g1.members },
        sa2: SetLevel { centers: c2, groups: g2.members },
    })
}

/// Stacked objects with all indices offset into the stacked rows.
#[derive(Debug, Clone)]
pub struct Batch {
    pub sizes: Vec<usize>,
    pub coords: Vec<f64>,
    pub aux: Vec<f64>,
    pub aux_width: usize,
    pub labels: Vec<usize>,
    pub point_labels: Vec<usize>,
    pub(crate) knn: Option<Groups>,
    pub(crate) hierarchy: Option<BatchHierarchy>,
}

#[derive(Debug, Clone)]
pub(crate) struct BatchHierarchy {
    pub sa1_members: Arc<Vec<usize>>,
    pub sa1_rel: Vec<f64>,
    pub sa1_groups: Groups,
    pub sa2_members: Arc<Vec<usize>>,
    pub sa2_rel: Vec<f64>,
    pub sa2_groups: Groups,
    /// Absolute l2 positions; the global stage groups every l2 point of an object.
    pub l2_coords: Vec<f64>,
    pub l2_groups: Groups,
    pub fp1: Arc<Mixing>,
    pub fp2: Arc<Mixing>,
    pub fp3: Arc<Mixing>,
}

fn relative<'a>(src: &'a [Vec3], center: &Vec3) -> impl Iterator<Item = f64> + 'a {
    let c = *center;
    src.iter().flat_map(move |p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
}

fn mixing(lists: Vec<Vec<usize>>, weights: Vec<f64>) -> Arc<Mixing> {
    Arc::new(Mixing { groups: Groups::from_lists(&lists), weights })
}

impl Batch {
    pub fn rows(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn objects(&self) -> usize {
        self.sizes.len()
    }

    pub fn new(objects: &[&PreparedCloud]) -> Result<Self> {
        let first = objects.first().ok_or_else(|| Error::invalid_argument("empty batch"))?;
        let aux_width = first.aux_width;
        if objects.iter().any(|o| o.aux_width != aux_width) {
            return Err(Error::invalid_argument("batch mixes auxiliary channel widths"));
        }
        let mut b = Batch {
            sizes: objects.iter().map(|o| o.count()).collect(),
            coords: Vec::new(),
            aux: Vec::new(),
            aux_width,
            labels: Vec::new(),
            point_labels: Vec::new(),
            knn: None,
            hierarchy: None,
        };
        for o in objects {
            b.coords.extend(o.positions.iter().flat_map(|p| p.iter().copied()));
            b.aux.extend_from_slice(&o.aux);
            if let Some(l) = o.label {
                b.labels.push(l as usize);
            }
            if let Some(pl) = &o.point_labels {
                b.point_labels.extend(pl.iter().map(|&l| l as usize));
            }
        }
        match &first.structure {
            Structure::Knn(_) => {
                let mut lists = Vec::with_capacity(b.rows());
                let mut offset = 0;
                for o in objects {
                    let Structure::Knn(nbrs) = &o.structure else {
                        return Err(Error::invalid_argument("batch mixes architectures"));
                    };
                    lists.extend(nbrs.iter().map(|l| l.iter().map(|&j| j + offset).collect::<Vec<_>>()));
                    offset += o.count();
                }
                b.knn = Some(Groups::from_lists(&lists));
            }
            Structure::Hierarchy(_) => b.hierarchy = Some(batch_hierarchy(objects)?),
            Structure::Pointwise => {}
        }
        Ok(b)
    }
}

fn batch_hierarchy(objects: &[&PreparedCloud]) -> Result<BatchHierarchy> {
    let mut sa1_members = Vec::new();
    let mut sa1_rel = Vec::new();
    let mut sa1_sizes = Vec::new();
    let mut sa2_members = Vec::new();
    let mut sa2_rel = Vec::new();
    let mut sa2_sizes = Vec::new();
    let mut l2_coords = Vec::new();
    let mut l2_sizes = Vec::new();
    let (mut fp1_lists, mut fp1_w) = (Vec::new(), Vec::new());
    let (mut fp2_lists, mut fp2_w) = (Vec::new(), Vec::new());
    let (mut fp3_lists, mut fp3_w) = (Vec::new(), Vec::new());
    let (mut off0, mut off1, mut off2) = (0, 0, 0);
    for (obj, o) in objects.iter().enumerate() {
        let Structure::Hierarchy(h) = &o.structure else {
            return Err(Error::invalid_argument("batch mixes architectures"));
        };
        for (c, g) in h.sa1.centers.iter().zip(&h.sa1.groups) {
            let members: Vec<Vec3> = g.iter().map(|&i| o.positions[i]).collect();
            sa1_rel.extend(relative(&members, &o.positions[*c]));
            sa1_members.extend(g.iter().map(|&i| i + off0));
            sa1_sizes.push(g.len());
        }
        for (c, g) in h.sa2.centers.iter().zip(&h.sa2.groups) {
            let members: Vec<Vec3> = g.iter().map(|&i| h.l1[i]).collect();
            sa2_rel.extend(relative(&members, &h.l1[*c]));
            sa2_members.extend(g.iter().map(|&i| i + off1));
            sa2_sizes.push(g.len());
        }
        l2_coords.extend(h.l2.iter().flat_map(|p| p.iter().copied()));
        l2_sizes.push(h.l2.len());
        for _ in 0..h.l2.len() {
            fp1_lists.push(vec![obj]);
            fp1_w.push(1.0);
        }
        for (m, w) in h.fp2.0.iter().zip(&h.fp2.1) {
            fp2_lists.push(m.iter().map(|&i| i + off2).collect::<Vec<_>>());
            fp2_w.extend_from_slice(w);
        }
        for (m, w) in h.fp3.0.iter().zip(&h.fp3.1) {
            fp3_lists.push(m.iter().map(|&i| i + off1).collect::<Vec<_>>());
            fp3_w.extend_from_slice(w);
        }
        off0 += o.count();
        off1 += h.l1.len();
        off2 += h.l2.len();
    }
    Ok(BatchHierarchy {
        sa1_members: Arc::new(sa1_members),
        sa1_rel,
        sa1_groups: Groups::consecutive_sizes(&sa1_sizes),
        sa2_members: Arc::new(sa2_members),
        sa2_rel,
        sa2_groups: Groups::consecutive_sizes(&sa2_sizes),
        l2_coords,
        l2_groups: Groups::consecutive_sizes(&l2_sizes),
        fp1: mixing(fp1_lists, fp1_w),
        fp2: mixing(fp2_lists, fp2_w),
        fp3: mixing(fp3_lists, fp3_w),
    })
}
