//! Synthetic stand-ins for encoder features and anatomy point clouds.

use rand::Rng;
use rand_distr::StandardNormal;

use super::LabeledCloud;
use crate::error::{Error, Result};
use crate::geometry::{normalize_cloud, PointCloud, Vec3};
use crate::rng;

fn check_feature_args(dim: usize, signal: f64) -> Result<()> {
    if dim < 4 {
        return Err(Error::invalid_argument(format!("synthetic feature dim must be at least 4, got {dim}")));
    }
    if !(0.0..=1.0).contains(&signal) {
        return Err(Error::invalid_argument(format!("signal must lie in [0, 1], got {signal}")));
    }
    Ok(())
}

fn shifted_noise(rng: &mut impl Rng, class: u8, dim: usize, signal: f64) -> Vec<f32> {
    let informative = (signal * dim as f64).ceil() as usize;
    let shift = if class == 1 { 1.0 } else { -1.0 };
    (0..dim)
        .map(|j| {
            let noise: f64 = rng.sample(StandardNormal);
            (if j < informative { noise + shift } else { noise }) as f32
        })
        .collect()
}

/// Unit Gaussian vectors, one per point, whose first `⌈signal·dim⌉`
/// dimensions are shifted by +1 (class 1) or −1 (class 0).
pub fn synth_features(class: u8, cloud: &PointCloud, dim: usize, signal: f64, seed: u64) -> Result<Vec<Vec<f32>>> {
    check_feature_args(dim, signal)?;
    let mut rng = rng::stream(seed, "synth-features");
    Ok((0..cloud.count()).map(|_| shifted_noise(&mut rng, class, dim, signal)).collect())
}

/// Like [`synth_features`] but with the shift chosen by each point's part label.
pub fn synth_part_features(labels: &[u8], dim: usize, signal: f64, seed: u64) -> Result<Vec<Vec<f32>>> {
    check_feature_args(dim, signal)?;
    let mut rng = rng::stream(seed, "synth-part-features");
    Ok(labels.iter().map(|&l| shifted_noise(&mut rng, l, dim, signal)).collect())
}

/// Size and difficulty of a synthetic cloud benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthCloudSpec {
    pub objects: usize,
    pub points: usize,
    pub dim: usize,
    pub signal: f64,
    pub seed: u64,
}

fn unit_vector(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v: Vec3 = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-9 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Points on a random ellipsoid with outward normals, plus the sphere
/// direction each point came from. The shape distribution is the same for
/// every object, so geometry alone carries no label information.
fn random_ellipsoid(rng: &mut impl Rng, points: usize) -> Result<(PointCloud, Vec<Vec3>)> {
    let axes = [rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0), rng.gen_range(0.6..1.0)];
    let mut positions = Vec::with_capacity(points);
    let mut normals = Vec::with_capacity(points);
    let mut dirs = Vec::with_capacity(points);
    for _ in 0..points {
        let u = unit_vector(rng);
        let jitter = 1.0 + 0.02 * rng.sample::<f64, _>(StandardNormal);
        positions.push([axes[0] * u[0] * jitter, axes[1] * u[1] * jitter, axes[2] * u[2] * jitter]);
        let g = [u[0] / axes[0], u[1] / axes[1], u[2] / axes[2]];
        let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        normals.push([g[0] / gn, g[1] / gn, g[2] / gn]);
        dirs.push(u);
    }
    let cloud = normalize_cloud(&PointCloud::new(positions, Some(normals))?)?;
    Ok((cloud, dirs))
}

/// Balanced two-class objects; only the features carry the class.
pub fn synth_classification_set(spec: &SynthCloudSpec) -> Result<Vec<LabeledCloud>> {
    let mut out = Vec::with_capacity(spec.objects);
    for i in 0..spec.objects {
        let obj_seed = rng::derive_seed(spec.seed, &format!("object/{i}"));
        let mut geo = rng::stream(obj_seed, "geometry");
        let class = (i % 2) as u8;
        let (cloud, _) = random_ellipsoid(&mut geo, spec.points)?;
        let features = synth_features(class, &cloud, spec.dim, spec.signal, obj_seed)?;
        out.push(LabeledCloud::new(cloud, Some(features), None, Some(class))?);
    }
    Ok(out)
}

/// Objects with a spherical-cap part (label 1, about 30% of points) at a
/// random position; only the features reveal which points belong to it.
pub fn synth_segmentation_set(spec: &SynthCloudSpec) -> Result<Vec<LabeledCloud>> {
    let mut out = Vec::with_capacity(spec.objects);
    for i in 0..spec.objects {
        let obj_seed = rng::derive_seed(spec.seed, &format!("object/{i}"));
        let mut geo = rng::stream(obj_seed, "geometry");
        let (cloud, dirs) = random_ellipsoid(&mut geo, spec.points)?;
        let axis = unit_vector(&mut geo);
        let labels: Vec<u8> = dirs
            .iter()
            .map(|d| u8::from(d[0] * axis[0] + d[1] * axis[1] + d[2] * axis[2] > 0.4))
            .collect();
        let features = synth_part_features(&labels, spec.dim, spec.signal, obj_seed)?;
        out.push(LabeledCloud::new(cloud, Some(features), Some(labels), Some((i % 2) as u8))?);
    }
    Ok(out)
}
