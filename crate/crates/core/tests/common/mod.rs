#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use surfeat::cloudmodels::{Architecture, AuxChannel, CloudModelConfig, Task};
use surfeat::featurestore::LabeledCloud;
use surfeat::geometry::{PointCloud, Vec3};
use surfeat::rng;

/// Small widths (at most 8) so every parameter can be finite-differenced.
pub fn miniature(task: Task, architecture: Architecture, aux: AuxChannel, feature_dim: usize) -> CloudModelConfig {
    let mut c = CloudModelConfig::template(task, architecture, aux, feature_dim);
    c.layers = 5;
    c.layer_widths = vec![6, 5];
    c.neighbors = 3;
    c.sa_widths = vec![vec![4, 5], vec![5, 6], vec![6, 8]];
    c.sa_radii = vec![0.8, 1.2];
    c.sa_caps = vec![4, 4];
    c.fp_widths = vec![vec![6], vec![5], vec![4]];
    c.point_widths = vec![6, 5];
    c.global_widths = vec![4];
    c.head_widths = match architecture {
        Architecture::Pointnetpp => vec![6],
        _ => vec![],
    };
    c
}

pub fn all_architectures() -> Vec<(Task, Architecture)> {
    vec![
        (Task::Classify, Architecture::PointnetMod),
        (Task::Segment, Architecture::PointnetMod),
        (Task::Classify, Architecture::Pointnetpp),
        (Task::Segment, Architecture::Pointnetpp),
        (Task::Classify, Architecture::MlpAblation),
    ]
}

fn unit(r: &mut impl Rng) -> Vec3 {
    let v: Vec3 = [r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal)];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Random cloud in the unit ball with normals, features, point labels and an object label.
pub fn random_object(n: usize, feature_dim: usize, seed: u64) -> LabeledCloud {
    let mut r = rng::stream(seed, "test-object");
    let positions: Vec<Vec3> = (0..n)
        .map(|_| {
            let u = unit(&mut r);
            let s = r.gen_range(0.2..1.0);
            [u[0] * s, u[1] * s, u[2] * s]
        })
        .collect();
    let normals: Vec<Vec3> = (0..n).map(|_| unit(&mut r)).collect();
    let features: Vec<Vec<f32>> = (0..n).map(|_| (0..feature_dim).map(|_| r.sample::<f32, _>(StandardNormal)).collect()).collect();
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    LabeledCloud::new(PointCloud::new(positions, Some(normals)).unwrap(), Some(features), Some(labels), Some((seed % 2) as u8)).unwrap()
}

pub fn permute(obj: &LabeledCloud, perm: &[usize]) -> LabeledCloud {
    let cloud = obj.cloud.select(perm);
    let features = obj.features.as_ref().map(|f| perm.iter().map(|&i| f[i].clone()).collect());
    let labels = obj.point_labels.as_ref().map(|l| perm.iter().map(|&i| l[i]).collect());
    LabeledCloud::new(cloud, features, labels, obj.object_label).unwrap()
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng::stream(seed, "test-perm"));
    p
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

/// Move every parameter off its initial value so zero biases cannot place
/// pre-activations exactly on a ReLU kink during finite differencing.
pub fn jitter(params: &mut surfeat::nn::ParamStore<f64>, seed: u64) {
    let mut r = rng::stream(seed, "test-jitter");
    for p in params.iter_mut() {
        for v in p.value.data_mut() {
            *v += 0.1 * r.sample::<f64, _>(StandardNormal);
        }
    }
}
