//! Acceptance criteria. Each test writes one `PASS`/`FAIL` line straight to
//! stdout (visible without `--nocapture`) and fails when its criterion does.

mod common;

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use surfeat::analytics::{correlation_table, pearson, select_k, tsne_2d, Pca, TsneConfig};
use surfeat::cloudmodels::*;
use surfeat::featurestore::{synth_classification_set, synth_segmentation_set, FeatureField, SynthCloudSpec};
use surfeat::formats::*;
use surfeat::geometry::{fps_positions, knn_positions, Vec3};
use surfeat::harness::*;
use surfeat::meshsim::*;
use surfeat::nn::{gradient_check, AdamW, AdamWConfig, Groups, Mixing, ParamId, ParamStore, Tape, Tensor, Var};
use surfeat::rng;

/// Serializes the long benchmarks so their timings are not inflated by each other.
static HEAVY: Mutex<()> = Mutex::new(());

fn heavy() -> std::sync::MutexGuard<'static, ()> {
    HEAVY.lock().unwrap_or_else(|e| e.into_inner())
}

fn threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!("acceptance {} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "{name}: {detail}");
}

fn gaussian(r: &mut impl Rng) -> f64 {
    r.sample(StandardNormal)
}

// ---------------------------------------------------------------- gradients

fn op_store(seed: u64, shapes: &[(usize, usize)]) -> (ParamStore<f64>, Vec<ParamId>) {
    let mut r = rng::stream(seed, "acceptance-op");
    let mut store = ParamStore::new();
    let ids = shapes
        .iter()
        .enumerate()
        .map(|(k, &(rows, cols))| {
            let data = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
            store.add(&format!("p{k}"), Tensor::matrix(rows, cols, data).unwrap()).unwrap()
        })
        .collect();
    (store, ids)
}

type OpFn = Box<dyn Fn(&mut Tape<'_, f64>, &[Var]) -> surfeat::Result<Var>>;

/// Worst relative error of `Σ w ⊙ op(params)` with fixed random `w`.
fn op_error(seed: u64, shapes: &[(usize, usize)], op: &OpFn) -> f64 {
    let (mut store, ids) = op_store(seed, shapes);
    let report = gradient_check(
        &mut store,
        |t| {
            let vars: Vec<Var> = ids.iter().map(|&id| t.param(id)).collect();
            let out = op(t, &vars)?;
            let len = t.value(out).len();
            let mut r = rng::stream(seed, "acceptance-projection");
            let w: Vec<f64> = (0..len).map(|_| r.gen_range(-1.0..1.0)).collect();
            t.weighted_sum(out, &w)
        },
        1e-4,
    )
    .unwrap();
    report.max_rel_error
}

fn graph(seed: u64, n: usize, p: f64) -> Adjacency {
    let mut r = rng::stream(seed, "acceptance-graph");
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.gen_bool(p) {
                edges.push([i as u32, j as u32]);
            }
        }
    }
    Adjacency::from_edges(n, &edges).unwrap()
}

fn matrix(seed: u64, rows: usize, cols: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, "acceptance-matrix");
    (0..rows * cols).map(|_| gaussian(&mut r)).collect()
}

fn weighted<'a>(t: &mut Tape<'a, f64>, out: Var) -> surfeat::Result<Var> {
    let len = t.value(out).len();
    let w: Vec<f64> = (0..len).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
    t.weighted_sum(out, &w)
}

#[test]
fn gradient_integrity() {
    let start = Instant::now();
    let mut worst: Vec<(String, f64)> = Vec::new();

    let mask: Vec<bool> = (0..16).map(|k| k % 5 != 1 || k % 4 == k / 4).collect();
    let groups = Groups::from_lists(&[vec![0, 2, 3], vec![1], vec![4, 0]]);
    let mixing = Arc::new(Mixing { groups: Groups::from_lists(&[vec![0, 1, 2], vec![4]]), weights: vec![0.2, 0.3, 0.5, 1.0] });
    let ops: Vec<(&str, Vec<(usize, usize)>, OpFn)> = vec![
        ("linear", vec![(5, 4), (4, 3), (1, 3)], Box::new(|t, v| t.linear(v[0], v[1], Some(v[2])))),
        ("matmul", vec![(5, 4), (4, 3)], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("matmul_nt", vec![(5, 4), (3, 4)], Box::new(|t, v| t.matmul_nt(v[0], v[1]))),
        ("add", vec![(3, 4), (3, 4)], Box::new(|t, v| t.add(v[0], v[1]))),
        ("add_row", vec![(3, 4), (1, 4)], Box::new(|t, v| t.add_row(v[0], v[1]))),
        ("mul", vec![(3, 4), (3, 4)], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("scale", vec![(3, 4)], Box::new(|t, v| Ok(t.scale(v[0], -1.7)))),
        ("relu", vec![(4, 4)], Box::new(|t, v| Ok(t.relu(v[0])))),
        ("gelu", vec![(4, 4)], Box::new(|t, v| Ok(t.gelu(v[0])))),
        ("concat_cols", vec![(3, 4), (3, 2)], Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]]))),
        ("slice_cols", vec![(3, 5)], Box::new(|t, v| t.slice_cols(v[0], 1, 3))),
        ("gather_rows", vec![(5, 3)], Box::new(|t, v| t.gather_rows(v[0], Arc::new(vec![4, 0, 0, 1])))),
        ("group_max", vec![(5, 3)], Box::new(move |t, v| t.group_max(v[0], &groups))),
        ("mix_rows", vec![(5, 3)], Box::new(move |t, v| t.mix_rows(v[0], mixing.clone()))),
        ("masked_softmax", vec![(4, 4)], Box::new(move |t, v| t.masked_softmax(v[0], &mask))),
        ("rmsnorm", vec![(3, 5), (1, 5)], Box::new(|t, v| t.rmsnorm(v[0], v[1], 1e-6))),
        ("cross_entropy", vec![(4, 3)], Box::new(|t, v| t.cross_entropy(v[0], &[0, 2, 1, 2]))),
        ("mse", vec![(3, 2)], Box::new(|t, v| t.mse(v[0], &[0.1, -0.4, 0.3, 0.0, 1.2, -1.0]))),
    ];
    for (name, shapes, op) in &ops {
        let e = (0..3).map(|s| op_error(s, shapes, op)).fold(0.0, f64::max);
        worst.push((format!("op {name}"), e));
    }

    for (task, arch) in all_architectures() {
        for aux in [AuxChannel::Features, AuxChannel::Normals] {
            if arch == Architecture::MlpAblation && aux == AuxChannel::Normals {
                continue;
            }
            let dim = if aux == AuxChannel::Features { 4 } else { 0 };
            let model = CloudModel::new(&miniature(task, arch, aux, dim), 8).unwrap();
            let objs: Vec<PreparedCloud> = (0..2).map(|s| model.prepare(&random_object(8, 4, s + 40)).unwrap()).collect();
            let batch = Batch::new(&objs.iter().collect::<Vec<_>>()).unwrap();
            let mut params = model.params.cast::<f64>();
            jitter(&mut params, 1);
            let r = gradient_check(&mut params, |t| model.net.loss(t, &batch), 1e-4).unwrap();
            worst.push((format!("{task} {arch} {aux}"), r.max_rel_error));
        }
    }

    let x = matrix(1, 6, 4);
    let a = graph(2, 6, 0.4);
    for mode in [MaskMode::Additive, MaskMode::Product] {
        let config = SurrogateConfig { size: SizeClass::S, latent: 8, blocks: 2, heads: 2, input_width: 4, output_width: 2, mask_mode: mode };
        let mut store = ParamStore::<f64>::new();
        let net = Surrogate::build(&config, &mut store, 5).unwrap();
        jitter(&mut store, 4);
        let r = gradient_check(
            &mut store,
            |t| {
                let xv = t.input(6, 4, x.clone())?;
                let y = net.forward(t, xv, &a)?;
                weighted(t, y)
            },
            1e-4,
        )
        .unwrap();
        worst.push((format!("surrogate {}", mode.as_str()), r.max_rel_error));
    }

    // the orthogonality penalty has a closed-form gradient; compare it too
    let tm = AlignmentMatrix::new(3, 3, matrix(9, 3, 3)).unwrap();
    let g = tnet_regularizer_grad(&tm).unwrap();
    let mut e = 0.0f64;
    for k in 0..9 {
        let shifted = |h: f64| {
            let mut d = matrix(9, 3, 3);
            d[k] += h;
            tnet_regularizer(&AlignmentMatrix::new(3, 3, d).unwrap()).unwrap()
        };
        let numeric = (shifted(1e-5) - shifted(-1e-5)) / 2e-5;
        e = e.max((g[k] - numeric).abs() / g[k].abs().max(numeric.abs()).max(1e-6));
    }
    worst.push(("t-net regularizer".into(), e));

    let elapsed = start.elapsed().as_secs_f64();
    let (name, max) = worst.iter().cloned().fold((String::new(), 0.0), |acc, w| if w.1 > acc.1 { w } else { acc });
    verdict(
        "gradient integrity",
        max < 1e-4 && elapsed < 60.0,
        &format!("{} checks, max rel error {max:.2e} ({name}), {elapsed:.1}s", worst.len()),
    );
}

// ----------------------------------------------------------------- symmetry

#[test]
fn symmetry_suite() {
    let mut invariant = 0.0f32;
    let mut equivariant = 0.0f32;
    for (task, arch) in all_architectures() {
        let config = CloudModelConfig::template(task, arch, AuxChannel::Features, 8);
        let model = CloudModel::new(&config, 11).unwrap();
        for cloud in 0..20 {
            let obj = random_object(48, 8, 1000 + cloud);
            let base = model.logits(&model.prepare(&obj).unwrap()).unwrap();
            for p in 0..10 {
                let perm = random_permutation(48, cloud * 100 + p);
                let out = model.logits(&model.prepare(&permute(&obj, &perm)).unwrap()).unwrap();
                match task {
                    Task::Classify => invariant = invariant.max(max_abs_diff(&base, &out)),
                    Task::Segment => {
                        let expected: Vec<f32> = perm.iter().flat_map(|&i| base[i * 2..i * 2 + 2].to_vec()).collect();
                        equivariant = equivariant.max(max_abs_diff(&expected, &out));
                    }
                }
            }
        }
    }
    // graph blocks: permuting nodes and adjacency permutes the output rows
    let mut graph_drift = 0.0f64;
    let n = 12;
    let config = SurrogateConfig { size: SizeClass::S, latent: 16, blocks: 2, heads: 4, input_width: 5, output_width: 2, mask_mode: MaskMode::Additive };
    let mut store = ParamStore::<f64>::new();
    let net = Surrogate::build(&config, &mut store, 3).unwrap();
    let forward = |x: &[f64], a: &Adjacency| {
        let mut t = Tape::new(&store);
        let xv = t.input(n, 5, x.to_vec()).unwrap();
        let y = net.forward(&mut t, xv, a).unwrap();
        t.value(y).to_vec()
    };
    for g in 0..20u64 {
        let a = graph(g, n, 0.3);
        let x = matrix(g + 50, n, 5);
        let base = forward(&x, &a);
        for p in 0..10u64 {
            let perm = random_permutation(n, g * 100 + p);
            let bits = (0..n * n).map(|k| a.get(perm[k / n], perm[k % n])).collect();
            let pa = Adjacency::from_bits(n, bits).unwrap();
            let px: Vec<f64> = perm.iter().flat_map(|&i| x[i * 5..i * 5 + 5].to_vec()).collect();
            let out = forward(&px, &pa);
            for (r, &i) in perm.iter().enumerate() {
                for c in 0..2 {
                    graph_drift = graph_drift.max((out[r * 2 + c] - base[i * 2 + c]).abs());
                }
            }
        }
    }
    verdict(
        "symmetry",
        invariant < 1e-6 && equivariant < 1e-5 && graph_drift < 1e-5,
        &format!("classifier drift {invariant:.1e}, segmenter drift {equivariant:.1e}, graph block drift {graph_drift:.1e}"),
    );
}

// ------------------------------------------------------------------ oracles

/// Exhaustive greedy: recompute every point's distance to the whole selected set.
fn fps_oracle(p: &[Vec3], k: usize, start: usize) -> Vec<usize> {
    let d2 = |a: &Vec3, b: &Vec3| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    let mut sel = vec![start];
    while sel.len() < k {
        let next = (0..p.len())
            .filter(|i| !sel.contains(i))
            .max_by(|&a, &b| {
                let da = sel.iter().map(|&s| d2(&p[a], &p[s])).fold(f64::INFINITY, f64::min);
                let db = sel.iter().map(|&s| d2(&p[b], &p[s])).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .unwrap();
        sel.push(next);
    }
    sel
}

fn random_points(r: &mut impl Rng, n: usize) -> Vec<Vec3> {
    (0..n).map(|_| [gaussian(r), gaussian(r), gaussian(r)]).collect()
}

/// Brute-force counts via set operations, independent of the confusion-matrix code.
fn set_metrics(p: &[u8], t: &[u8]) -> ([Option<f64>; 2], [Option<f64>; 2], [Option<f64>; 2], f64) {
    let set = |v: &[u8], c: u8| -> HashSet<usize> { (0..v.len()).filter(|&i| v[i] == c).collect() };
    let (mut iou, mut dsc, mut acc) = ([None; 2], [None; 2], [None; 2]);
    for c in 0..2u8 {
        let (ps, ts) = (set(p, c), set(t, c));
        let inter = ps.intersection(&ts).count() as f64;
        let union = ps.union(&ts).count() as f64;
        if union > 0.0 {
            iou[c as usize] = Some(inter / union);
            dsc[c as usize] = Some(2.0 * inter / (ps.len() + ts.len()) as f64);
        }
        if !ts.is_empty() {
            acc[c as usize] = Some(inter / ts.len() as f64);
        }
    }
    let (pp, tp) = (set(p, 1), set(t, 1));
    let hits = pp.intersection(&tp).count() as f64;
    let precision = if pp.is_empty() { 0.0 } else { hits / pp.len() as f64 };
    let recall = if tp.is_empty() { 0.0 } else { hits / tp.len() as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    (iou, dsc, acc, f1)
}

/// Newton's method on the mean logistic loss in the original coordinates.
fn newton_logistic(x: &[Vec<f64>], y: &[u8]) -> Vec<f64> {
    let (n, m) = (x.len(), x[0].len() + 1);
    let design = DMatrix::from_fn(n, m, |i, j| if j + 1 == m { 1.0 } else { x[i][j] });
    let target = DVector::from_fn(n, |i, _| y[i] as f64);
    let mut beta = DVector::zeros(m);
    for _ in 0..50 {
        let p = (&design * &beta).map(|z| 1.0 / (1.0 + (-z).exp()));
        let grad = design.transpose() * (&p - &target);
        let wdiag = p.map(|v| v * (1.0 - v));
        let hess = design.transpose() * DMatrix::from_diagonal(&wdiag) * &design;
        beta -= hess.lu().solve(&grad).unwrap();
    }
    beta.iter().copied().collect()
}

#[test]
fn oracle_equivalence() {
    let mut r = rng::stream(7, "acceptance-oracles");
    let mut failures = Vec::new();

    for trial in 0..100 {
        let n = r.gen_range(2..=64);
        let p = random_points(&mut r, n);
        let k = r.gen_range(1..=n);
        let start = r.gen_range(0..n);
        if fps_positions(&p, k, start).unwrap() != fps_oracle(&p, k, start) {
            failures.push(format!("fps trial {trial}"));
        }
    }

    for trial in 0..50 {
        let n = r.gen_range(1..=80);
        let p = random_points(&mut r, n);
        let q = random_points(&mut r, 5);
        let k = r.gen_range(1..=n);
        let got = knn_positions(&p, &q, k).unwrap();
        for (qi, query) in q.iter().enumerate() {
            let mut all: Vec<(f64, usize)> =
                p.iter().enumerate().map(|(i, x)| ((0..3).map(|c| (x[c] - query[c]).powi(2)).sum(), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..k].iter().map(|e| e.1).collect();
            if got.members[qi] != want {
                failures.push(format!("knn trial {trial}"));
            }
        }
    }

    let mut pca_err = 0.0f64;
    for trial in 0..20 {
        let (n, m) = (40, 6);
        let mix = matrix(trial, m, m);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z: Vec<f64> = (0..m).map(|j| gaussian(&mut r) * (m - j) as f64).collect();
                (0..m).map(|c| (0..m).map(|l| z[l] * mix[l * m + c]).sum()).collect()
            })
            .collect();
        let pca = Pca::fit(&x, 3).unwrap();
        let mean: Vec<f64> = (0..m).map(|j| x.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let cov = DMatrix::from_fn(m, m, |a, b| x.iter().map(|v| (v[a] - mean[a]) * (v[b] - mean[b])).sum::<f64>() / n as f64);
        let eig = SymmetricEigen::new(cov.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (c, &o) in order.iter().take(3).enumerate() {
            let v = eig.eigenvectors.column(o);
            let dot: f64 = (0..m).map(|j| v[j] * pca.components[c][j]).sum();
            let sign = dot.signum();
            for j in 0..m {
                pca_err = pca_err.max((pca.components[c][j] - sign * v[j]).abs());
            }
            let rel = (pca.variances[c] - eig.eigenvalues[o]).abs() / eig.eigenvalues[o];
            pca_err = pca_err.max(rel);
        }
    }
    if pca_err > 1e-6 {
        failures.push(format!("pca error {pca_err:.2e}"));
    }

    let mut att_err = 0.0f64;
    for seed in 0..10 {
        let (n, d, heads) = (7, 8, 2);
        let mut store = ParamStore::<f64>::new();
        let att = MaskedAttention::new(&mut store, "att", d, heads, MaskMode::Additive, seed).unwrap();
        let a = graph(seed + 300, n, 0.35);
        let z = matrix(seed + 400, n, d);
        let mut t = Tape::new(&store);
        let zv = t.input(n, d, z.clone()).unwrap();
        let out = att.forward(&mut t, zv, &a).unwrap();
        let got = t.value(out).to_vec();
        let w = |name: &str| store.by_name(name).unwrap().value.data().to_vec();
        let (wq, wk, wv, wo, bo) = (w("att.q"), w("att.k"), w("att.v"), w("att.out.weight"), w("att.out.bias"));
        let proj = |m: &[f64], i: usize, c: usize| (0..d).map(|l| z[i * d + l] * m[l * d + c]).sum::<f64>();
        let dh = d / heads;
        let mut joined = vec![0.0; n * d];
        for h in 0..heads {
            for i in 0..n {
                let nbrs: Vec<usize> = (0..n).filter(|&j| a.get(i, j)).collect();
                let s: Vec<f64> = nbrs
                    .iter()
                    .map(|&j| (0..dh).map(|c| proj(&wq, i, h * dh + c) * proj(&wk, j, h * dh + c)).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let total: f64 = s.iter().map(|v| v.exp()).sum();
                for (sv, &j) in s.iter().zip(&nbrs) {
                    for c in 0..dh {
                        joined[i * d + h * dh + c] += sv.exp() / total * proj(&wv, j, h * dh + c);
                    }
                }
            }
        }
        for i in 0..n {
            for c in 0..d {
                let want = bo[c] + (0..d).map(|l| joined[i * d + l] * wo[l * d + c]).sum::<f64>();
                att_err = att_err.max((got[i * d + c] - want).abs());
            }
        }
    }
    if att_err > 1e-6 {
        failures.push(format!("attention error {att_err:.2e}"));
    }

    let mut metric_mismatch = 0;
    for _ in 0..1000 {
        let n = r.gen_range(1..40);
        let bias = r.gen_range(0.0..1.0);
        let p: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(bias))).collect();
        let t: Vec<u8> = (0..n).map(|_| u8::from(r.gen_bool(0.5))).collect();
        let (iou, dsc, acc, f1) = set_metrics(&p, &t);
        let c = metrics_classification(&p, &t).unwrap();
        let s = metrics_segmentation(&[(&p, &t)]).unwrap();
        if s.iou != iou || s.dsc != dsc || [c.accuracy_v, c.accuracy_a] != acc || c.f1 != f1 {
            metric_mismatch += 1;
        }
    }
    if metric_mismatch > 0 {
        failures.push(format!("{metric_mismatch} metric mismatches"));
    }

    let mut logistic_err = 0.0f64;
    for seed in 0..5u64 {
        let mut lr = rng::stream(seed, "acceptance-logistic");
        let x: Vec<Vec<f64>> = (0..120).map(|_| (0..3).map(|j| gaussian(&mut lr) * (1.0 + j as f64) + 0.5).collect()).collect();
        let y: Vec<u8> = x
            .iter()
            .map(|v| {
                let z = 0.8 * v[0] - 0.4 * v[1] + 0.2 * v[2] - 0.3;
                u8::from(lr.gen_range(0.0..1.0) < 1.0 / (1.0 + (-z).exp()))
            })
            .collect();
        let fit = LogisticRegression::fit(&x, &y).unwrap();
        let beta = newton_logistic(&x, &y);
        for j in 0..3 {
            logistic_err = logistic_err.max((fit.weights[j] - beta[j]).abs());
        }
        logistic_err = logistic_err.max((fit.bias - beta[3]).abs());
    }
    if logistic_err > 1e-3 {
        failures.push(format!("logistic error {logistic_err:.2e}"));
    }

    verdict(
        "oracle equivalence",
        failures.is_empty(),
        &if failures.is_empty() {
            format!("fps 100/100, knn 250/250, pca {pca_err:.1e}, attention {att_err:.1e}, metrics 1000/1000, logistic {logistic_err:.1e}")
        } else {
            failures.join("; ")
        },
    );
}

// ----------------------------------------------------------------- locality

#[test]
fn attention_locality() {
    let mut leaked = 0usize;
    let mut row_err = 0.0f64;
    for g in 0..50u64 {
        let n = 6 + (g as usize % 20);
        let a = graph(g + 500, n, 0.15);
        let mut store = ParamStore::<f64>::new();
        let att = MaskedAttention::new(&mut store, "att", 16, 4, MaskMode::default(), g).unwrap();
        let mut t = Tape::new(&store);
        let z = t.input(n, 16, matrix(g, n, 16)).unwrap();
        let (_, weights) = att.forward_with_weights(&mut t, z, &a).unwrap();
        for w in weights {
            let w = t.value(w);
            for i in 0..n {
                leaked += (0..n).filter(|&j| !a.get(i, j) && w[i * n + j] != 0.0).count();
                row_err = row_err.max((w[i * n..(i + 1) * n].iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    verdict(
        "locality",
        leaked == 0 && row_err < 1e-6,
        &format!("50 graphs, {leaked} non-zero weights on non-adjacent pairs, max row-sum error {row_err:.1e}"),
    );
}

// --------------------------------------------------------------- benchmarks

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn table1_classification_effect() {
    let _guard = heavy();
    let start = Instant::now();
    let spec = SynthCloudSpec { objects: 200, points: 128, dim: 16, signal: 0.8, seed: 1 };
    let data = synth_classification_set(&spec).unwrap();
    let seeds = [0, 1, 2, 3, 4];
    let mut accuracy = Vec::new();
    for aux in [AuxChannel::Features, AuxChannel::Normals] {
        let config = CloudModelConfig::template(Task::Classify, Architecture::PointnetMod, aux, 16);
        let trainer = CloudTrainer::new(data.clone(), config, TrainConfig::standard(Task::Classify, aux));
        let report = require_runs(run_repeated(&trainer, &format!("pointnet-mod, {aux}"), &seeds, threads()).unwrap()).unwrap();
        assert!(!report.partial());
        // stratified 20/20 test sets, so overall accuracy is the mean of the class accuracies
        let acc: Vec<f64> = report.runs.iter().map(|r| (r.accuracy_v.unwrap() + r.accuracy_a.unwrap()) / 2.0).collect();
        accuracy.push(acc);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let (feat, base) = (mean(&accuracy[0]), mean(&accuracy[1]));
    let min_feat = accuracy[0].iter().copied().fold(1.0, f64::min);
    verdict(
        "table 1 directional",
        min_feat >= 0.95 && feat - base >= 0.05 && elapsed < 600.0,
        &format!(
            "features {:.1}% (min {:.1}%, 20 epochs) vs normals {:.1}% (100 epochs), gap {:.1} points, {elapsed:.0}s on {} thread(s)",
            100.0 * feat,
            100.0 * min_feat,
            100.0 * base,
            100.0 * (feat - base),
            threads()
        ),
    );
}

#[test]
fn table2_segmentation_effect() {
    let _guard = heavy();
    let start = Instant::now();
    let spec = SynthCloudSpec { objects: 100, points: 128, dim: 16, signal: 0.8, seed: 1 };
    let data = synth_segmentation_set(&spec).unwrap();
    let mut iou = Vec::new();
    for arch in [Architecture::PointnetMod, Architecture::Pointnetpp] {
        for aux in [AuxChannel::Features, AuxChannel::Normals] {
            let config = CloudModelConfig::template(Task::Segment, arch, aux, 16);
            let trainer = CloudTrainer::new(data.clone(), config, TrainConfig::standard(Task::Segment, aux));
            let report = require_runs(run_repeated(&trainer, &format!("{arch}, {aux}"), &[0], threads()).unwrap()).unwrap();
            iou.push(report.get("iou_a").unwrap().mean);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = iou[0] >= 0.9 && iou[2] >= 0.9 && iou[0] > iou[1] && iou[2] > iou[3] && elapsed < 900.0;
    verdict(
        "table 2 directional",
        pass,
        &format!(
            "IoU A pointnet-mod {:.3} vs {:.3} without features, pointnetpp {:.3} vs {:.3}, {elapsed:.0}s",
            iou[0], iou[1], iou[2], iou[3]
        ),
    );
}

#[test]
fn table3_simulation_effect() {
    let _guard = heavy();
    let start = Instant::now();
    let seeds = [0, 1, 2, 3, 4];
    let mut outcomes = Vec::new();
    for with_features in [true, false] {
        let bench = RolloutBenchmark { with_features, ..RolloutBenchmark::default() };
        assert!(bench.config.steps <= 500);
        let (report, runs) = bench.run(if with_features { "S/1 + feats" } else { "S/1" }, &seeds, threads());
        assert!(!report.partial(), "{:?}", report.failures);
        outcomes.push(runs);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let cut = |o: &RolloutOutcome| 1.0 - o.rmse / o.initial_rmse;
    let min_cut = outcomes.iter().flatten().map(cut).fold(1.0, f64::min);
    let with: Vec<f64> = outcomes[0].iter().map(|o| o.rmse).collect();
    let without: Vec<f64> = outcomes[1].iter().map(|o| o.rmse).collect();
    verdict(
        "table 3 directional",
        min_cut >= 0.5 && mean(&with) <= mean(&without) && elapsed < 600.0,
        &format!(
            "500 steps, min RMSE cut {:.0}%, mean RMSE {:.4} with features vs {:.4} without ({:.0}% lower), {elapsed:.0}s",
            100.0 * min_cut,
            mean(&with),
            mean(&without),
            100.0 * (1.0 - mean(&with) / mean(&without))
        ),
    );
}

// ---------------------------------------------------------------- analytics

fn blobs(seed: u64, centers: &[Vec<f64>], per: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng::stream(seed, "acceptance-blobs");
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per {
            x.push(center.iter().map(|v| v + sigma * gaussian(&mut r)).collect());
            y.push(c);
        }
    }
    (x, y)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[test]
fn analytics_recovery() {
    let centers = vec![vec![0.0, 0.0, 0.0], vec![8.0, 0.0, 0.0], vec![0.0, 8.0, 0.0], vec![0.0, 0.0, 8.0]];
    let recovered = (0..10u64).filter(|&s| select_k(&blobs(s, &centers, 25, 1.0).0, 2..=8, s).unwrap().best.k == 4).count();

    let (x, y) = blobs(3, &[vec![0.0; 5], {
        let mut c = vec![0.0; 5];
        c[0] = 10.0;
        c
    }], 30, 1.0);
    let t = tsne_2d(&x, &TsneConfig { perplexity: 15.0, iterations: 1000, seed: 3 }).unwrap();
    let p = &t.projection.coords;
    let (mut within, mut between) = (Vec::new(), Vec::new());
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            let d = ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt();
            if y[i] == y[j] {
                within.push(d);
            } else {
                between.push(d);
            }
        }
    }
    let ratio = median(between) / median(within);

    // r = Σ(x−x̄)(y−ȳ) / √(Σ(x−x̄)² Σ(y−ȳ)²), by hand: x̄ = 2.5, ȳ = 5.5 for [1,2,3,4] and [2,4,5,11];
    // cross sum 14, Σ(x−x̄)² = 5, Σ(y−ȳ)² = 45 → r = 14 / 15
    let hand = 14.0 / 15.0;
    let table = correlation_table(
        &[("f".into(), vec![1.0, 2.0, 3.0, 4.0]), ("g".into(), vec![4.0, 3.0, 2.0, 1.0])],
        &[("m".into(), vec![2.0, 4.0, 5.0, 11.0]), ("flat".into(), vec![1.0; 4])],
    )
    .unwrap();
    let corr_err = (table.r[0][0].unwrap() - hand).abs().max((table.r[1][0].unwrap() + hand).abs());
    let pearson_err = (pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 11.0]).unwrap() - hand).abs();
    let constant_undefined = table.r[0][1].is_none();

    verdict(
        "analytics recovery",
        recovered == 10 && ratio > 3.0 && corr_err < 1e-10 && pearson_err < 1e-10 && constant_undefined,
        &format!("select_k 4 blobs {recovered}/10, t-SNE between/within median ratio {ratio:.1}, Pearson error {:.1e}", corr_err.max(pearson_err)),
    );
}

// -------------------------------------------------------------- determinism

fn surfeat(args: &[&str], out: &Path) {
    let status = Command::new(env!("CARGO_BIN_EXE_surfeat"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    let mesh = d.join("mesh");
    let ds = data.to_str().unwrap();
    let ms = mesh.to_str().unwrap();
    surfeat(&["synth", "segment", "--objects", "20", "--points", "64", "--dim", "8", "--seed", "4"], &data);
    surfeat(&["synth", "mesh", "--sequences", "5", "--nodes", "30", "--steps", "4", "--seed", "4"], &mesh);

    let runs: Vec<(&str, Vec<&str>, &str)> = vec![
        ("classify", vec!["train", "--task", "classify", "--data", ds, "--budget", "3", "--seed", "2"], "metrics.csv"),
        ("segment", vec!["train", "--task", "segment", "--data", ds, "--arch", "pointnetpp", "--budget", "1", "--seed", "2"], "metrics.csv"),
        ("rollout", vec!["train", "--task", "rollout", "--data", ms, "--budget", "20", "--seed", "2"], "metrics.csv"),
        ("pca", vec!["analyze", "pca", "--input", ds], "projection.csv"),
        ("tsne", vec!["analyze", "tsne", "--input", ds, "--perplexity", "5", "--iterations", "300", "--seed", "2"], "projection.csv"),
        ("cluster", vec!["analyze", "cluster", "--input", ds, "--max-k", "5", "--seed", "2"], "clusters.csv"),
    ];
    let mut identical = 0;
    let mut mismatched = Vec::new();
    for (name, args, file) in &runs {
        let a = d.join(format!("{name}-a"));
        let b = d.join(format!("{name}-b"));
        surfeat(args, &a);
        surfeat(args, &b);
        let mut same = read(&a.join(file)) == read(&b.join(file));
        if args[0] == "train" {
            same &= read(&a.join("model.sfck")) == read(&b.join("model.sfck"));
            let m = RunManifest::from_json(&String::from_utf8(read(&a.join("manifest.json"))).unwrap()).unwrap();
            same &= m.metrics.is_some();
        }
        if same {
            identical += 1;
        } else {
            mismatched.push(*name);
        }
    }
    verdict(
        "determinism",
        mismatched.is_empty(),
        &format!("{identical}/{} commands reproduce byte-identical metric CSVs and checkpoints {mismatched:?}", runs.len()),
    );
}

// ------------------------------------------------------------------ formats

#[test]
fn format_round_trip() {
    let mut results = Vec::new();
    let obj = random_object(50, 6, 3);
    let a = write_sfpc(&obj).unwrap();
    results.push(("SFPC", write_sfpc(&read_sfpc(&a).unwrap()).unwrap() == a));

    let mut r = rng::stream(5, "acceptance-voxels");
    let coords: Vec<[u16; 3]> = (0..40u16).map(|i| [i, i * 2 % 64, 63 - i]).collect();
    let tokens: Vec<Vec<f32>> = (0..40).map(|_| (0..8).map(|_| r.sample::<f32, _>(StandardNormal)).collect()).collect();
    let field = FeatureField::new(64, coords, tokens).unwrap();
    let a = write_sfvx(&field).unwrap();
    results.push(("SFVX", write_sfvx(&read_sfvx(&a).unwrap()).unwrap() == a));

    let seq = synth_mesh_sequence(25, 3, 0.03, 2).unwrap();
    let a = write_sfms(&seq).unwrap();
    results.push(("SFMS", write_sfms(&read_sfms(&a).unwrap()).unwrap() == a));

    let config = CloudModelConfig::template(Task::Classify, Architecture::PointnetMod, AuxChannel::Features, 6);
    let model = CloudModel::new(&config, 1).unwrap();
    let mut ck = model.to_checkpoint().unwrap();
    let opt = AdamW::new(AdamWConfig::default(), &model.params);
    ck.push_optimizer(&opt, &model.params).unwrap();
    ck.push_meta("note", vec![1.0, 2.5]);
    let a = ck.to_bytes().unwrap();
    results.push(("SFCK", Checkpoint::from_bytes(&a).unwrap().to_bytes().unwrap() == a));

    let failed: Vec<&str> = results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    verdict("format round-trip", failed.is_empty(), &format!("{}/4 formats rewrite byte-identically, failed: {failed:?}", 4 - failed.len()));
}

