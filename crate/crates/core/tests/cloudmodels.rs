mod common;

use common::*;
use surfeat::cloudmodels::*;
use surfeat::featurestore::LabeledCloud;
use surfeat::nn::gradient_check;
use surfeat::Error;

#[test]
fn parameter_counts_match_hand_formulas() {
    let f = AuxChannel::Features;
    let cases = [
        // 38·64+64 + 64·64+64, then 4 × (128·64+64 + 64·64+64), head 64·2+2
        (Task::Classify, Architecture::PointnetMod, f, 56_450),
        (Task::Classify, Architecture::PointnetMod, AuxChannel::Normals, 54_786),
        // 38·32+32 + 32·32+32, 4 × (64·32+32 + 32·32+32), head 64·2+2
        (Task::Segment, Architecture::PointnetMod, f, 14_978),
        // SA 13760 + 66432 + 723456, head 524800 + 131328 + 514
        (Task::Classify, Architecture::Pointnetpp, f, 1_460_290),
        // SA 803648, FP 393728 + 131456 + 51968, head 16512 + 258
        (Task::Segment, Architecture::Pointnetpp, f, 1_397_570),
        // 2176 + 16512, global 8256, head 130
        (Task::Classify, Architecture::MlpAblation, f, 27_074),
    ];
    for (task, arch, aux, expected) in cases {
        let dim = if aux == AuxChannel::Features { 16 } else { 0 };
        let c = CloudModelConfig::template(task, arch, aux, dim);
        assert_eq!(CloudNet::param_count(&c), expected, "{task} {arch} {aux}");
        assert_eq!(CloudModel::new(&c, 0).unwrap().params.scalar_count(), expected, "{task} {arch} {aux}");
    }
}

#[test]
fn classifiers_are_permutation_invariant() {
    for (task, arch) in all_architectures() {
        let config = CloudModelConfig::template(task, arch, AuxChannel::Features, 8);
        let model = CloudModel::new(&config, 11).unwrap();
        for cloud in 0..3 {
            let obj = random_object(64, 8, cloud);
            let base = model.logits(&model.prepare(&obj).unwrap()).unwrap();
            for p in 0..4 {
                let perm = random_permutation(64, cloud * 100 + p);
                let out = model.logits(&model.prepare(&permute(&obj, &perm)).unwrap()).unwrap();
                match task {
                    Task::Classify => assert!(max_abs_diff(&base, &out) < 1e-6, "{arch}"),
                    Task::Segment => {
                        let expected: Vec<f32> = perm.iter().flat_map(|&i| base[i * 2..i * 2 + 2].to_vec()).collect();
                        assert!(max_abs_diff(&expected, &out) < 1e-5, "{arch}");
                    }
                }
            }
        }
    }
}

#[test]
fn global_feature_properties() {
    let config = CloudModelConfig::template(Task::Classify, Architecture::PointnetMod, AuxChannel::Features, 4);
    let model = CloudModel::new(&config, 3).unwrap();
    // every point is in every neighbourhood of a cloud smaller than k, so duplicating changes nothing
    let obj = random_object(8, 4, 5);
    let twice: Vec<usize> = (0..8).chain(0..8).collect();
    let g = model.global_feature(&model.prepare(&obj).unwrap()).unwrap();
    let g2 = model.global_feature(&model.prepare(&permute(&obj, &twice)).unwrap()).unwrap();
    assert!(max_abs_diff(&g, &g2) < 1e-6);

    // pointwise encoder: pooled vector equals the per-dimension max of single-point encodings
    let config = CloudModelConfig::template(Task::Classify, Architecture::MlpAblation, AuxChannel::Features, 4);
    let model = CloudModel::new(&config, 4).unwrap();
    let obj = random_object(20, 4, 6);
    let g = model.global_feature(&model.prepare(&obj).unwrap()).unwrap();
    let mut oracle = vec![f32::NEG_INFINITY; g.len()];
    for i in 0..20 {
        let single = model.global_feature(&model.prepare(&permute(&obj, &[i])).unwrap()).unwrap();
        oracle.iter_mut().zip(&single).for_each(|(o, v)| *o = o.max(*v));
    }
    assert!(max_abs_diff(&g, &oracle) < 1e-6);
}

#[test]
fn zeroed_aux_channels_give_identical_logits() {
    for (task, arch) in all_architectures() {
        if arch == Architecture::MlpAblation {
            continue;
        }
        let feat = CloudModel::new(&CloudModelConfig::template(task, arch, AuxChannel::Features, 8), 21).unwrap();
        let norm = CloudModel::new(&CloudModelConfig::template(task, arch, AuxChannel::Normals, 0), 21).unwrap();
        let obj = random_object(48, 8, 9);
        let a = feat.logits(&feat.prepare(&obj).unwrap().zero_aux()).unwrap();
        let b = norm.logits(&norm.prepare(&obj).unwrap().zero_aux()).unwrap();
        assert_eq!(a, b, "{task} {arch}");
        let c = feat.logits(&feat.prepare(&obj).unwrap()).unwrap();
        assert_ne!(a, c);
    }
}

#[test]
fn ablation_ignores_coordinates() {
    let config = CloudModelConfig::template(Task::Classify, Architecture::MlpAblation, AuxChannel::Features, 6);
    let model = CloudModel::new(&config, 2).unwrap();
    let obj = random_object(30, 6, 1);
    let moved: Vec<_> = obj.cloud.positions().iter().map(|p| [p[0] + 3.0, p[1] - 1.0, p[2] * 2.0]).collect();
    let shifted = LabeledCloud::new(
        surfeat::geometry::PointCloud::new(moved, obj.cloud.normals().map(<[_]>::to_vec)).unwrap(),
        obj.features.clone(),
        None,
        obj.object_label,
    )
    .unwrap();
    assert_eq!(model.logits(&model.prepare(&obj).unwrap()).unwrap(), model.logits(&model.prepare(&shifted).unwrap()).unwrap());
    let bare = LabeledCloud::new(obj.cloud.clone(), None, None, None).unwrap();
    assert!(matches!(model.prepare(&bare), Err(Error::InvalidArgument(_))));
}

#[test]
fn wrong_channel_count_rejected() {
    let config = CloudModelConfig::template(Task::Classify, Architecture::PointnetMod, AuxChannel::Features, 16);
    let model = CloudModel::new(&config, 0).unwrap();
    assert!(matches!(model.prepare(&random_object(10, 8, 0)), Err(Error::InvalidArgument(_))));
}

#[test]
fn miniature_gradient_checks() {
    for (task, arch) in all_architectures() {
        for aux in [AuxChannel::Features, AuxChannel::Normals] {
            if arch == Architecture::MlpAblation && aux == AuxChannel::Normals {
                continue;
            }
            let dim = if aux == AuxChannel::Features { 4 } else { 0 };
            let config = miniature(task, arch, aux, dim);
            let model = CloudModel::new(&config, 8).unwrap();
            let objs: Vec<PreparedCloud> = (0..2).map(|s| model.prepare(&random_object(8, 4, s + 40)).unwrap()).collect();
            let batch = Batch::new(&objs.iter().collect::<Vec<_>>()).unwrap();
            let mut params = model.params.cast::<f64>();
            jitter(&mut params, 1);
            let report = gradient_check(&mut params, |tape| model.net.loss(tape, &batch), 1e-4).unwrap();
            assert!(report.passed, "{task} {arch} {aux}: {report:?}");
        }
    }
}

#[test]
fn degenerate_segmentation_is_learnable() {
    let config = CloudModelConfig::template(Task::Segment, Architecture::PointnetMod, AuxChannel::Features, 4);
    let mut model = CloudModel::new(&config, 1).unwrap();
    let data: Vec<PreparedCloud> = (0..4)
        .map(|s| {
            let mut o = random_object(32, 4, s);
            o.point_labels = Some(vec![1; 32]);
            model.prepare(&o).unwrap()
        })
        .collect();
    let mut tc = TrainConfig::standard(Task::Segment, AuxChannel::Features);
    tc.epochs = 200;
    tc.batch_size = 4;
    let (report, opt) = train(&mut model, &data, &tc, 0).unwrap();
    assert_eq!(opt.step_count(), 200);
    assert!(*report.epoch_losses.last().unwrap() < 0.05, "{:?}", report.epoch_losses.last());
}

#[test]
fn checkpoint_round_trip_preserves_logits() {
    let config = CloudModelConfig::template(Task::Classify, Architecture::Pointnetpp, AuxChannel::Normals, 0);
    let model = CloudModel::new(&config, 5).unwrap();
    let ck = surfeat::formats::Checkpoint::from_bytes(&model.to_checkpoint().unwrap().to_bytes().unwrap()).unwrap();
    let back = CloudModel::from_checkpoint(&config, &ck).unwrap();
    let p = model.prepare(&random_object(64, 0, 2)).unwrap();
    assert_eq!(model.logits(&p).unwrap(), back.logits(&p).unwrap());
}
