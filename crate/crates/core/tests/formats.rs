use proptest::prelude::*;
use surfeat::featurestore::{FeatureField, LabeledCloud};
use surfeat::formats::*;
use surfeat::geometry::PointCloud;
use surfeat::meshsim::MeshGraphSequence;
use surfeat::nn::{AdamW, AdamWConfig, ParamStore, Tensor};
use surfeat::Error;

fn cloud_strategy() -> impl Strategy<Value = LabeledCloud> {
    (1usize..20, 0usize..5, any::<bool>(), any::<bool>(), any::<Option<u8>>()).prop_flat_map(
        |(n, dim, normals, labels, object_label)| {
            (
                prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), n),
                prop::collection::vec(prop::collection::vec(-5.0f32..5.0, dim), n),
                prop::collection::vec(0u8..2, n),
            )
                .prop_map(move |(pos, feats, labs)| {
                    let normals = normals.then(|| vec![[0.0, 0.0, 1.0]; pos.len()]);
                    let cloud = PointCloud::new(pos, normals).unwrap();
                    LabeledCloud::new(cloud, (dim > 0).then_some(feats), labels.then_some(labs), object_label).unwrap()
                })
        },
    )
}

proptest! {
    #[test]
    fn sfpc_rewrites_identically(obj in cloud_strategy()) {
        let bytes = write_sfpc(&obj).unwrap();
        let back = read_sfpc(&bytes).unwrap();
        prop_assert_eq!(write_sfpc(&back).unwrap(), bytes);
        prop_assert_eq!(back.point_labels, obj.point_labels);
        prop_assert_eq!(back.object_label, obj.object_label);
    }

    #[test]
    fn sfvx_rewrites_identically(tokens in prop::collection::vec(prop::collection::vec(-3.0f32..3.0, 4), 1..30)) {
        let coords = (0..tokens.len()).map(|i| [i as u16, (i * 7 % 64) as u16, 63]).collect();
        let field = FeatureField::new(64, coords, tokens).unwrap();
        let bytes = write_sfvx(&field).unwrap();
        let back = read_sfvx(&bytes).unwrap();
        prop_assert_eq!(&back, &field);
        prop_assert_eq!(write_sfvx(&back).unwrap(), bytes);
    }
}

#[test]
fn sfpc_layout_is_exact() {
    let cloud = PointCloud::new(vec![[1.0, 2.0, 3.0]], Some(vec![[0.0, 1.0, 0.0]])).unwrap();
    let obj = LabeledCloud::new(cloud, Some(vec![vec![0.5, -0.5]]), Some(vec![1]), Some(0)).unwrap();
    let bytes = write_sfpc(&obj).unwrap();
    assert_eq!(&bytes[0..8], b"SFPC0001");
    assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
    assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
    assert_eq!(&bytes[16..20], &[0b111, 0, 0, 0]);
    assert_eq!(&bytes[20..24], &1.0f32.to_le_bytes());
    assert_eq!(bytes.len(), 20 + 12 + 12 + 8 + 1 + 1);
    assert_eq!(bytes[bytes.len() - 2..], [1, 0]);
}

#[test]
fn corrupt_inputs_are_rejected() {
    let obj = LabeledCloud::new(PointCloud::from_positions(vec![[0.0; 3]]).unwrap(), None, None, None).unwrap();
    let mut bytes = write_sfpc(&obj).unwrap();
    assert!(matches!(read_sfpc(&bytes[..bytes.len() - 1]), Err(Error::InvalidData(_))));
    bytes.push(0);
    assert!(matches!(read_sfpc(&bytes), Err(Error::InvalidData(_))));
    bytes[0] = b'X';
    assert!(matches!(read_sfpc(&bytes), Err(Error::InvalidData(_))));
    assert!(matches!(Checkpoint::from_bytes(b"SFCK0001\x01\x00"), Err(Error::InvalidData(_))));
}

#[test]
fn sfms_rewrites_identically() {
    let seq = MeshGraphSequence::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1], [1, 2], [0, 2]],
        2,
        Some(vec![vec![0.1], vec![0.2], vec![0.3]]),
        vec![vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6], vec![0.7, 0.8, 0.9, 1.0, 1.1, 1.2]],
    )
    .unwrap();
    let bytes = write_sfms(&seq).unwrap();
    let back = read_sfms(&bytes).unwrap();
    assert_eq!(write_sfms(&back).unwrap(), bytes);
    assert_eq!(back.edges, seq.edges);
    assert!(MeshGraphSequence::new(vec![[0.0; 3]; 2], vec![[0, 0]], 1, None, vec![]).is_err());
    assert!(MeshGraphSequence::new(vec![[0.0; 3]; 2], vec![[0, 1], [1, 0]], 1, None, vec![]).is_err());
}

#[test]
fn sfck_roundtrip_with_optimizer() {
    let mut store = ParamStore::<f32>::new();
    store.add_glorot("layer.weight", 3, 2, 1).unwrap();
    store.add("layer.bias", Tensor::new(vec![2], vec![0.5, -0.5]).unwrap()).unwrap();
    store.iter_mut().for_each(|p| p.grad.data_mut().iter_mut().for_each(|g| *g = 0.25));
    let mut opt = AdamW::new(AdamWConfig { total_steps: 5, ..Default::default() }, &store);
    opt.step(&mut store);
    let mut ck = Checkpoint::from_params(&store).unwrap();
    ck.push_optimizer(&opt, &store).unwrap();
    ck.push_meta("scale", vec![2.0]);
    let bytes = ck.to_bytes().unwrap();
    assert_eq!(&bytes[..8], b"SFCK0001");
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    assert_eq!(back.digest().unwrap(), ck.digest().unwrap());
    assert_eq!(back.meta("scale"), Some(&[2.0f32][..]));

    let mut fresh = ParamStore::<f32>::new();
    fresh.add_glorot("layer.weight", 3, 2, 99).unwrap();
    fresh.add_filled("layer.bias", 2, 0.0).unwrap();
    back.restore_params(&mut fresh).unwrap();
    for (a, b) in fresh.iter().zip(store.iter()) {
        assert_eq!(a.value, b.value);
    }
    let restored = back.restore_optimizer(&fresh).unwrap().unwrap();
    assert_eq!(restored.step_count(), 1);

    let mut wrong = ParamStore::<f32>::new();
    wrong.add_glorot("layer.weight", 2, 2, 1).unwrap();
    assert!(back.restore_params(&mut wrong).is_err());
}
