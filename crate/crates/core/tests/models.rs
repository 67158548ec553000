use s3fnet::fusion::FusionKind;
use s3fnet::models::{family_spec, Ablation, ArchConfig, LayerNode, Model, ModelFamily, NetworkSpec};
use s3fnet::{Error, Tensor};

fn arch() -> ArchConfig {
    ArchConfig {
        widths: vec![4, 6],
        d_s: 5,
        spectral_filters: vec![3, 4],
        summarizer_widths: vec![4, 4],
        funnel_width: 8,
        d_f: 3,
        ..ArchConfig::default()
    }
}

fn model(family: ModelFamily) -> Model {
    Model::new(family_spec(family, [16, 16, 1], 3, &arch(), 5).unwrap()).unwrap()
}

fn input(b: usize) -> Tensor {
    Tensor::from_fn(&[b, 16, 16, 1], |i| 0.5 + 0.4 * (i as f64 * 0.731).sin())
}

#[test]
fn parameter_names_follow_the_layer_path() {
    let m = model(ModelFamily::S3fConcat);
    let names: Vec<&str> = m.params().names().collect();
    assert!(names.contains(&"spatial.0_conv.weight"));
    assert!(names.contains(&"spatial.1_batch_norm.running_mean"));
    assert!(names.contains(&"spectral.0_spectral_filter.w_real"), "{names:?}");
    assert!(names.iter().any(|n| n.starts_with("head.0_dense.")));
    assert_eq!(
        m.param_count("spatial.") + m.param_count("spectral.") + m.param_count("head."),
        m.params().trainable_count()
    );
}

#[test]
fn family_shapes_and_dims() {
    let cases = [
        (ModelFamily::Spatial, (5, 0), false),
        (ModelFamily::Spectranet1, (0, 3), false),
        (ModelFamily::Spectranet2, (0, 3), false),
        (ModelFamily::S3fConcat, (5, 3), true),
        (ModelFamily::S3fBilinear, (5, 3), true),
    ];
    for (family, dims, fused) in cases {
        let m = model(family);
        assert_eq!(m.branch_dims(), dims, "{family:?}");
        assert_eq!(m.is_fused(), fused);
        let p = m.predict(&input(3)).unwrap();
        assert_eq!(p.shape(), &[3, 3]);
        for r in p.data().chunks(3) {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let head_in = |f| model(f).params().get("head.0_dense.weight").unwrap().shape()[0];
    assert_eq!(head_in(ModelFamily::S3fConcat), 8);
    assert_eq!(head_in(ModelFamily::S3fBilinear), 15);
    let spectranet2 = model(ModelFamily::Spectranet2);
    let filters = spectranet2
        .spec()
        .spectral
        .as_ref()
        .unwrap()
        .iter()
        .filter(|n| matches!(n, LayerNode::SpectralFilter { .. }))
        .count();
    assert_eq!(filters, 2);
}

#[test]
fn inference_is_batch_independent() {
    let m = model(ModelFamily::S3fBilinear);
    let x = input(5);
    let all = m.infer(&x).unwrap();
    let one = m.infer(&Tensor::new(vec![1, 16, 16, 1], x.data()[..256].to_vec()).unwrap()).unwrap();
    for (a, b) in all.data()[..3].iter().zip(one.data()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(m.predict_batched(&x, 2).unwrap(), m.predict(&x).unwrap());
}

#[test]
fn branch_vectors_reproduce_logits_and_ablation() {
    let mut m = model(ModelFamily::S3fConcat);
    let x = input(4);
    let bv = m.extract_branch_vectors(&x).unwrap();
    assert_eq!(bv.v_s.as_ref().unwrap().shape(), &[4, 5]);
    assert_eq!(bv.v_f.as_ref().unwrap().shape(), &[4, 3]);
    assert_eq!(m.logits_from_branches(&bv).unwrap(), m.infer(&x).unwrap());

    m.set_ablation(Ablation::ZeroSpatial);
    let mut zeroed = bv.clone();
    zeroed.v_s = Some(Tensor::zeros(&[4, 5]));
    m.set_ablation(Ablation::None);
    let want = m.logits_from_branches(&zeroed).unwrap();
    m.set_ablation(Ablation::ZeroSpatial);
    assert_eq!(m.infer(&x).unwrap(), want);
}

#[test]
fn spec_json_roundtrip_and_validation() {
    for family in [ModelFamily::Spatial, ModelFamily::S3fBilinear] {
        let spec = family_spec(family, [16, 16, 1], 3, &arch(), 5).unwrap();
        let text = serde_json::to_string_pretty(&spec).unwrap();
        let back: NetworkSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.hash(), spec.hash());
    }
    let spec = family_spec(ModelFamily::S3fConcat, [16, 16, 1], 3, &arch(), 5).unwrap();
    let other = NetworkSpec { seed: 6, ..spec.clone() };
    assert_ne!(other.hash(), spec.hash());

    let no_fusion = NetworkSpec { fusion: None, ..spec.clone() };
    assert!(matches!(Model::new(no_fusion), Err(Error::Config(_))));
    let wrong_head = NetworkSpec { n_classes: 4, ..spec.clone() };
    assert!(matches!(Model::new(wrong_head), Err(Error::Config(_))));
    let lonely = NetworkSpec { spatial: None, ..spec };
    assert!(matches!(Model::new(lonely), Err(Error::Config(_))));
    assert!(family_spec(ModelFamily::Spatial, [10, 10, 1], 3, &arch(), 0).is_err());
    assert_eq!(
        FusionKind::Bilinear { normalize: true }.output_dim(5, 3),
        FusionKind::Concat.output_dim(12, 3)
    );
}

#[test]
fn checkpoint_file_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.s3f");
    let m = model(ModelFamily::S3fBilinear);
    m.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back.spec(), m.spec());
    assert_eq!(back.infer(&input(2)).unwrap(), m.infer(&input(2)).unwrap());
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes().unwrap());
}

#[test]
fn checkpoint_spec_mismatch_is_an_integrity_error() {
    let bytes = model(ModelFamily::Spatial).to_bytes().unwrap();
    let text = String::from_utf8_lossy(&bytes).into_owned();
    let pos = text.find("\"units\":5").unwrap();
    let mut tampered = bytes.clone();
    tampered[pos + 8] = b'7';
    let err = Model::from_bytes(&tampered).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
    assert!(matches!(Model::load(std::path::Path::new("/nonexistent/m.s3f")), Err(Error::Io { .. })));
}
