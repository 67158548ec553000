use s3fnet::data::{generate_synthetic, split, LabeledDataset, SynthTask, SynthTaskSpec};
use s3fnet::models::{family_spec, ArchConfig, Model, ModelFamily};
use s3fnet::params::{GradStore, ParamKind, ParamStore};
use s3fnet::train::{
    adam_step, balanced_class_weights, metrics, reduce_lr_on_plateau, train_loop,
    weighted_cross_entropy, AdamConfig, AdamState, PlateauConfig, TrainConfig,
};
use s3fnet::{Error, Tensor};

fn probs(rows: &[[f64; 3]]) -> Tensor {
    Tensor::new(vec![rows.len(), 3], rows.iter().flatten().copied().collect()).unwrap()
}

#[test]
fn three_class_fixture() {
    let labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 2];
    let p = probs(&[
        [0.7, 0.2, 0.1],
        [0.5, 0.4, 0.1],
        [0.2, 0.5, 0.3],
        [0.1, 0.8, 0.1],
        [0.3, 0.6, 0.1],
        [0.4, 0.3, 0.3],
        [0.1, 0.2, 0.7],
        [0.2, 0.1, 0.7],
        [0.1, 0.5, 0.4],
        [0.3, 0.3, 0.4],
    ]);
    let m = metrics(&p, &labels).unwrap();
    // scikit-learn: accuracy_score, f1_score(average="weighted"),
    // roc_auc_score(multi_class="ovr", average="weighted"), matthews_corrcoef
    assert!((m.accuracy - 0.7).abs() < 1e-10);
    assert!((m.weighted_f1 - 5.0 / 7.0).abs() < 1e-10);
    assert!((m.auc.unwrap() - 0.9).abs() < 1e-10);
    assert!((m.mcc - 37.0 / 66.0).abs() < 1e-10);
    assert_eq!(m.confusion, vec![vec![2, 1, 0], vec![1, 2, 0], vec![0, 1, 3]]);
    assert_eq!(m.per_class[2].support, 4);
    assert!((m.per_class[1].precision - 0.5).abs() < 1e-15);
}

#[test]
fn perfect_and_inverted() {
    let p = probs(&[[0.9, 0.05, 0.05], [0.1, 0.8, 0.1], [0.2, 0.2, 0.6]]);
    let m = metrics(&p, &[0, 1, 2]).unwrap();
    assert_eq!((m.accuracy, m.weighted_f1, m.auc, m.mcc), (1.0, 1.0, Some(1.0), 1.0));

    let p = Tensor::new(vec![4, 2], vec![0.2, 0.8, 0.3, 0.7, 0.9, 0.1, 0.6, 0.4]).unwrap();
    let m = metrics(&p, &[0, 0, 1, 1]).unwrap();
    assert_eq!(m.mcc, -1.0);
    assert_eq!(m.accuracy, 0.0);
    assert_eq!(m.auc, Some(0.0));
}

#[test]
fn auc_undefined_for_single_class() {
    let p = Tensor::new(vec![2, 2], vec![0.6, 0.4, 0.3, 0.7]).unwrap();
    let m = metrics(&p, &[1, 1]).unwrap();
    assert_eq!(m.auc, None);
    assert_eq!(m.mcc, 0.0);
}

#[test]
fn balanced_weights_and_loss() {
    let w = balanced_class_weights(&[2, 6]).unwrap();
    assert_eq!(w, vec![2.0, 8.0 / 12.0]);
    assert!(matches!(balanced_class_weights(&[3, 0]), Err(Error::Data(_))));

    let logits = Tensor::zeros(&[3, 4]);
    let (l, _) = weighted_cross_entropy(&logits, &[0, 1, 3], &[1.0; 4]).unwrap();
    assert!((l - 4f64.ln()).abs() < 1e-15);
    let (l, _) = weighted_cross_entropy(&logits, &[0, 1, 3], &[2.0, 1.0, 1.0, 0.5]).unwrap();
    assert!((l - 3.5 / 3.0 * 4f64.ln()).abs() < 1e-15);
}

#[test]
fn adam_first_steps_closed_form() {
    let mut params = ParamStore::new();
    params.insert("w", Tensor::new(vec![2], vec![1.0, -2.0]).unwrap(), ParamKind::Weight);
    let mut grads = GradStore::new();
    grads.accumulate("w", Tensor::new(vec![2], vec![0.5, -4.0]).unwrap()).unwrap();
    let cfg = AdamConfig {
        lr: 0.1,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new();
    adam_step(&mut params, &grads, &mut state, 1, &cfg).unwrap();
    // m_hat = g, v_hat = g^2 after one step
    let w = params.get("w").unwrap().data().to_vec();
    assert!((w[0] - (1.0 - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-15);
    assert!((w[1] - (-2.0 + 0.1 * 4.0 / (4.0 + 1e-8))).abs() < 1e-15);

    // a second identical gradient keeps m_hat = g and v_hat = g^2
    adam_step(&mut params, &grads, &mut state, 2, &cfg).unwrap();
    let w2 = params.get("w").unwrap().data()[0];
    assert!((w2 - (w[0] - 0.1 * 0.5 / (0.5 + 1e-8))).abs() < 1e-14);
    assert!(adam_step(&mut params, &grads, &mut state, 0, &cfg).is_err());
    assert!(adam_step(&mut params, &GradStore::new(), &mut state, 3, &cfg).is_err());
}

#[test]
fn plateau_schedule() {
    let cfg = PlateauConfig {
        patience: 2,
        factor: 0.5,
        min_delta: 0.0,
        min_lr: 0.1,
    };
    let lrs = reduce_lr_on_plateau(&[0.5, 0.6, 0.6, 0.6, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7], 1.0, &cfg);
    // rate in effect after each epoch; two flat epochs trigger a cut
    assert_eq!(lrs, vec![1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25, 0.25, 0.125, 0.125]);
    let floor = reduce_lr_on_plateau(&[0.0; 12], 1.0, &cfg);
    assert_eq!(*floor.last().unwrap(), 0.1);
}

fn tiny_task(seed: u64) -> Vec<LabeledDataset> {
    let data = generate_synthetic(&SynthTaskSpec {
        task: SynthTask::Shape,
        size: 16,
        per_class: 20,
        low_freq: 2.0,
        high_freq: 5.0,
        seed,
        ..SynthTaskSpec::default()
    })
    .unwrap();
    split(&data, &[0.6, 0.2, 0.2], seed).unwrap()
}

fn tiny_model(family: ModelFamily, seed: u64) -> Model {
    let arch = ArchConfig {
        widths: vec![4, 8],
        d_s: 8,
        spectral_filters: vec![4],
        summarizer_widths: vec![4, 4],
        ..ArchConfig::default()
    };
    Model::new(family_spec(family, [16, 16, 1], 2, &arch, seed).unwrap()).unwrap()
}

fn run(family: ModelFamily, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let parts = tiny_task(3);
    let mut model = tiny_model(family, seed);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 8,
        seed,
        ..TrainConfig::default()
    };
    let mut log = Vec::new();
    train_loop(&mut model, &parts[0], &parts[1], &cfg, Some(&mut log)).unwrap();
    (log, model.to_bytes().unwrap())
}

#[test]
fn training_is_bitwise_reproducible() {
    let a = run(ModelFamily::S3fConcat, 11);
    let b = run(ModelFamily::S3fConcat, 11);
    assert_eq!(a, b);
    let c = run(ModelFamily::S3fConcat, 12);
    assert_ne!(a.1, c.1);
    assert_eq!(String::from_utf8(a.0).unwrap().lines().count(), 3);
}

#[test]
fn best_epoch_is_restored() {
    let parts = tiny_task(5);
    let mut model = tiny_model(ModelFamily::Spatial, 2);
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 8,
        adam: AdamConfig {
            lr: 3e-3,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let report = train_loop(&mut model, &parts[0], &parts[1], &cfg, None).unwrap();
    let best = &report.history[report.best_epoch];
    assert!(best.best);
    assert!(report.history.iter().all(|r| r.val_weighted_f1 <= best.val_weighted_f1));
    let (_, now) = s3fnet::train::evaluate(&model, &parts[1], &[1.0, 1.0], 64).unwrap();
    assert_eq!(now.weighted_f1, report.best_score);
}

#[test]
fn non_finite_loss_aborts() {
    let parts = tiny_task(1);
    let mut model = tiny_model(ModelFamily::Spectranet1, 0);
    let name = model.params().iter().map(|(n, _)| n.to_string()).find(|n| n.starts_with("head")).unwrap();
    model.params_mut().get_mut(&name).unwrap().data_mut()[0] = f64::NAN;
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let err = train_loop(&mut model, &parts[0], &parts[1], &cfg, None).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, batch: 0, .. }));
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn mismatched_data_is_a_config_error() {
    let parts = tiny_task(1);
    let arch = ArchConfig {
        widths: vec![4, 8],
        ..ArchConfig::default()
    };
    let mut model = Model::new(family_spec(ModelFamily::Spatial, [16, 16, 1], 3, &arch, 0).unwrap()).unwrap();
    let err = train_loop(&mut model, &parts[0], &parts[1], &TrainConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}
