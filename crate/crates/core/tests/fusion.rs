//! Fusion network training against a known target network.

mod common;

use corisk::fusion::{
    batch_loss, train, ArchConfig, CategoricalSpec, ChestImage, FeatureSchema, FusionBatch, FusionModel,
    FusionParams, FusionSample, SourceView, Standardizer, TrainConfig,
};
use rand::Rng;

fn arch() -> ArchConfig {
    ArchConfig {
        image_size: 12,
        conv_channels: vec![3, 4],
        image_feature_dim: 6,
        cross_layers: 2,
        deep_layers: vec![16, 16],
    }
}

fn schema() -> FeatureSchema {
    FeatureSchema::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![CategoricalSpec {
            name: "k".into(),
            cardinality: 4,
            embedding_dim: 2,
        }],
        6,
    )
    .unwrap()
}

fn inputs(n: usize, seed: u64) -> Vec<(Vec<f64>, ChestImage)> {
    let mut r = common::rng(seed);
    let side = arch().image_size;
    (0..n)
        .map(|_| {
            let row = vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(-2.0..2.0), r.random_range(0..4) as f64];
            let img = ChestImage {
                height: side,
                width: side,
                pixels: (0..side * side).map(|_| r.random::<f64>()).collect(),
                source_view: SourceView::Synthetic,
            };
            (row, img)
        })
        .collect()
}

/// Labels produced by a randomly initialised network with sharpened heads.
fn target_samples(n: usize, seed: u64) -> Vec<FusionSample> {
    let schema = schema();
    let mut params = FusionParams::init(&schema, &arch(), 999).unwrap();
    for t in params.tensors_mut().into_iter().rev().take(4) {
        for v in t.data_mut() {
            *v *= 4.0;
        }
    }
    let target = FusionModel {
        standardizer: Standardizer {
            mean: vec![0.0; 3],
            sd: vec![1.0; 3],
        },
        schema,
        params,
    };
    inputs(n, seed)
        .into_iter()
        .map(|(row, image)| {
            let (y24, y72) = target.predict(&row, Some(&image)).unwrap();
            FusionSample { row, image, y24, y72 }
        })
        .collect()
}

fn loss_on(model: &FusionModel, samples: &[FusionSample]) -> f64 {
    let batch = FusionBatch {
        rows: samples.iter().map(|s| s.row.as_slice()).collect(),
        images: samples.iter().map(|s| &s.image).collect(),
        y24: samples.iter().map(|s| s.y24).collect(),
        y72: samples.iter().map(|s| s.y72).collect(),
    };
    batch_loss(&model.params, &model.schema, &model.standardizer, &batch, false).unwrap().0
}

#[test]
fn learns_a_random_target_network() {
    let train_set = target_samples(200, 1);
    let val_set = target_samples(60, 2);
    let spread = train_set.iter().map(|s| s.y72).fold((1.0f64, 0.0f64), |(a, b), v| (a.min(v), b.max(v)));
    assert!(spread.1 - spread.0 > 0.3, "target labels are nearly constant: {spread:?}");
    let cfg = TrainConfig {
        arch: arch(),
        max_epochs: 50,
        patience: 50,
        ..TrainConfig::default()
    };
    let zero = TrainConfig { max_epochs: 0, ..cfg.clone() };
    let initial = train(&schema(), &train_set, &val_set, &zero, 5).unwrap().model;
    let trained = train(&schema(), &train_set, &val_set, &cfg, 5).unwrap();
    let (before, after) = (loss_on(&initial, &train_set), loss_on(&trained.model, &train_set));
    assert!(after <= 0.5 * before, "training loss {before:.5} -> {after:.5}");
    assert!(trained.history.len() <= 51);
}

#[test]
fn zero_epochs_reports_the_initial_validation_loss() {
    let train_set = target_samples(40, 3);
    let val_set = target_samples(20, 4);
    let cfg = TrainConfig {
        arch: arch(),
        max_epochs: 0,
        ..TrainConfig::default()
    };
    let t = train(&schema(), &train_set, &val_set, &cfg, 8).unwrap();
    assert_eq!(t.history.len(), 1);
    assert_eq!(t.best_epoch, 0);
    let init = FusionParams::init(&schema(), &arch(), corisk::seed::derive(8, 0)).unwrap();
    assert_eq!(t.model.params, init);
    assert_eq!(t.history[0].val_loss, loss_on(&t.model, &val_set));
}

#[test]
fn outputs_are_probabilities_and_deterministic() {
    let samples = target_samples(30, 6);
    let cfg = TrainConfig {
        arch: arch(),
        max_epochs: 2,
        ..TrainConfig::default()
    };
    let a = train(&schema(), &samples[..20], &samples[20..], &cfg, 11).unwrap();
    let b = train(&schema(), &samples[..20], &samples[20..], &cfg, 11).unwrap();
    assert_eq!(a, b);
    for s in &samples {
        let (y24, y72) = a.model.predict(&s.row, Some(&s.image)).unwrap();
        assert!(0.0 < y24 && y24 < 1.0 && 0.0 < y72 && y72 < 1.0);
    }
}
