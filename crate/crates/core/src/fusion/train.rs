use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{batch_loss, ArchConfig, ChestImage, FeatureSchema, FusionBatch, FusionError, FusionModel, FusionParams, Standardizer};
use crate::autodiff::Tensor;
use crate::seed;

/// A completed feature row with its image and regression targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample {
    pub row: Vec<f64>,
    pub image: ChestImage,
    pub y24: f64,
    pub y72: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: ArchConfig,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            max_epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FusionError> {
        self.arch.validate()?;
        if self.batch_size == 0 {
            return Err(FusionError::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FusionError::Config(format!("learning_rate {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(FusionError::Config("Adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean mini-batch loss; `None` for the pre-training entry.
    pub train_loss: Option<f64>,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedFusion {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: FusionModel,
    /// Entry 0 is the initial network.
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &FusionParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Adam {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    fn step(&mut self, params: &mut FusionParams, grads: &[Tensor], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, p) in params.tensors_mut().into_iter().enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for ((w, &g), (mi, vi)) in p
                .data_mut()
                .iter_mut()
                .zip(grads[k].data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
                *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
                *w -= cfg.learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + cfg.epsilon);
            }
        }
    }
}

fn batch_of<'a>(samples: &'a [FusionSample], idx: &[usize]) -> FusionBatch<'a> {
    FusionBatch {
        rows: idx.iter().map(|&i| samples[i].row.as_slice()).collect(),
        images: idx.iter().map(|&i| &samples[i].image).collect(),
        y24: idx.iter().map(|&i| samples[i].y24).collect(),
        y72: idx.iter().map(|&i| samples[i].y72).collect(),
    }
}

fn dataset_loss(model: &FusionModel, samples: &[FusionSample]) -> Result<f64, FusionError> {
    let idx: Vec<usize> = (0..samples.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(64) {
        let (l, _) = batch_loss(&model.params, &model.schema, &model.standardizer, &batch_of(samples, chunk), false)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Mini-batch Adam on the summed 24h/72h squared error with early stopping
/// on validation loss. The standardizer is fitted on `train_set`.
pub fn train(
    schema: &FeatureSchema,
    train_set: &[FusionSample],
    val_set: &[FusionSample],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedFusion, FusionError> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(FusionError::EmptyDataset);
    }
    let rows: Vec<&[f64]> = train_set.iter().map(|s| s.row.as_slice()).collect();
    let standardizer = Standardizer::fit(&rows, schema.continuous_features.len());
    let params = FusionParams::init(schema, &cfg.arch, seed::derive(seed, 0))?;
    let mut model = FusionModel {
        schema: schema.clone(),
        standardizer,
        params,
    };
    let initial = dataset_loss(&model, val_set)?;
    if !initial.is_finite() {
        return Err(FusionError::Divergence { epoch: 0, batch: 0 });
    }
    let mut history = vec![EpochStats {
        epoch: 0,
        train_loss: None,
        val_loss: initial,
    }];
    let (mut best, mut best_epoch, mut best_params) = (initial, 0, model.params.clone());
    let mut adam = Adam::new(&model.params);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut seed::item_rng(seed::derive(seed, 1), epoch as u64));
        let mut sum = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = FusionError::Divergence { epoch, batch: bi };
            let batch = batch_of(train_set, chunk);
            let (loss, grads) = batch_loss(&model.params, schema, &model.standardizer, &batch, true)?;
            let grads = match grads {
                Some(g) if loss.is_finite() && g.iter().all(Tensor::all_finite) => g,
                _ => return Err(diverged),
            };
            adam.step(&mut model.params, &grads, cfg);
            if !model.params.all_finite() {
                return Err(diverged);
            }
            sum += loss * chunk.len() as f64;
        }
        let val = dataset_loss(&model, val_set)?;
        if !val.is_finite() {
            return Err(FusionError::Divergence {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss: Some(sum / train_set.len() as f64),
            val_loss: val,
        });
        if val < best {
            (best, best_epoch, best_params) = (val, epoch, model.params.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    model.params = best_params;
    Ok(TrainedFusion {
        model,
        history,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::network::tests::{random_image, small_arch, small_schema};
    use rand::Rng;

    fn samples(n: usize, seed: u64) -> Vec<FusionSample> {
        let mut rng = seed::item_rng(seed, 0);
        (0..n)
            .map(|i| {
                let a: f64 = rng.random_range(-2.0..2.0);
                let c = rng.random_range(0..3usize);
                let image = random_image(8, seed * 1000 + i as u64);
                let bright = image.pixels.iter().sum::<f64>() / 64.0;
                let y72 = if a + (c as f64) * 0.5 + bright > 1.2 { 1.0 } else { 0.0 };
                FusionSample {
                    row: vec![a, rng.random_range(-1.0..1.0), c as f64],
                    image,
                    y24: y72 * 0.75,
                    y72,
                }
            })
            .collect()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            arch: small_arch(),
            max_epochs: epochs,
            batch_size: 16,
            learning_rate: 1e-2,
            patience: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let (tr, va) = (samples(40, 1), samples(20, 2));
        let schema = small_schema();
        let out = train(&schema, &tr, &va, &config(0), 9).unwrap();
        let init = FusionParams::init(&schema, &small_arch(), seed::derive(9, 0)).unwrap();
        assert_eq!(out.model.params, init);
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].val_loss, dataset_loss(&out.model, &va).unwrap());
    }

    #[test]
    fn training_reduces_validation_loss_and_is_deterministic() {
        let (tr, va) = (samples(160, 3), samples(60, 4));
        let schema = small_schema();
        let a = train(&schema, &tr, &va, &config(30), 5).unwrap();
        let b = train(&schema, &tr, &va, &config(30), 5).unwrap();
        assert_eq!(a, b);
        let best = a.history[a.best_epoch].val_loss;
        assert!(best < 0.8 * a.history[0].val_loss, "{:?}", a.history);
        assert_eq!(dataset_loss(&a.model, &va).unwrap(), best);
    }

    #[test]
    fn huge_learning_rate_reports_divergence() {
        let (tr, va) = (samples(40, 5), samples(20, 6));
        let cfg = TrainConfig {
            learning_rate: 1e300,
            ..config(5)
        };
        match train(&small_schema(), &tr, &va, &cfg, 1) {
            Err(FusionError::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_and_data_errors() {
        let schema = small_schema();
        let tr = samples(10, 7);
        assert!(matches!(train(&schema, &tr, &[], &config(1), 1), Err(FusionError::EmptyDataset)));
        let bad = TrainConfig {
            batch_size: 0,
            ..config(1)
        };
        assert!(matches!(train(&schema, &tr, &tr, &bad, 1), Err(FusionError::Config(_))));
    }
}
