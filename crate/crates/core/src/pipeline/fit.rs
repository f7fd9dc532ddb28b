use std::collections::BTreeMap;

use super::{id_key, BundleMetadata, ModelBundle, PipelineConfig, PipelineError, TrainingConfig};
use crate::cohort::io::{read_cohort, read_cohort_dir, IMAGES_DIR};
use crate::cohort::{
    apply_inclusion_criteria, derive_outcome_label, generate_synthetic_cohort, split_cohort, Cohort, CohortSplit,
    ExclusionReason, Horizon, PatientRecord,
};
use crate::features::{encode_records, feature_columns, feature_names, imputable_columns};
use crate::forest::{DenseColumns, Forest, Task};
use crate::fusion::{self, preprocess_gray, ChestImage, FeatureSchema, FusionSample, SourceView};
use crate::imputation::fit_imputer;
use crate::scoring::{fit_band_thresholds, to_corisk};
use crate::seed::{derive, streams};

/// Reads the configured cohort, or generates one when no input is set.
pub fn load_cohort(cfg: &PipelineConfig) -> Result<Cohort, PipelineError> {
    let p = &cfg.paths;
    if let Some(dir) = &p.cohort_dir {
        return Ok(read_cohort_dir(dir)?);
    }
    if let (Some(records), Some(outcomes)) = (&p.records, &p.outcomes) {
        let images = match &p.images_dir {
            Some(d) => d.clone(),
            None => records.parent().unwrap_or(std::path::Path::new(".")).join(IMAGES_DIR),
        };
        return Ok(read_cohort(records, outcomes, &images)?);
    }
    Ok(generate_synthetic_cohort(&cfg.generator, derive(cfg.seed, streams::GENERATOR))?)
}

/// A cohort after the inclusion criteria, with the exclusion log.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCohort {
    pub cohort: Cohort,
    pub exclusions: Vec<(String, ExclusionReason)>,
}

impl PreparedCohort {
    pub fn exclusion_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for (_, r) in &self.exclusions {
            *out.entry(r.name().to_string()).or_insert(0) += 1;
        }
        out
    }

    /// Positions of `ids` in the included cohort, in cohort order.
    pub fn positions(&self, ids: &[String]) -> Result<Vec<usize>, PipelineError> {
        let index: BTreeMap<&str, usize> = self
            .cohort
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.patient_id.as_str(), i))
            .collect();
        let mut pos = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| PipelineError::Data(format!("unknown patient id {id}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        pos.sort_unstable();
        Ok(pos)
    }
}

pub fn prepare_cohort(cohort: &Cohort) -> PreparedCohort {
    let (included, exclusions) = apply_inclusion_criteria(&cohort.records);
    let keep: std::collections::BTreeSet<&str> = included.iter().map(|r| r.patient_id.as_str()).collect();
    PreparedCohort {
        cohort: cohort.filter(|r| keep.contains(r.patient_id.as_str())),
        exclusions,
    }
}

pub(crate) fn chest_image(cohort: &Cohort, r: &PatientRecord, side: usize) -> Result<Option<ChestImage>, PipelineError> {
    match cohort.image_for(r) {
        Some(img) => Ok(Some(preprocess_gray(img, (side, side), SourceView::Synthetic)?)),
        None => Ok(None),
    }
}

/// Fits the imputer, fusion network, both forests and the risk bands on
/// the training-site (or training-period) records.
///
/// The imputer, forests and bands use training plus validation rows; the
/// fusion network trains on imaged training rows and early-stops on imaged
/// validation rows.
pub fn fit_models(
    prepared: &PreparedCohort,
    split: &CohortSplit,
    cfg: &PipelineConfig,
    master_seed: u64,
) -> Result<ModelBundle, PipelineError> {
    let cohort = &prepared.cohort;
    let train_pos = prepared.positions(&split.train_ids)?;
    let val_pos = prepared.positions(&split.validation_ids)?;
    let mut all_pos: Vec<usize> = train_pos.iter().chain(&val_pos).copied().collect();
    all_pos.sort_unstable();
    if all_pos.is_empty() {
        return Err(PipelineError::Data("training split is empty".into()));
    }
    let records: Vec<PatientRecord> = all_pos.iter().map(|&i| cohort.records[i].clone()).collect();
    let matrix = encode_records(&records)?;
    let (imputed, imputer) = fit_imputer(
        &matrix,
        &imputable_columns(),
        &cfg.impute,
        derive(master_seed, streams::IMPUTE),
    )?;
    let rows = imputed.completed.dense_rows();
    let label = |i: usize, h| derive_outcome_label(&cohort.outcomes[i], h);
    let y24: Vec<f64> = all_pos.iter().map(|&i| label(i, Horizon::H24)).collect();
    let y72: Vec<f64> = all_pos.iter().map(|&i| label(i, Horizon::H72)).collect();

    let side = cfg.fusion.arch.image_size;
    let is_val: std::collections::BTreeSet<usize> = val_pos.iter().copied().collect();
    let (mut fusion_train, mut fusion_val) = (Vec::new(), Vec::new());
    let (mut train_rows, mut val_rows) = (Vec::new(), Vec::new());
    for (k, &i) in all_pos.iter().enumerate() {
        if let Some(image) = chest_image(cohort, &cohort.records[i], side)? {
            let sample = FusionSample {
                row: rows[k].clone(),
                image,
                y24: y24[k],
                y72: y72[k],
            };
            if is_val.contains(&i) {
                fusion_val.push(sample);
                val_rows.push(k);
            } else {
                fusion_train.push(sample);
                train_rows.push(k);
            }
        }
    }
    if fusion_train.is_empty() || fusion_val.is_empty() {
        return Err(PipelineError::Data(format!(
            "fusion training needs imaged records in both training ({}) and validation ({}) splits",
            fusion_train.len(),
            fusion_val.len()
        )));
    }
    let schema = FeatureSchema::from_columns(&feature_columns(), cfg.fusion.arch.image_feature_dim)?;
    let trained = fusion::train(&schema, &fusion_train, &fusion_val, &cfg.fusion, derive(master_seed, streams::FUSION))?;

    let kinds = feature_columns().iter().map(|c| c.kind).collect();
    let x = DenseColumns::from_rows(kinds, &rows)?;
    let keys: Vec<u64> = records.iter().map(|r| id_key(&r.patient_id)).collect();
    let fit = |y: &[f64], stream| Forest::fit_keyed(&x, y, &keys, Task::Regression, &cfg.forest, derive(master_seed, stream));
    let forest_24h = fit(&y24, streams::FOREST_24H)?;
    let forest_72h = fit(&y72, streams::FOREST_72H)?;

    // training-set 72h scores for band fitting, combined as at serve time
    let mut raw72 = forest_72h.predict_rows(&rows)?.into_iter().map(|p| p.clamp(0.0, 1.0)).collect::<Vec<_>>();
    let samples: Vec<&FusionSample> = fusion_train.iter().chain(&fusion_val).collect();
    let fusion_rows: Vec<&[f64]> = samples.iter().map(|s| s.row.as_slice()).collect();
    let fusion_imgs: Vec<&ChestImage> = samples.iter().map(|s| &s.image).collect();
    let fusion_pred = trained.model.predict_batch(&fusion_rows, &fusion_imgs)?;
    for (&k, p) in train_rows.iter().chain(&val_rows).zip(&fusion_pred) {
        raw72[k] = p.1;
    }
    let band_input = raw72
        .iter()
        .zip(&all_pos)
        .map(|(&r, &i)| Ok((to_corisk(r)?, cohort.outcomes[i].disposition)))
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let bands = fit_band_thresholds(&band_input)?;

    Ok(ModelBundle {
        feature_names: feature_names(),
        imputer,
        metadata: BundleMetadata {
            n_train: train_pos.len(),
            n_validation: val_pos.len(),
            n_train_images: fusion_train.len(),
            n_validation_images: fusion_val.len(),
            imputation_iterations: imputed.iterations,
            fusion_best_epoch: trained.best_epoch,
            fusion_history: trained.history,
            band_agreement: bands.agreement as f64 / band_input.len() as f64,
        },
        fusion: trained.model,
        forest_24h,
        forest_72h,
        thresholds: bands.thresholds,
        training: TrainingConfig {
            seed: master_seed,
            split_kind: format!("{:?}", split.split_kind),
            impute: cfg.impute.clone(),
            fusion: cfg.fusion.clone(),
            forest: cfg.forest.clone(),
        },
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub bundle: ModelBundle,
    pub prepared: PreparedCohort,
    pub split: CohortSplit,
}

/// Load or generate the cohort, apply inclusion, split and fit.
pub fn train_pipeline(cfg: &PipelineConfig) -> Result<TrainOutput, PipelineError> {
    let cohort = load_cohort(cfg)?;
    let prepared = prepare_cohort(&cohort);
    let split = split_cohort(&prepared.cohort.records, &cfg.split, derive(cfg.seed, streams::SPLIT))?;
    let bundle = fit_models(&prepared, &split, cfg, cfg.seed)?;
    Ok(TrainOutput {
        bundle,
        prepared,
        split,
    })
}
