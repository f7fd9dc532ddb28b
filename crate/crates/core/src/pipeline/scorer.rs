use serde::{Deserialize, Serialize};

use super::{ModelBundle, PipelineError, BUNDLE_VERSION};
use crate::clinical::{curb65, mews, ClinicalScore, ClinicalScoreInputs, PhysiologicBounds};
use crate::cohort::{Avpu, PatientRecord};
use crate::features::{encode_record, feature_columns, feature_names, AVPU};
use crate::forest::ColumnKind;
use crate::fusion::{preprocess_gray, ChestImage, SourceView};
use crate::pnm::GrayImage;
use crate::scoring::{assign_band, combine, to_corisk, BandThresholds, CoRiskScore};

/// A feature that was missing in the request and filled by the imputer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedField {
    pub feature: String,
    pub value: f64,
    /// Category name for categorical features.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub patient_id: String,
    #[serde(flatten)]
    pub corisk: CoRiskScore,
    /// Combined raw predictions in [0, 1] at 24h and 72h.
    pub raw_24h: f64,
    pub raw_72h: f64,
    pub forest_raw: [f64; 2],
    pub fusion_raw: Option<[f64; 2]>,
    pub curb65: ClinicalScore,
    pub mews: ClinicalScore,
    pub imputed: Vec<ImputedField>,
    pub bundle_version: u32,
    pub thresholds: BandThresholds,
}

/// Intermediate values of one scored record.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Components {
    pub completed: Vec<f64>,
    pub imputed: Vec<ImputedField>,
    pub image: Option<ChestImage>,
}

/// Scores single records against an immutable bundle.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    bundle: &'a ModelBundle,
    thresholds: BandThresholds,
    bounds: PhysiologicBounds,
}

impl<'a> Scorer<'a> {
    /// Fails when the bundle's feature columns differ from this build's.
    pub fn new(bundle: &'a ModelBundle) -> Result<Self, PipelineError> {
        let expected = feature_names();
        if bundle.feature_names != expected {
            return Err(PipelineError::SchemaDrift(format!(
                "bundle has {} feature columns, this build encodes {}; first difference at {:?}",
                bundle.feature_names.len(),
                expected.len(),
                bundle
                    .feature_names
                    .iter()
                    .zip(&expected)
                    .position(|(a, b)| a != b)
                    .unwrap_or(bundle.feature_names.len().min(expected.len()))
            )));
        }
        Ok(Scorer {
            bundle,
            thresholds: bundle.thresholds,
            bounds: PhysiologicBounds::default(),
        })
    }

    /// Replaces the fitted band thresholds.
    pub fn with_thresholds(mut self, t: BandThresholds) -> Self {
        self.thresholds = t;
        self
    }

    pub fn bundle(&self) -> &ModelBundle {
        self.bundle
    }

    pub fn thresholds(&self) -> BandThresholds {
        self.thresholds
    }

    pub(crate) fn components(
        &self,
        record: &PatientRecord,
        image: Option<&GrayImage>,
        view: SourceView,
    ) -> Result<Components, PipelineError> {
        let encoded = encode_record(record)?;
        let completed = self.bundle.imputer.transform_row(&encoded)?;
        let imputed = feature_columns()
            .into_iter()
            .zip(&encoded)
            .zip(&completed)
            .filter(|((_, e), _)| e.is_none())
            .map(|((c, _), &value)| ImputedField {
                category: match c.kind {
                    ColumnKind::Categorical { .. } if c.name == AVPU => {
                        Avpu::ALL.get(value as usize).map(|a| a.name().to_string())
                    }
                    _ => None,
                },
                feature: c.name,
                value,
            })
            .collect();
        let side = self.bundle.fusion.params.arch.image_size;
        let image = image.map(|g| preprocess_gray(g, (side, side), view)).transpose()?;
        Ok(Components {
            completed,
            imputed,
            image,
        })
    }

    pub(crate) fn finish(
        &self,
        record: &PatientRecord,
        c: Components,
        fusion_raw: Option<[f64; 2]>,
    ) -> Result<ScoreResult, PipelineError> {
        let forest_raw = [
            self.bundle.forest_24h.predict_unit(&c.completed)?,
            self.bundle.forest_72h.predict_unit(&c.completed)?,
        ];
        let has_cxr = c.image.is_some();
        let (raw_24h, source) = combine(fusion_raw.map(|f| f[0]), forest_raw[0], has_cxr)?;
        let (raw_72h, _) = combine(fusion_raw.map(|f| f[1]), forest_raw[1], has_cxr)?;
        let (score_24h, score_72h) = (to_corisk(raw_24h)?, to_corisk(raw_72h)?);
        let inputs = ClinicalScoreInputs::from_record(record);
        Ok(ScoreResult {
            patient_id: record.patient_id.clone(),
            corisk: CoRiskScore {
                score_24h,
                score_72h,
                source,
                band_72h: assign_band(score_72h, &self.thresholds),
            },
            raw_24h,
            raw_72h,
            forest_raw,
            fusion_raw,
            curb65: curb65(&inputs, &self.bounds)?,
            mews: mews(&inputs, &self.bounds)?,
            imputed: c.imputed,
            bundle_version: BUNDLE_VERSION,
            thresholds: self.thresholds,
        })
    }

    /// Scores one record; `image` routes it to the fusion network.
    pub fn score(&self, record: &PatientRecord, image: Option<&GrayImage>) -> Result<ScoreResult, PipelineError> {
        self.score_view(record, image, SourceView::Synthetic)
    }

    pub fn score_view(
        &self,
        record: &PatientRecord,
        image: Option<&GrayImage>,
        view: SourceView,
    ) -> Result<ScoreResult, PipelineError> {
        let c = self.components(record, image, view)?;
        let fusion_raw = match &c.image {
            Some(img) => {
                let (a, b) = self.bundle.fusion.predict(&c.completed, Some(img))?;
                Some([a, b])
            }
            None => None,
        };
        self.finish(record, c, fusion_raw)
    }
}
