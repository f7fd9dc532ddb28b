//! End-to-end orchestration: configuration, model fitting, the serialized
//! model bundle, single-record scoring and the evaluation report.
//!
//! Every stochastic step takes its seed from the master seed through
//! [`crate::seed::derive`] with the stream constants in
//! [`crate::seed::streams`]. The temporal-split run uses
//! `derive(master, TEMPORAL)` as its own master seed.

mod bundle;
mod config;
mod fit;
mod plots;
mod report;
mod scorer;

use std::path::PathBuf;

use thiserror::Error;

use crate::clinical::ClinicalError;
use crate::cohort::CohortError;
use crate::evaluation::EvalError;
use crate::features::EncodeError;
use crate::forest::ForestError;
use crate::fusion::FusionError;
use crate::imputation::ImputeError;
use crate::scoring::ScoringError;

pub use bundle::{BundleError, BundleMetadata, ModelBundle, TrainingConfig, BUNDLE_FORMAT, BUNDLE_VERSION};
pub use config::{EvalConfig, PathsConfig, PipelineConfig};
pub use fit::{fit_models, load_cohort, prepare_cohort, train_pipeline, PreparedCohort, TrainOutput};
pub use plots::{km_svg, roc_svg};
pub use report::{
    evaluate, evaluate_split, AucEstimate, BaselineComparison, Boxplot, ClinicalComparison, CutoffResult,
    EvalReport, GroupSurvival, PhysicianComparison, ReportMeta, SurvivalReport, TemporalReport, WindowResult,
    CUTOFFS,
};
pub use scorer::{ImputedField, ScoreResult, Scorer};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("schema drift: {0}")]
    SchemaDrift(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Impute(#[from] ImputeError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Clinical(#[from] ClinicalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl PipelineError {
    /// True for header or feature-schema mismatches between inputs and a bundle.
    pub fn is_schema_drift(&self) -> bool {
        matches!(self, PipelineError::SchemaDrift(_) | PipelineError::Cohort(CohortError::Schema(_)))
    }
}

/// Stable 64-bit key for a patient id (FNV-1a), so forests see rows in an
/// order fixed by id rather than by file position.
pub fn id_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}
