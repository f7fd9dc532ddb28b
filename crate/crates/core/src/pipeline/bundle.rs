use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{Forest, ForestConfig};
use crate::fusion::{EpochStats, FusionModel, TrainConfig};
use crate::imputation::{ColumnImputer, ImputeConfig};
use crate::scoring::BandThresholds;

/// Leading bytes of every bundle file.
pub const BUNDLE_FORMAT: &[u8; 8] = b"CORISKB\0";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("not a model bundle (bad format tag)")]
    Format,
    #[error("bundle version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt bundle: {0}")]
    Decode(#[from] bincode::Error),
}

/// Model-relevant settings the bundle was trained under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub seed: u64,
    pub split_kind: String,
    pub impute: ImputeConfig,
    pub fusion: TrainConfig,
    pub forest: ForestConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub n_train: usize,
    pub n_validation: usize,
    pub n_train_images: usize,
    pub n_validation_images: usize,
    pub imputation_iterations: usize,
    pub fusion_best_epoch: usize,
    pub fusion_history: Vec<EpochStats>,
    /// Training-set agreement of the fitted bands with dispositions.
    pub band_agreement: f64,
}

/// Everything needed to score a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    /// Feature columns in encoding order; checked against the running code.
    pub feature_names: Vec<String>,
    pub imputer: ColumnImputer,
    pub fusion: FusionModel,
    pub forest_24h: Forest,
    pub forest_72h: Forest,
    pub thresholds: BandThresholds,
    pub training: TrainingConfig,
    pub metadata: BundleMetadata,
}

impl ModelBundle {
    pub fn to_bytes(&self) -> Result<Vec<u8>, BundleError> {
        let mut out = Vec::new();
        out.extend_from_slice(BUNDLE_FORMAT);
        out.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
        bincode::serialize_into(&mut out, self)?;
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, BundleError> {
        let mut r = bytes;
        let mut tag = [0u8; 8];
        let mut version = [0u8; 4];
        if r.read_exact(&mut tag).is_err() || &tag != BUNDLE_FORMAT {
            return Err(BundleError::Format);
        }
        r.read_exact(&mut version).map_err(|_| BundleError::Format)?;
        let found = u32::from_le_bytes(version);
        if found != BUNDLE_VERSION {
            return Err(BundleError::Version {
                found,
                expected: BUNDLE_VERSION,
            });
        }
        Ok(bincode::deserialize(r)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleError> {
        let io = |source| BundleError::Io {
            path: path.display().to_string(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let bytes = self.to_bytes()?;
        std::fs::File::create(path).and_then(|mut f| f.write_all(&bytes)).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, BundleError> {
        let bytes = std::fs::read(path).map_err(|source| BundleError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}
