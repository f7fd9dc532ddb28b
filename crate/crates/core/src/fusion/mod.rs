//! Deep & Cross feature-fusion network.
//!
//! EHR features are standardized (continuous) or embedded (categorical) and
//! stacked with a convolutional encoding of the chest image into `x0`. A
//! cross network (`x_{l+1} = x0 * (x_l . w) + b + x_l`) and a ReLU trunk run
//! in parallel from `x0`; their concatenation feeds two sigmoid heads for
//! the 24h and 72h labels.

mod image;
mod network;
mod params;
mod schema;
mod train;

use thiserror::Error;

use crate::autodiff::AutodiffError;

pub use image::{preprocess_gray, preprocess_image, ChestImage, SourceView};
pub use network::{batch_loss, forward, FusionBatch, FusionModel};
pub use params::{cross_layer, ArchConfig, ConvLayer, CrossLayerParams, Dense, FusionParams};
pub use schema::{embedding_dim, stack_input, CategoricalSpec, FeatureSchema, Standardizer};
pub use train::{train, EpochStats, FusionSample, TrainConfig, TrainedFusion};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("empty image")]
    EmptyImage,
    #[error("image is {got:?}, model expects {expected:?}")]
    ImageSize {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("the fusion path needs an image; image-less records go to the forest")]
    MissingImage,
    #[error("unexpected image features for a schema without an image branch")]
    UnexpectedImageFeatures,
    #[error("{feature}: category {value} outside 0..{cardinality}")]
    UnknownCategory {
        feature: String,
        value: f64,
        cardinality: usize,
    },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("duplicate feature name {0}")]
    DuplicateName(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("training needs nonempty train and validation sets")]
    EmptyDataset,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}
