use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FusionError;
use crate::autodiff::Tensor;
use crate::forest::ColumnKind;
use crate::imputation::Column;

/// `ceil(sqrt(cardinality))`, capped at 8.
pub fn embedding_dim(cardinality: usize) -> usize {
    ((cardinality as f64).sqrt().ceil() as usize).clamp(1, 8)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoricalSpec {
    pub name: String,
    pub cardinality: usize,
    pub embedding_dim: usize,
}

/// Fixes the stacking order of `x0`: continuous, embeddings, image features.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub continuous_features: Vec<String>,
    pub categorical_features: Vec<CategoricalSpec>,
    pub image_feature_dim: usize,
}

impl FeatureSchema {
    pub fn new(
        continuous_features: Vec<String>,
        categorical_features: Vec<CategoricalSpec>,
        image_feature_dim: usize,
    ) -> Result<Self, FusionError> {
        let mut seen = BTreeSet::new();
        for name in continuous_features
            .iter()
            .chain(categorical_features.iter().map(|c| &c.name))
        {
            if !seen.insert(name) {
                return Err(FusionError::DuplicateName(name.clone()));
            }
        }
        for c in &categorical_features {
            if c.embedding_dim == 0 || c.cardinality == 0 {
                return Err(FusionError::Dimension {
                    what: "embedding",
                    expected: 1,
                    got: 0,
                });
            }
        }
        Ok(FeatureSchema {
            continuous_features,
            categorical_features,
            image_feature_dim,
        })
    }

    /// Schema over matrix columns, in their order within each kind.
    pub fn from_columns(columns: &[Column], image_feature_dim: usize) -> Result<Self, FusionError> {
        let mut cont = Vec::new();
        let mut cat = Vec::new();
        for c in columns {
            match c.kind {
                ColumnKind::Continuous => cont.push(c.name.clone()),
                ColumnKind::Categorical { n_categories } => cat.push(CategoricalSpec {
                    name: c.name.clone(),
                    cardinality: n_categories,
                    embedding_dim: embedding_dim(n_categories),
                }),
            }
        }
        FeatureSchema::new(cont, cat, image_feature_dim)
    }

    /// Width of a feature row (continuous then categorical indices).
    pub fn row_width(&self) -> usize {
        self.continuous_features.len() + self.categorical_features.len()
    }

    pub fn embedding_width(&self) -> usize {
        self.categorical_features.iter().map(|c| c.embedding_dim).sum()
    }

    /// `|x0|`.
    pub fn input_dim(&self) -> usize {
        self.continuous_features.len() + self.embedding_width() + self.image_feature_dim
    }

    /// Category indices of a row, validated against cardinalities.
    pub fn category_indices(&self, row: &[f64]) -> Result<Vec<usize>, FusionError> {
        self.check_row(row)?;
        let off = self.continuous_features.len();
        self.categorical_features
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let v = row[off + k];
                if v.fract() != 0.0 || v < 0.0 || v as usize >= c.cardinality {
                    Err(FusionError::UnknownCategory {
                        feature: c.name.clone(),
                        value: v,
                        cardinality: c.cardinality,
                    })
                } else {
                    Ok(v as usize)
                }
            })
            .collect()
    }

    fn check_row(&self, row: &[f64]) -> Result<(), FusionError> {
        if row.len() != self.row_width() {
            return Err(FusionError::Dimension {
                what: "feature row",
                expected: self.row_width(),
                got: row.len(),
            });
        }
        Ok(())
    }
}

/// Training-split mean and SD of each continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Fits on the continuous prefix of `rows`; zero spread maps to SD 1.
    pub fn fit(rows: &[&[f64]], n_continuous: usize) -> Standardizer {
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..n_continuous)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let sd = (0..n_continuous)
            .map(|j| {
                let var = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if var > 0.0 {
                    var.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, sd }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.sd)
            .zip(row)
            .map(|((m, s), v)| (v - m) / s)
            .collect()
    }
}

/// `x0` for one completed feature row: standardized continuous values, the
/// embedding of each categorical, then the image feature vector.
pub fn stack_input(
    row: &[f64],
    image_features: Option<&[f64]>,
    schema: &FeatureSchema,
    standardizer: &Standardizer,
    embeddings: &[Tensor],
) -> Result<Vec<f64>, FusionError> {
    let idx = schema.category_indices(row)?;
    if embeddings.len() != schema.categorical_features.len() {
        return Err(FusionError::Dimension {
            what: "embedding tables",
            expected: schema.categorical_features.len(),
            got: embeddings.len(),
        });
    }
    let mut x0 = standardizer.apply(&row[..schema.continuous_features.len()]);
    for ((c, table), &i) in schema.categorical_features.iter().zip(embeddings).zip(&idx) {
        let d = c.embedding_dim;
        x0.extend_from_slice(&table.data()[i * d..(i + 1) * d]);
    }
    match (image_features, schema.image_feature_dim) {
        (Some(f), dim) if f.len() == dim && dim > 0 => x0.extend_from_slice(f),
        (Some(f), dim) if dim > 0 => {
            return Err(FusionError::Dimension {
                what: "image features",
                expected: dim,
                got: f.len(),
            })
        }
        (Some(_), _) => return Err(FusionError::UnexpectedImageFeatures),
        (None, 0) => {}
        (None, _) => return Err(FusionError::MissingImage),
    }
    Ok(x0)
}
