//! CART random forests.
//!
//! Regression trees split on variance reduction, classification trees on Gini
//! decrease. Each tree is grown on a bootstrap sample drawn from its own
//! ChaCha8 stream, so a forest depends only on `(data, config, seed)` and not
//! on how tree fitting is scheduled.

mod tree;

pub use tree::{SplitRule, Tree, TreeNode};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

/// Largest categorical cardinality a category-set split can encode.
pub const MAX_CATEGORIES: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForestError {
    #[error("training data is empty")]
    Empty,
    #[error("{rows} feature rows but {targets} targets")]
    RowMismatch { rows: usize, targets: usize },
    #[error("expected {expected} features, got {got}")]
    SchemaMismatch { expected: usize, got: usize },
    #[error("feature {feature} declares {categories} categories (max {MAX_CATEGORIES})")]
    TooManyCategories { feature: usize, categories: usize },
    #[error("invalid value {value} for feature {feature}")]
    InvalidFeatureValue { feature: usize, value: f64 },
    #[error("target {value} is not a class index below {n_classes}")]
    InvalidClass { value: f64, n_classes: usize },
    #[error("non-finite target at row {0}")]
    NonFiniteTarget(usize),
    #[error("invalid forest config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical { n_categories: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification { n_classes: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn per node; `None` means `ceil(sqrt(P))`.
    pub mtry: Option<usize>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 200,
            max_depth: 12,
            min_leaf: 5,
            mtry: None,
            execution: Execution::Parallel,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

/// Complete (no missing cells) column-major training matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseColumns {
    kinds: Vec<ColumnKind>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl DenseColumns {
    pub fn new(kinds: Vec<ColumnKind>, columns: Vec<Vec<f64>>) -> Result<Self, ForestError> {
        if kinds.len() != columns.len() {
            return Err(ForestError::SchemaMismatch {
                expected: kinds.len(),
                got: columns.len(),
            });
        }
        let n_rows = columns.first().map_or(0, Vec::len);
        for (f, (kind, col)) in kinds.iter().zip(&columns).enumerate() {
            if col.len() != n_rows {
                return Err(ForestError::RowMismatch {
                    rows: n_rows,
                    targets: col.len(),
                });
            }
            if let ColumnKind::Categorical { n_categories } = *kind {
                if n_categories > MAX_CATEGORIES {
                    return Err(ForestError::TooManyCategories {
                        feature: f,
                        categories: n_categories,
                    });
                }
                if let Some(&bad) = col
                    .iter()
                    .find(|v| !(v.fract() == 0.0 && **v >= 0.0 && (**v as usize) < n_categories))
                {
                    return Err(ForestError::InvalidFeatureValue { feature: f, value: bad });
                }
            } else if let Some(&bad) = col.iter().find(|v| !v.is_finite()) {
                return Err(ForestError::InvalidFeatureValue { feature: f, value: bad });
            }
        }
        Ok(DenseColumns {
            kinds,
            columns,
            n_rows,
        })
    }

    /// Builds from row-major data.
    pub fn from_rows(kinds: Vec<ColumnKind>, rows: &[Vec<f64>]) -> Result<Self, ForestError> {
        let p = kinds.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for row in rows {
            if row.len() != p {
                return Err(ForestError::SchemaMismatch {
                    expected: p,
                    got: row.len(),
                });
            }
            for (c, &v) in columns.iter_mut().zip(row) {
                c.push(v);
            }
        }
        DenseColumns::new(kinds, columns)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.kinds.len()
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn column(&self, f: usize) -> &[f64] {
        &self.columns[f]
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[r]).collect()
    }

    fn select_rows(&self, order: &[usize]) -> DenseColumns {
        DenseColumns {
            kinds: self.kinds.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| order.iter().map(|&i| c[i]).collect())
                .collect(),
            n_rows: order.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    config: ForestConfig,
    per_tree_seeds: Vec<u64>,
    task: Task,
    kinds: Vec<ColumnKind>,
}

impl Forest {
    pub fn fit(
        x: &DenseColumns,
        y: &[f64],
        task: Task,
        config: &ForestConfig,
        seed: u64,
    ) -> Result<Forest, ForestError> {
        if x.n_rows() == 0 || y.is_empty() {
            return Err(ForestError::Empty);
        }
        if x.n_rows() != y.len() {
            return Err(ForestError::RowMismatch {
                rows: x.n_rows(),
                targets: y.len(),
            });
        }
        if x.n_features() == 0 {
            return Err(ForestError::SchemaMismatch {
                expected: 1,
                got: 0,
            });
        }
        if config.n_trees == 0 || config.min_leaf == 0 {
            return Err(ForestError::Config(
                "n_trees and min_leaf must be positive".into(),
            ));
        }
        for (i, &v) in y.iter().enumerate() {
            if !v.is_finite() {
                return Err(ForestError::NonFiniteTarget(i));
            }
            if let Task::Classification { n_classes } = task {
                if v.fract() != 0.0 || v < 0.0 || v as usize >= n_classes {
                    return Err(ForestError::InvalidClass {
                        value: v,
                        n_classes,
                    });
                }
            }
        }
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let per_tree_seeds: Vec<u64> = (0..config.n_trees).map(|_| seeder.next_u64()).collect();
        let mtry = config.resolved_mtry(x.n_features());
        let trees = config.execution.map_indexed(config.n_trees, |t| {
            Tree::grow(x, y, task, config, mtry, per_tree_seeds[t])
        });
        Ok(Forest {
            trees,
            config: config.clone(),
            per_tree_seeds,
            task,
            kinds: x.kinds().to_vec(),
        })
    }

    /// Fits on rows reordered by `keys`, so the forest depends on which key
    /// each row carries and not on the position it arrived in.
    pub fn fit_keyed(
        x: &DenseColumns,
        y: &[f64],
        keys: &[u64],
        task: Task,
        config: &ForestConfig,
        seed: u64,
    ) -> Result<Forest, ForestError> {
        if keys.len() != x.n_rows() || y.len() != x.n_rows() {
            return Err(ForestError::RowMismatch {
                rows: x.n_rows(),
                targets: keys.len().min(y.len()),
            });
        }
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by_key(|&i| keys[i]);
        let xs = x.select_rows(&order);
        let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();
        Forest::fit(&xs, &ys, task, config, seed)
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn per_tree_seeds(&self) -> &[u64] {
        &self.per_tree_seeds
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.kinds.len()
    }

    fn check_row(&self, row: &[f64]) -> Result<(), ForestError> {
        if row.len() != self.kinds.len() {
            return Err(ForestError::SchemaMismatch {
                expected: self.kinds.len(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Mean of tree outputs (regression) or the majority-vote class index
    /// (classification; ties go to the lowest class).
    pub fn predict(&self, row: &[f64]) -> Result<f64, ForestError> {
        self.check_row(row)?;
        match self.task {
            Task::Regression => {
                Ok(shifted_mean(self.trees.iter().map(|t| t.predict_value(row))))
            }
            Task::Classification { n_classes } => {
                let mut votes = vec![0usize; n_classes];
                for t in &self.trees {
                    votes[t.predict_class(row)] += 1;
                }
                Ok(argmax_first(&votes) as f64)
            }
        }
    }

    /// Regression prediction clamped to `[0, 1]`, for the outcome label.
    pub fn predict_unit(&self, row: &[f64]) -> Result<f64, ForestError> {
        Ok(self.predict(row)?.clamp(0.0, 1.0))
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, ForestError> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

/// Mean computed as `first + mean(v - first)`, exact for constant input.
pub(crate) fn shifted_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut values = values.peekable();
    let first = match values.peek() {
        Some(&v) => v,
        None => return f64::NAN,
    };
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + (v - first), n + 1));
    first + s / n as f64
}

pub(crate) fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
