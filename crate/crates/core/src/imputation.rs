//! MissForest imputation.
//!
//! Missing continuous cells start at the column mean and categorical cells at
//! the column mode. Columns are then revisited in ascending order of
//! missingness: a random forest is fit on the rows where the column is
//! observed, using every other (currently completed) column as predictors,
//! and re-predicts the missing cells. Sweeps repeat until the change between
//! successive imputations stops shrinking for every variable type, at which
//! point the previous iterate is returned.
//!
//! [`fit_imputer`] additionally keeps the per-column forests so single rows
//! can be completed later without refitting.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::forest::{ColumnKind, DenseColumns, Forest, ForestConfig, ForestError, Task};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImputeError {
    #[error("column '{0}' has no observed values")]
    ColumnAllMissing(String),
    #[error("row {row} has {got} cells, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("invalid value {value} in column '{column}'")]
    InvalidValue { column: String, value: f64 },
    #[error("duplicate column name '{0}'")]
    DuplicateColumn(String),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
        }
    }

    pub fn categorical(name: impl Into<String>, n_categories: usize) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Categorical { n_categories },
        }
    }
}

/// `N × P` grid of optional values. Categorical cells hold the category
/// index as an `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    columns: Vec<Column>,
    values: Vec<Option<f64>>,
    n_rows: usize,
}

fn valid_cell(kind: ColumnKind, v: f64) -> bool {
    match kind {
        ColumnKind::Continuous => v.is_finite(),
        ColumnKind::Categorical { n_categories } => {
            v.fract() == 0.0 && v >= 0.0 && (v as usize) < n_categories
        }
    }
}

impl FeatureMatrix {
    pub fn new(columns: Vec<Column>, rows: Vec<Vec<Option<f64>>>) -> Result<Self, ImputeError> {
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|o| o.name == c.name) {
                return Err(ImputeError::DuplicateColumn(c.name.clone()));
            }
        }
        let p = columns.len();
        let n_rows = rows.len();
        let mut values = Vec::with_capacity(n_rows * p);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != p {
                return Err(ImputeError::RowWidth {
                    row: r,
                    got: row.len(),
                    expected: p,
                });
            }
            for (c, cell) in row.into_iter().enumerate() {
                if let Some(v) = cell {
                    if !valid_cell(columns[c].kind, v) {
                        return Err(ImputeError::InvalidValue {
                            column: columns[c].name.clone(),
                            value: v,
                        });
                    }
                }
                values.push(cell);
            }
        }
        Ok(FeatureMatrix {
            columns,
            values,
            n_rows,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.values[r * self.columns.len() + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        let p = self.columns.len();
        self.values[r * p + c] = Some(v);
    }

    pub fn is_missing(&self, r: usize, c: usize) -> bool {
        self.get(r, c).is_none()
    }

    /// Row-major mask, `true` where the cell is absent.
    pub fn missing_mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_none).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn missing_in_column(&self, c: usize) -> usize {
        (0..self.n_rows).filter(|&r| self.is_missing(r, c)).count()
    }

    pub fn row(&self, r: usize) -> &[Option<f64>] {
        let p = self.columns.len();
        &self.values[r * p..(r + 1) * p]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// The completed matrix as forest training columns; `None` if any cell
    /// is missing.
    pub fn to_dense(&self) -> Option<DenseColumns> {
        let p = self.columns.len();
        let mut cols = vec![Vec::with_capacity(self.n_rows); p];
        for r in 0..self.n_rows {
            for (c, col) in cols.iter_mut().enumerate() {
                col.push(self.get(r, c)?);
            }
        }
        DenseColumns::new(self.columns.iter().map(|c| c.kind).collect(), cols).ok()
    }

    /// Completed rows; panics on missing cells.
    pub fn dense_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows)
            .map(|r| self.row(r).iter().map(|v| v.expect("complete matrix")).collect())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputeConfig {
    pub max_iters: usize,
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Sweeps over the columns when completing a single row.
    pub transform_passes: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            max_iters: 10,
            n_trees: 50,
            max_depth: 10,
            min_leaf: 5,
            transform_passes: 2,
            execution: Execution::Parallel,
        }
    }
}

impl ImputeConfig {
    fn forest_config(&self) -> ForestConfig {
        ForestConfig {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            // ceil(sqrt(P - 1)) once the target column is removed
            mtry: None,
            execution: self.execution,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Imputed {
    pub completed: FeatureMatrix,
    /// Sweeps run, including the one that triggered the stop.
    pub iterations: usize,
}

/// Completes a single row using forests fitted during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnImputer {
    columns: Vec<Column>,
    initial: Vec<f64>,
    order: Vec<usize>,
    forests: Vec<Option<Forest>>,
    passes: usize,
}

fn column_init(m: &FeatureMatrix, c: usize) -> f64 {
    let observed = (0..m.n_rows()).filter_map(|r| m.get(r, c));
    match m.columns[c].kind {
        ColumnKind::Continuous => {
            let (s, n) = observed.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            s / n as f64
        }
        ColumnKind::Categorical { n_categories } => {
            let mut counts = vec![0usize; n_categories];
            for v in observed {
                counts[v as usize] += 1;
            }
            crate::forest::argmax_first(&counts) as f64
        }
    }
}

fn task_for(kind: ColumnKind) -> Task {
    match kind {
        ColumnKind::Continuous => Task::Regression,
        ColumnKind::Categorical { n_categories } => Task::Classification { n_classes: n_categories },
    }
}

/// Predictor columns (all but `target`) for the given rows of a complete
/// matrix, stored column-major.
fn predictors(current: &[Vec<f64>], kinds: &[ColumnKind], target: usize, rows: &[usize]) -> DenseColumns {
    let mut k = Vec::with_capacity(kinds.len() - 1);
    let mut cols = Vec::with_capacity(kinds.len() - 1);
    for (c, col) in current.iter().enumerate() {
        if c == target {
            continue;
        }
        k.push(kinds[c]);
        cols.push(rows.iter().map(|&r| col[r]).collect());
    }
    DenseColumns::new(k, cols).expect("validated cells")
}

fn row_without(row: &[f64], skip: usize) -> Vec<f64> {
    row.iter()
        .enumerate()
        .filter(|&(c, _)| c != skip)
        .map(|(_, &v)| v)
        .collect()
}

fn validate(m: &FeatureMatrix) -> Result<(), ImputeError> {
    for c in 0..m.n_cols() {
        if m.n_rows() > 0 && m.missing_in_column(c) == m.n_rows() {
            return Err(ImputeError::ColumnAllMissing(m.columns[c].name.clone()));
        }
    }
    Ok(())
}

/// Runs MissForest and returns the completed matrix.
pub fn impute(m: &FeatureMatrix, config: &ImputeConfig, seed: u64) -> Result<Imputed, ImputeError> {
    let (imputed, _) = run(m, config, seed)?;
    Ok(imputed)
}

/// Runs MissForest and keeps forests for every column named in
/// `imputable` so later rows can be completed with [`ColumnImputer`].
pub fn fit_imputer(
    m: &FeatureMatrix,
    imputable: &[&str],
    config: &ImputeConfig,
    seed: u64,
) -> Result<(Imputed, ColumnImputer), ImputeError> {
    let mut targets = Vec::with_capacity(imputable.len());
    for name in imputable {
        targets.push(
            m.column_index(name)
                .ok_or_else(|| ImputeError::UnknownColumn(name.to_string()))?,
        );
    }
    let (imputed, mut forests) = run(m, config, seed)?;
    let kinds: Vec<ColumnKind> = m.columns.iter().map(|c| c.kind).collect();
    let p = m.n_cols();
    let current: Vec<Vec<f64>> = (0..p)
        .map(|c| (0..m.n_rows()).map(|r| imputed.completed.get(r, c).expect("complete")).collect())
        .collect();
    let all_rows: Vec<usize> = (0..m.n_rows()).collect();
    let fcfg = config.forest_config();
    // Columns fully observed in training still need a forest for rows that
    // arrive with them missing.
    let extra: Vec<usize> = targets
        .iter()
        .copied()
        .filter(|&c| forests[c].is_none() && p > 1)
        .collect();
    let extra_seed = seed::derive(seed, u64::MAX);
    for &c in &extra {
        let x = predictors(&current, &kinds, c, &all_rows);
        let y = &current[c];
        let s = seed::item_rng(extra_seed, c as u64).next_u64();
        forests[c] = Some(Forest::fit(&x, y, task_for(kinds[c]), &fcfg, s)?);
    }
    let keep: Vec<Option<Forest>> = forests
        .into_iter()
        .enumerate()
        .map(|(c, f)| if targets.contains(&c) { f } else { None })
        .collect();
    let mut order: Vec<usize> = targets.clone();
    order.sort_by_key(|&c| (m.missing_in_column(c), c));
    order.dedup();
    let initial = (0..p).map(|c| column_init(m, c)).collect();
    let imputer = ColumnImputer {
        columns: m.columns.clone(),
        initial,
        order,
        forests: keep,
        passes: config.transform_passes.max(1),
    };
    Ok((imputed, imputer))
}

type Sweep = (Vec<Vec<f64>>, Vec<Option<Forest>>);

fn run(m: &FeatureMatrix, config: &ImputeConfig, seed: u64) -> Result<(Imputed, Vec<Option<Forest>>), ImputeError> {
    validate(m)?;
    let p = m.n_cols();
    let n = m.n_rows();
    let none_forests = || vec![None; p];
    if m.n_missing() == 0 {
        return Ok((
            Imputed {
                completed: m.clone(),
                iterations: 0,
            },
            none_forests(),
        ));
    }
    let kinds: Vec<ColumnKind> = m.columns.iter().map(|c| c.kind).collect();
    let mut current: Vec<Vec<f64>> = (0..p)
        .map(|c| {
            let init = column_init(m, c);
            (0..n).map(|r| m.get(r, c).unwrap_or(init)).collect()
        })
        .collect();
    let mut order: Vec<usize> = (0..p).filter(|&c| m.missing_in_column(c) > 0).collect();
    order.sort_by_key(|&c| (m.missing_in_column(c), c));
    let observed: Vec<Vec<usize>> = (0..p)
        .map(|c| (0..n).filter(|&r| !m.is_missing(r, c)).collect())
        .collect();
    let missing: Vec<Vec<usize>> = (0..p)
        .map(|c| (0..n).filter(|&r| m.is_missing(r, c)).collect())
        .collect();
    let has_cont = order.iter().any(|&c| kinds[c] == ColumnKind::Continuous);
    let has_cat = order.iter().any(|&c| kinds[c] != ColumnKind::Continuous);
    let n_missing_cat: usize = order
        .iter()
        .filter(|&&c| kinds[c] != ColumnKind::Continuous)
        .map(|&c| missing[c].len())
        .sum();

    let fcfg = config.forest_config();
    let mut previous: Option<Sweep> = None;
    let mut last_delta = (f64::INFINITY, f64::INFINITY);
    let mut iterations = 0;
    let mut result: Option<Sweep> = None;
    while iterations < config.max_iters {
        iterations += 1;
        let old = current.clone();
        let mut forests = none_forests();
        for &c in &order {
            let x = predictors(&current, &kinds, c, &observed[c]);
            let y: Vec<f64> = observed[c].iter().map(|&r| current[c][r]).collect();
            let s = seed::item_rng(seed, (iterations * p + c) as u64).next_u64();
            let forest = Forest::fit(&x, &y, task_for(kinds[c]), &fcfg, s)?;
            let full_rows: Vec<Vec<f64>> = missing[c]
                .iter()
                .map(|&r| {
                    let row: Vec<f64> = (0..p).map(|j| current[j][r]).collect();
                    row_without(&row, c)
                })
                .collect();
            let preds = forest.predict_rows(&full_rows)?;
            for (&r, v) in missing[c].iter().zip(preds) {
                current[c][r] = v;
            }
            forests[c] = Some(forest);
        }
        let (mut num, mut den, mut changed) = (0.0, 0.0, 0usize);
        for &c in &order {
            if kinds[c] == ColumnKind::Continuous {
                for r in 0..n {
                    num += (current[c][r] - old[c][r]).powi(2);
                    den += current[c][r].powi(2);
                }
            } else {
                changed += missing[c].iter().filter(|&&r| current[c][r] != old[c][r]).count();
            }
        }
        let delta_cont = if num == 0.0 { 0.0 } else { num / den };
        let delta_cat = if n_missing_cat == 0 {
            0.0
        } else {
            changed as f64 / n_missing_cat as f64
        };
        let improved = (has_cont && delta_cont < last_delta.0) || (has_cat && delta_cat < last_delta.1);
        if !improved {
            result = previous.take();
            break;
        }
        last_delta = (delta_cont, delta_cat);
        previous = Some((current.clone(), forests));
    }
    let (values, forests) = result.or(previous).expect("at least one sweep ran");
    let mut completed = m.clone();
    for (c, col) in values.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            if m.is_missing(r, c) {
                completed.set(r, c, v);
            }
        }
    }
    Ok((
        Imputed {
            completed,
            iterations,
        },
        forests,
    ))
}

impl ColumnImputer {
    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Names of the columns this imputer can fill.
    pub fn imputable(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|&c| self.columns[c].name.as_str())
    }

    /// Completes one row. Cells outside the imputable set must be present.
    pub fn transform_row(&self, row: &[Option<f64>]) -> Result<Vec<f64>, ImputeError> {
        let p = self.columns.len();
        if row.len() != p {
            return Err(ImputeError::RowWidth {
                row: 0,
                got: row.len(),
                expected: p,
            });
        }
        for (c, cell) in row.iter().enumerate() {
            match cell {
                Some(v) if !valid_cell(self.columns[c].kind, *v) => {
                    return Err(ImputeError::InvalidValue {
                        column: self.columns[c].name.clone(),
                        value: *v,
                    })
                }
                None if self.forests[c].is_none() => {
                    return Err(ImputeError::ColumnAllMissing(self.columns[c].name.clone()))
                }
                _ => {}
            }
        }
        let mut current: Vec<f64> = row
            .iter()
            .zip(&self.initial)
            .map(|(v, &init)| v.unwrap_or(init))
            .collect();
        if row.iter().all(Option::is_some) {
            return Ok(current);
        }
        for _ in 0..self.passes {
            for &c in &self.order {
                if row[c].is_some() {
                    continue;
                }
                let forest = self.forests[c].as_ref().expect("checked above");
                current[c] = forest.predict(&row_without(&current, c))?;
            }
        }
        Ok(current)
    }

    pub fn transform(&self, m: &FeatureMatrix) -> Result<FeatureMatrix, ImputeError> {
        let rows = (0..m.n_rows())
            .map(|r| {
                self.transform_row(m.row(r))
                    .map(|v| v.into_iter().map(Some).collect())
            })
            .collect::<Result<Vec<_>, _>>()?;
        FeatureMatrix::new(self.columns.clone(), rows)
    }
}

/// Column-mean (continuous) / mode (categorical) imputation.
pub fn mean_impute(m: &FeatureMatrix) -> Result<FeatureMatrix, ImputeError> {
    validate(m)?;
    let init: Vec<f64> = (0..m.n_cols()).map(|c| column_init(m, c)).collect();
    let rows = (0..m.n_rows())
        .map(|r| {
            m.row(r)
                .iter()
                .zip(&init)
                .map(|(v, &i)| Some(v.unwrap_or(i)))
                .collect()
        })
        .collect();
    FeatureMatrix::new(m.columns.clone(), rows)
}

/// Normalized RMSE over the cells flagged in `mask`:
/// `sqrt(mean((truth - imputed)²) / var(truth))`, both taken over the
/// masked continuous cells.
pub fn nrmse(truth: &FeatureMatrix, imputed: &FeatureMatrix, mask: &[bool]) -> f64 {
    let p = truth.n_cols();
    let mut t = Vec::new();
    let mut e = Vec::new();
    for (i, &masked) in mask.iter().enumerate() {
        let (r, c) = (i / p, i % p);
        if !masked || truth.columns[c].kind != ColumnKind::Continuous {
            continue;
        }
        let tv = truth.get(r, c).expect("truth complete");
        let iv = imputed.get(r, c).expect("imputed complete");
        t.push(tv);
        e.push((tv - iv).powi(2));
    }
    let n = t.len() as f64;
    let mean = t.iter().sum::<f64>() / n;
    let var = t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (e.iter().sum::<f64>() / n / var).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ImputeConfig {
        ImputeConfig {
            n_trees: 10,
            ..ImputeConfig::default()
        }
    }

    #[test]
    fn complete_matrix_is_returned_unchanged() {
        let m = FeatureMatrix::new(
            vec![Column::continuous("a"), Column::continuous("b")],
            vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]],
        )
        .unwrap();
        let out = impute(&m, &small_config(), 1).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.completed, m);
    }

    #[test]
    fn constant_column_imputes_constant() {
        let rows: Vec<Vec<Option<f64>>> = (0..20)
            .map(|i| vec![Some(i as f64), if i == 7 { None } else { Some(4.25) }])
            .collect();
        let m = FeatureMatrix::new(vec![Column::continuous("x"), Column::continuous("k")], rows).unwrap();
        let out = impute(&m, &small_config(), 3).unwrap();
        assert_eq!(out.completed.get(7, 1), Some(4.25));
    }

    #[test]
    fn all_missing_column_is_named() {
        let m = FeatureMatrix::new(
            vec![Column::continuous("a"), Column::continuous("lactate")],
            vec![vec![Some(1.0), None], vec![Some(2.0), None]],
        )
        .unwrap();
        assert_eq!(
            impute(&m, &small_config(), 0),
            Err(ImputeError::ColumnAllMissing("lactate".into()))
        );
    }

    #[test]
    fn categorical_column_is_imputed_from_predictor() {
        let rows: Vec<Vec<Option<f64>>> = (0..60)
            .map(|i| {
                let x = i as f64;
                let cat = if i < 30 { 0.0 } else { 2.0 };
                vec![Some(x), if i % 10 == 3 { None } else { Some(cat) }]
            })
            .collect();
        let m = FeatureMatrix::new(vec![Column::continuous("x"), Column::categorical("c", 3)], rows).unwrap();
        let out = impute(&m, &small_config(), 5).unwrap();
        assert_eq!(out.completed.get(3, 1), Some(0.0));
        assert_eq!(out.completed.get(53, 1), Some(2.0));
        assert_eq!(out.completed.n_missing(), 0);
    }

    #[test]
    fn imputer_fills_single_rows() {
        let rows: Vec<Vec<Option<f64>>> = (0..80)
            .map(|i| {
                let x = i as f64;
                vec![Some(x), if i % 7 == 0 { None } else { Some(2.0 * x) }]
            })
            .collect();
        let m = FeatureMatrix::new(vec![Column::continuous("x"), Column::continuous("y")], rows).unwrap();
        let (_, imp) = fit_imputer(&m, &["x", "y"], &small_config(), 2).unwrap();
        let filled = imp.transform_row(&[Some(40.0), None]).unwrap();
        assert!((filled[1] - 80.0).abs() < 10.0, "{filled:?}");
        let filled = imp.transform_row(&[None, Some(100.0)]).unwrap();
        assert!((filled[0] - 50.0).abs() < 10.0, "{filled:?}");
        let same = imp.transform_row(&[Some(1.0), Some(3.0)]).unwrap();
        assert_eq!(same, vec![1.0, 3.0]);
    }
}
