use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    pub mean_increase: f64,
}

pub fn mean_squared_error(pred: &[f64], y: &[f64]) -> f64 {
    pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len().max(1) as f64
}

/// Mean error increase when each column of `rows` is shuffled across rows,
/// sorted by decreasing importance then feature name. Repeat `r` of feature
/// `j` uses RNG stream `j * n_repeats + r`.
#[allow(clippy::too_many_arguments)]
pub fn permutation_importance<P, E>(
    names: &[String],
    rows: &[Vec<f64>],
    y: &[f64],
    predict: P,
    error: E,
    n_repeats: usize,
    seed: u64,
    execution: Execution,
) -> Vec<Importance>
where
    P: Fn(&[Vec<f64>]) -> Vec<f64> + Sync,
    E: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let p = names.len();
    let baseline = error(&predict(rows), y);
    let n_repeats = n_repeats.max(1);
    let errors = execution.map_indexed(p * n_repeats, |task| {
        let (j, _) = (task / n_repeats, task % n_repeats);
        let mut column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        column.shuffle(&mut seed::item_rng(seed, task as u64));
        let permuted: Vec<Vec<f64>> = rows
            .iter()
            .zip(&column)
            .map(|(r, v)| {
                let mut r = r.clone();
                r[j] = *v;
                r
            })
            .collect();
        error(&predict(&permuted), y)
    });
    let mut out: Vec<Importance> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let chunk = &errors[j * n_repeats..(j + 1) * n_repeats];
            Importance {
                feature: name.clone(),
                mean_increase: chunk.iter().map(|e| e - baseline).sum::<f64>() / n_repeats as f64,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.mean_increase
            .total_cmp(&a.mean_increase)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    out
}
