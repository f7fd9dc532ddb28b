use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError};
use crate::exec::Execution;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resample {
    /// Draw n indices with replacement.
    #[default]
    WithReplacement,
    /// Use the full sample unchanged (for checking the machinery).
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub n_boot: usize,
    pub level: f64,
    /// Redraws allowed per resample when the statistic is undefined on it.
    pub max_attempts: usize,
    pub resample: Resample,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            n_boot: 1000,
            level: 0.95,
            max_attempts: 100,
            resample: Resample::WithReplacement,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
}

/// Nearest-rank percentile of sorted data: the value at rank `ceil(p * n)`.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Percentile interval of `stat` over resampled index sets. Resample `b`
/// draws from its own RNG stream, so results do not depend on scheduling.
pub fn bootstrap_statistic<F>(
    n: usize,
    stat: F,
    config: &BootstrapConfig,
    seed: u64,
) -> Result<(ConfidenceInterval, Vec<f64>), EvalError>
where
    F: Fn(&[usize]) -> Result<f64, EvalError> + Sync,
{
    if n == 0 || config.n_boot == 0 {
        return Err(EvalError::Empty);
    }
    let values = config.execution.try_map_indexed(config.n_boot, |b| {
        let mut rng = seed::item_rng(seed, b as u64);
        let mut idx: Vec<usize> = (0..n).collect();
        for _ in 0..config.max_attempts.max(1) {
            if config.resample == Resample::WithReplacement {
                for slot in idx.iter_mut() {
                    *slot = rng.random_range(0..n);
                }
            }
            match stat(&idx) {
                Ok(v) => return Ok(v),
                Err(e) if e.is_resample_dependent() && config.resample == Resample::WithReplacement => {}
                Err(e) => return Err(e),
            }
        }
        Err(EvalError::RetryCap {
            resample: b,
            attempts: config.max_attempts,
        })
    })?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - config.level) / 2.0;
    let ci = ConfidenceInterval {
        lo: percentile_nearest_rank(&sorted, tail),
        hi: percentile_nearest_rank(&sorted, 1.0 - tail),
    };
    Ok((ci, values))
}

/// Bootstrap interval for a statistic of paired scores and binary labels.
pub fn bootstrap_ci<F>(
    scores: &[f64],
    labels: &[bool],
    statistic: F,
    config: &BootstrapConfig,
    seed: u64,
) -> Result<ConfidenceInterval, EvalError>
where
    F: Fn(&[f64], &[bool]) -> Result<f64, EvalError> + Sync,
{
    check_lengths(scores.len(), labels.len())?;
    let (ci, _) = bootstrap_statistic(
        scores.len(),
        |idx| {
            let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
            let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
            statistic(&s, &l)
        },
        config,
        seed,
    )?;
    Ok(ci)
}
