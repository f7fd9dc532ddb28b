//! Evaluation statistics: ROC/AUC, bootstrap intervals, permutation
//! importance, Kaplan-Meier and log-rank, physician operating points and
//! rank-based group comparisons.

mod bootstrap;
mod groups;
mod importance;
mod operating;
mod roc;
mod survival;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_statistic, percentile_nearest_rank, BootstrapConfig, ConfidenceInterval, Resample};
pub use groups::{group_stats, mann_whitney, summarize, GroupComparison, MannWhitney, Summary};
pub use importance::{mean_squared_error, permutation_importance, Importance};
pub use operating::{
    closest_roc_threshold, operating_point_at_sensitivity, physician_operating_point, OperatingPoint,
};
pub use roc::{auc, roc, RocCurve, RocPoint};
pub use survival::{km_estimate, logrank_test, KmCurve, KmStep, LogRank};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("labels contain a single class")]
    SingleClass,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("log-rank test undefined: no events in any group")]
    NoEvents,
    #[error("log-rank test needs at least two nonempty groups")]
    TooFewGroups,
    #[error("sensitivity undefined: no positive cases")]
    NoPositives,
    #[error("specificity undefined: no negative cases")]
    NoNegatives,
    #[error("physician comparison accepts only floor/icu dispositions, got {0}")]
    UnexpectedDisposition(String),
    #[error("target sensitivity {target} exceeds the curve's maximum {max}")]
    Unreachable { target: f64, max: f64 },
    #[error("bootstrap resample {resample}: no valid resample after {attempts} attempts")]
    RetryCap { resample: usize, attempts: usize },
}

impl EvalError {
    /// Errors that a different bootstrap resample may avoid.
    pub fn is_resample_dependent(&self) -> bool {
        matches!(
            self,
            EvalError::SingleClass | EvalError::NoPositives | EvalError::NoNegatives | EvalError::NoEvents
        )
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}
