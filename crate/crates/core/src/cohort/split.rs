//! Train/validation/test splits by site or by visit date.

use std::collections::BTreeSet;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CohortError, PatientRecord};
use crate::seed;

pub const N_SITES: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    BySite,
    ByPeriod,
}

/// Inclusive date range of visit dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub label: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(label: &str, start: NaiveDate, end: NaiveDate) -> Self {
        DateWindow {
            label: label.to_string(),
            start,
            end,
        }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }

    fn overlaps(&self, other: &DateWindow) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitSpec {
    BySite {
        train_sites: Vec<u8>,
        test_sites: Vec<u8>,
        #[serde(default = "default_validation_fraction")]
        validation_fraction: f64,
    },
    ByPeriod {
        train: DateWindow,
        test_windows: Vec<DateWindow>,
        #[serde(default = "default_validation_fraction")]
        validation_fraction: f64,
    },
}

fn default_validation_fraction() -> f64 {
    0.2
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

impl SplitSpec {
    /// Sites 1 and 2 for training, 3 to 5 for testing.
    pub fn default_sites() -> Self {
        SplitSpec::BySite {
            train_sites: vec![1, 2],
            test_sites: vec![3, 4, 5],
            validation_fraction: default_validation_fraction(),
        }
    }

    /// March and April for training, three May windows for testing.
    pub fn default_periods() -> Self {
        SplitSpec::ByPeriod {
            train: DateWindow::new("train", ymd(2020, 3, 1), ymd(2020, 4, 30)),
            test_windows: vec![
                DateWindow::new("I", ymd(2020, 5, 1), ymd(2020, 5, 10)),
                DateWindow::new("II", ymd(2020, 5, 11), ymd(2020, 5, 20)),
                DateWindow::new("III", ymd(2020, 5, 21), ymd(2020, 5, 31)),
            ],
            validation_fraction: default_validation_fraction(),
        }
    }

    pub fn kind(&self) -> SplitKind {
        match self {
            SplitSpec::BySite { .. } => SplitKind::BySite,
            SplitSpec::ByPeriod { .. } => SplitKind::ByPeriod,
        }
    }

    fn validation_fraction(&self) -> f64 {
        match self {
            SplitSpec::BySite {
                validation_fraction, ..
            }
            | SplitSpec::ByPeriod {
                validation_fraction, ..
            } => *validation_fraction,
        }
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let err = |m: String| Err(CohortError::Split(m));
        let vf = self.validation_fraction();
        if !(0.0..1.0).contains(&vf) {
            return err(format!("validation_fraction {vf} outside [0, 1)"));
        }
        match self {
            SplitSpec::BySite {
                train_sites,
                test_sites,
                ..
            } => {
                if train_sites.is_empty() || test_sites.is_empty() {
                    return err("train and test site lists must be nonempty".into());
                }
                let mut seen = BTreeSet::new();
                for &s in train_sites.iter().chain(test_sites) {
                    if !(1..=N_SITES).contains(&s) {
                        return err(format!("unknown site id {s}"));
                    }
                    if !seen.insert(s) {
                        return err(format!("site {s} listed twice"));
                    }
                }
            }
            SplitSpec::ByPeriod {
                train,
                test_windows,
                ..
            } => {
                if test_windows.is_empty() {
                    return err("at least one test window is required".into());
                }
                let all: Vec<&DateWindow> = std::iter::once(train).chain(test_windows).collect();
                for w in &all {
                    if w.start > w.end {
                        return err(format!("window {} is empty ({} > {})", w.label, w.start, w.end));
                    }
                }
                for (i, a) in all.iter().enumerate() {
                    for b in &all[i + 1..] {
                        if a.overlaps(b) {
                            return err(format!("windows {} and {} overlap", a.label, b.label));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Patient ids per partition, each in cohort order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSplit {
    pub split_kind: SplitKind,
    pub train_ids: Vec<String>,
    pub validation_ids: Vec<String>,
    pub test_ids: Vec<String>,
    /// For period splits, the test ids of each window; a single entry for site splits.
    pub test_windows: Vec<(String, Vec<String>)>,
}

/// Assigns every record to exactly one partition.
pub fn split_cohort(
    records: &[PatientRecord],
    spec: &SplitSpec,
    seed: u64,
) -> Result<CohortSplit, CohortError> {
    spec.validate()?;
    let mut pool = Vec::new();
    let mut test_ids = Vec::new();
    let mut windows: Vec<(String, Vec<String>)>;
    match spec {
        SplitSpec::BySite {
            train_sites,
            test_sites,
            ..
        } => {
            windows = vec![("test".to_string(), Vec::new())];
            for r in records {
                if train_sites.contains(&r.site_id) {
                    pool.push(r.patient_id.clone());
                } else if test_sites.contains(&r.site_id) {
                    test_ids.push(r.patient_id.clone());
                    windows[0].1.push(r.patient_id.clone());
                } else {
                    return Err(CohortError::Split(format!(
                        "record {} has site {} which is in neither site list",
                        r.patient_id, r.site_id
                    )));
                }
            }
        }
        SplitSpec::ByPeriod {
            train,
            test_windows,
            ..
        } => {
            windows = test_windows
                .iter()
                .map(|w| (w.label.clone(), Vec::new()))
                .collect();
            for r in records {
                let d = r.visit_time.date();
                if train.contains(d) {
                    pool.push(r.patient_id.clone());
                } else if let Some(i) = test_windows.iter().position(|w| w.contains(d)) {
                    test_ids.push(r.patient_id.clone());
                    windows[i].1.push(r.patient_id.clone());
                } else {
                    return Err(CohortError::Split(format!(
                        "record {} visit date {d} falls outside every window",
                        r.patient_id
                    )));
                }
            }
            if let Some((label, _)) = windows.iter().find(|(_, ids)| ids.is_empty()) {
                return Err(CohortError::Split(format!("test window {label} has no visits")));
            }
        }
    }
    if pool.is_empty() {
        return Err(CohortError::Split("training partition is empty".into()));
    }
    if test_ids.is_empty() {
        return Err(CohortError::Split("test partition is empty".into()));
    }

    let n_val = (spec.validation_fraction() * pool.len() as f64).round() as usize;
    let n_val = n_val.min(pool.len() - 1);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.shuffle(&mut seed::item_rng(seed, 0));
    let val_set: BTreeSet<usize> = order[..n_val].iter().copied().collect();
    let mut train_ids = Vec::new();
    let mut validation_ids = Vec::new();
    for (i, id) in pool.into_iter().enumerate() {
        if val_set.contains(&i) {
            validation_ids.push(id);
        } else {
            train_ids.push(id);
        }
    }
    Ok(CohortSplit {
        split_kind: spec.kind(),
        train_ids,
        validation_ids,
        test_ids,
        test_windows: windows,
    })
}
