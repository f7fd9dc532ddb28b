//! Inclusion and exclusion rules.

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::{PatientRecord, PcrResult};

/// Shortest plausible visit, in minutes.
pub const MIN_VISIT_MINUTES: f64 = 5.0;
/// Longest plausible visit (7 days), in minutes.
pub const MAX_VISIT_MINUTES: f64 = 7.0 * 24.0 * 60.0;

const MIN_AGE: f64 = 15.0;
const PCR_LOOKBACK_DAYS: i64 = 14;

/// Why a record was excluded. Variants are listed in evaluation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Age,
    NoSuspicion,
    ConfirmedNegative,
    ContradictoryTimestamps,
    VisitDuration,
}

impl ExclusionReason {
    pub fn name(self) -> &'static str {
        match self {
            ExclusionReason::Age => "age",
            ExclusionReason::NoSuspicion => "no_suspicion",
            ExclusionReason::ConfirmedNegative => "confirmed_negative",
            ExclusionReason::ContradictoryTimestamps => "contradictory_timestamps",
            ExclusionReason::VisitDuration => "visit_duration",
        }
    }
}

fn pcr_in_window(r: &PatientRecord) -> bool {
    let Some(t) = r.pcr_time else {
        return false;
    };
    // ordered at this visit (any time up to the decision) or within the lookback
    t >= r.visit_time - Duration::days(PCR_LOOKBACK_DAYS) && t <= r.decision_time.max(r.visit_time)
}

fn prior_negative(r: &PatientRecord) -> bool {
    match (r.covid_pcr_result, r.pcr_time) {
        (Some(PcrResult::Negative), Some(t)) => {
            t >= r.visit_time - Duration::days(PCR_LOOKBACK_DAYS) && t < r.visit_time
        }
        _ => false,
    }
}

/// First failing rule for a record, or `None` if it is included.
pub fn exclusion_reason(r: &PatientRecord) -> Option<ExclusionReason> {
    if r.age < MIN_AGE {
        return Some(ExclusionReason::Age);
    }
    if !(r.covid_pcr_ordered && pcr_in_window(r)) {
        return Some(ExclusionReason::NoSuspicion);
    }
    if prior_negative(r) {
        return Some(ExclusionReason::ConfirmedNegative);
    }
    if r.decision_time < r.visit_time {
        return Some(ExclusionReason::ContradictoryTimestamps);
    }
    let minutes = r.visit_minutes();
    if !(MIN_VISIT_MINUTES..=MAX_VISIT_MINUTES).contains(&minutes) {
        return Some(ExclusionReason::VisitDuration);
    }
    None
}

/// Splits records into the included list and a log of `(id, reason)` for the rest.
pub fn apply_inclusion_criteria(
    records: &[PatientRecord],
) -> (Vec<PatientRecord>, Vec<(String, ExclusionReason)>) {
    let mut included = Vec::new();
    let mut log = Vec::new();
    for r in records {
        match exclusion_reason(r) {
            None => included.push(r.clone()),
            Some(reason) => log.push((r.patient_id.clone(), reason)),
        }
    }
    (included, log)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cohort::{Comorbidity, Lab, Race, Sex, Vital};
    use chrono::NaiveDate;

    pub(crate) fn base_record() -> PatientRecord {
        let visit = NaiveDate::from_ymd_opt(2020, 4, 10)
            .unwrap()
            .and_hms_opt(12, 0, 0)
            .unwrap();
        PatientRecord {
            patient_id: "p1".into(),
            site_id: 1,
            visit_time: visit,
            decision_time: visit + Duration::hours(4),
            age: 40.0,
            sex: Sex::Female,
            race: Race::White,
            smoking: false,
            covid_pcr_ordered: true,
            covid_pcr_result: Some(PcrResult::Positive),
            pcr_time: Some(visit + Duration::minutes(30)),
            comorbidities: [false; Comorbidity::COUNT],
            vitals: [None; Vital::COUNT],
            labs: [None; Lab::COUNT],
            avpu: None,
            presenting_device: None,
            image: None,
        }
    }

    #[test]
    fn included_baseline() {
        assert_eq!(exclusion_reason(&base_record()), None);
    }

    #[test]
    fn under_fifteen() {
        let mut r = base_record();
        r.age = 14.9;
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::Age));
    }

    #[test]
    fn no_pcr() {
        let mut r = base_record();
        r.covid_pcr_ordered = false;
        r.covid_pcr_result = None;
        r.pcr_time = None;
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::NoSuspicion));
        let mut r = base_record();
        r.pcr_time = Some(r.visit_time - Duration::days(20));
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::NoSuspicion));
    }

    #[test]
    fn negative_ten_days_prior() {
        let mut r = base_record();
        r.covid_pcr_result = Some(PcrResult::Negative);
        r.pcr_time = Some(r.visit_time - Duration::days(10));
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::ConfirmedNegative));
    }

    #[test]
    fn prior_positive_and_pending_are_included() {
        let mut r = base_record();
        r.pcr_time = Some(r.visit_time - Duration::days(3));
        assert_eq!(exclusion_reason(&r), None);
        r.covid_pcr_result = None;
        assert_eq!(exclusion_reason(&r), None);
    }

    #[test]
    fn negative_at_visit_is_included() {
        let mut r = base_record();
        r.covid_pcr_result = Some(PcrResult::Negative);
        assert_eq!(exclusion_reason(&r), None);
    }

    #[test]
    fn timestamps_and_duration() {
        let mut r = base_record();
        r.decision_time = r.visit_time - Duration::hours(1);
        r.pcr_time = Some(r.visit_time - Duration::hours(2));
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::ContradictoryTimestamps));
        let mut r = base_record();
        r.decision_time = r.visit_time + Duration::minutes(2);
        r.pcr_time = Some(r.visit_time);
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::VisitDuration));
        let mut r = base_record();
        r.decision_time = r.visit_time + Duration::days(8);
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::VisitDuration));
    }

    #[test]
    fn first_reason_wins() {
        let mut r = base_record();
        r.age = 10.0;
        r.covid_pcr_ordered = false;
        assert_eq!(exclusion_reason(&r), Some(ExclusionReason::Age));
    }
}
