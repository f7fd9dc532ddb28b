//! Tabular text files for cohorts and outcomes, plus the image directory.
//!
//! Column names are the canonical feature vocabulary; an empty cell means
//! missing. Timestamps are ISO-8601 without zone (`2020-03-05T13:45:00`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::{
    Avpu, Cohort, CohortError, Comorbidity, Disposition, Lab, OutcomeRecord, OxygenTherapyLevel,
    PatientRecord, PcrResult, Race, Sex, Vital,
};
use crate::pnm::GrayImage;

pub const COHORT_FILE: &str = "cohort.csv";
pub const OUTCOMES_FILE: &str = "outcomes.csv";
pub const IMAGES_DIR: &str = "images";

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const HEAD: [&str; 11] = [
    "patient_id",
    "site_id",
    "visit_time",
    "decision_time",
    "age",
    "sex",
    "race",
    "smoking",
    "covid_pcr_ordered",
    "covid_pcr_result",
    "pcr_time",
];
const TAIL: [&str; 3] = ["avpu", "presenting_device", "image"];

const OUTCOME_HEADER: [&str; 8] = [
    "patient_id",
    "max_therapy_24h",
    "max_therapy_72h",
    "died_24h",
    "died_72h",
    "death_time",
    "disposition",
    "followup_days",
];

/// Column names of the cohort file, in order.
pub fn record_header() -> Vec<&'static str> {
    let mut h: Vec<&'static str> = HEAD.to_vec();
    h.extend(Comorbidity::ALL.iter().map(|c| c.name()));
    h.extend(Vital::ALL.iter().map(|v| v.name()));
    h.extend(Lab::ALL.iter().map(|l| l.name()));
    h.extend(TAIL);
    h
}

/// A problem with one named field of an input record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn join(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn format_time(t: NaiveDateTime) -> String {
    t.format(TIME_FORMAT).to_string()
}

pub fn parse_time(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIME_FORMAT).ok()
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// Looks up the raw text of a named field.
pub type FieldSource<'s> = &'s dyn Fn(&str) -> Option<String>;

struct Fields<'s> {
    get: FieldSource<'s>,
    errors: Vec<FieldError>,
}

impl Fields<'_> {
    fn fail(&mut self, field: &str, message: String) {
        self.errors.push(FieldError {
            field: field.to_string(),
            message,
        });
    }

    fn optional<T>(&mut self, field: &str, parse: impl Fn(&str) -> Option<T>, expected: &str) -> Option<T> {
        let raw = (self.get)(field)?;
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        let v = parse(raw);
        if v.is_none() {
            self.fail(field, format!("expected {expected}, got {raw:?}"));
        }
        v
    }

    fn required<T>(&mut self, field: &str, parse: impl Fn(&str) -> Option<T>, expected: &str) -> Option<T> {
        let present = (self.get)(field).is_some_and(|s| !s.trim().is_empty());
        if !present {
            self.fail(field, "required field is missing".into());
            return None;
        }
        self.optional(field, parse, expected)
    }

    fn real(&mut self, field: &str) -> Option<f64> {
        self.optional(field, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()), "a finite number")
    }
}

fn allowed<T: Copy>(all: &[T], name: fn(T) -> &'static str) -> String {
    let names: Vec<&str> = all.iter().map(|v| name(*v)).collect();
    format!("one of {}", names.join(", "))
}

/// Builds a record from named text fields; every problem is reported.
pub fn parse_record(get: FieldSource<'_>) -> Result<PatientRecord, Vec<FieldError>> {
    let mut f = Fields {
        get,
        errors: Vec::new(),
    };
    let patient_id = f.required("patient_id", |s| Some(s.to_string()), "an identifier");
    let site_id = f.required("site_id", |s| s.parse::<u8>().ok().filter(|v| (1..=5).contains(v)), "a site id 1-5");
    let visit_time = f.required("visit_time", parse_time, "a timestamp");
    let decision_time = f.required("decision_time", parse_time, "a timestamp");
    let age = f.required("age", |s| s.parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0), "a positive age");
    let sex = f.required("sex", Sex::from_name, &allowed(Sex::ALL, Sex::name));
    let race = f.required("race", Race::from_name, &allowed(Race::ALL, Race::name));
    let smoking = f.optional("smoking", parse_bool, "a boolean").unwrap_or(false);
    let covid_pcr_ordered = f.optional("covid_pcr_ordered", parse_bool, "a boolean").unwrap_or(false);
    let covid_pcr_result = f.optional(
        "covid_pcr_result",
        PcrResult::from_name,
        &allowed(PcrResult::ALL, PcrResult::name),
    );
    let pcr_time = f.optional("pcr_time", parse_time, "a timestamp");
    let mut comorbidities = [false; Comorbidity::COUNT];
    for c in Comorbidity::ALL {
        comorbidities[c.index()] = f.optional(c.name(), parse_bool, "a boolean").unwrap_or(false);
    }
    let mut vitals = [None; Vital::COUNT];
    for v in Vital::ALL {
        vitals[v.index()] = f.real(v.name());
    }
    let mut labs = [None; Lab::COUNT];
    for l in Lab::ALL {
        labs[l.index()] = f.real(l.name());
    }
    let avpu = f.optional("avpu", Avpu::from_name, &allowed(Avpu::ALL, Avpu::name));
    let presenting_device = f.optional("presenting_device", |s| Some(s.to_string()), "a device name");
    let image = f.optional("image", |s| Some(s.to_string()), "a path");
    if !f.errors.is_empty() {
        return Err(f.errors);
    }
    Ok(PatientRecord {
        patient_id: patient_id.expect("checked"),
        site_id: site_id.expect("checked"),
        visit_time: visit_time.expect("checked"),
        decision_time: decision_time.expect("checked"),
        age: age.expect("checked"),
        sex: sex.expect("checked"),
        race: race.expect("checked"),
        smoking,
        covid_pcr_ordered,
        covid_pcr_result,
        pcr_time,
        comorbidities,
        vitals,
        labs,
        avpu,
        presenting_device,
        image,
    })
}

fn real_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Text cells of a record, aligned with [`record_header`].
pub fn record_cells(r: &PatientRecord) -> Vec<String> {
    let mut row = vec![
        r.patient_id.clone(),
        r.site_id.to_string(),
        format_time(r.visit_time),
        format_time(r.decision_time),
        r.age.to_string(),
        r.sex.name().to_string(),
        r.race.name().to_string(),
        r.smoking.to_string(),
        r.covid_pcr_ordered.to_string(),
        r.covid_pcr_result.map(|p| p.name().to_string()).unwrap_or_default(),
        r.pcr_time.map(format_time).unwrap_or_default(),
    ];
    row.extend(r.comorbidities.iter().map(ToString::to_string));
    row.extend(r.vitals.iter().map(|v| real_cell(*v)));
    row.extend(r.labs.iter().map(|v| real_cell(*v)));
    row.push(r.avpu.map(|a| a.name().to_string()).unwrap_or_default());
    row.push(r.presenting_device.clone().unwrap_or_default());
    row.push(r.image.clone().unwrap_or_default());
    row
}

fn outcome_cells(o: &OutcomeRecord) -> Vec<String> {
    vec![
        o.patient_id.clone(),
        o.max_therapy_24h.name().to_string(),
        o.max_therapy_72h.name().to_string(),
        o.died_24h.to_string(),
        o.died_72h.to_string(),
        o.death_time.map(format_time).unwrap_or_default(),
        o.disposition.name().to_string(),
        o.followup_days.to_string(),
    ]
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<(), CohortError> {
    let found: Vec<&str> = found.iter().collect();
    let unknown: Vec<&str> = found.iter().filter(|c| !expected.contains(c)).copied().collect();
    let missing: Vec<&str> = expected.iter().filter(|c| !found.contains(c)).copied().collect();
    if unknown.is_empty() && missing.is_empty() {
        return Ok(());
    }
    Err(CohortError::Schema(format!(
        "{}: unknown columns [{}], missing columns [{}]",
        path.display(),
        unknown.join(", "),
        missing.join(", ")
    )))
}

fn read_rows<T>(
    path: &Path,
    expected: &[&str],
    parse: fn(FieldSource<'_>) -> Result<T, Vec<FieldError>>,
) -> Result<Vec<T>, CohortError> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    check_header(path, &header, expected)?;
    let index: BTreeMap<String, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_string(), i))
        .collect();
    let mut out = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let get = |name: &str| index.get(name).and_then(|&i| row.get(i)).map(str::to_string);
        out.push(parse(&get).map_err(|e| CohortError::Parse {
            path: path.display().to_string(),
            line: line + 2,
            message: join(&e),
        })?);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<PatientRecord>, CohortError> {
    read_rows(path, &record_header(), parse_record)
}

fn parse_outcome(get: FieldSource<'_>) -> Result<OutcomeRecord, Vec<FieldError>> {
    let mut f = Fields {
        get,
        errors: Vec::new(),
    };
    let therapy = allowed(OxygenTherapyLevel::ALL, OxygenTherapyLevel::name);
    let patient_id = f.required("patient_id", |s| Some(s.to_string()), "an identifier");
    let t24 = f.required("max_therapy_24h", OxygenTherapyLevel::from_name, &therapy);
    let t72 = f.required("max_therapy_72h", OxygenTherapyLevel::from_name, &therapy);
    let d24 = f.required("died_24h", parse_bool, "a boolean");
    let d72 = f.required("died_72h", parse_bool, "a boolean");
    let death_time = f.optional("death_time", parse_time, "a timestamp");
    let disposition = f.required(
        "disposition",
        Disposition::from_name,
        &allowed(Disposition::ALL, Disposition::name),
    );
    let followup_days = f.required(
        "followup_days",
        |s| s.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0),
        "a nonnegative number",
    );
    if !f.errors.is_empty() {
        return Err(f.errors);
    }
    Ok(OutcomeRecord {
        patient_id: patient_id.expect("checked"),
        max_therapy_24h: t24.expect("checked"),
        max_therapy_72h: t72.expect("checked"),
        died_24h: d24.expect("checked"),
        died_72h: d72.expect("checked"),
        death_time,
        disposition: disposition.expect("checked"),
        followup_days: followup_days.expect("checked"),
    })
}

pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeRecord>, CohortError> {
    read_rows(path, &OUTCOME_HEADER, parse_outcome)
}

/// Loads every image referenced by `records` from `dir`.
pub fn read_images(records: &[PatientRecord], dir: &Path) -> Result<BTreeMap<String, GrayImage>, CohortError> {
    let mut images = BTreeMap::new();
    for r in records {
        if let Some(rel) = &r.image {
            let path = dir.join(rel);
            let img = GrayImage::read(&path).map_err(|source| CohortError::Image {
                path: path.display().to_string(),
                source,
            })?;
            images.insert(rel.clone(), img);
        }
    }
    Ok(images)
}

pub fn read_cohort(records: &Path, outcomes: &Path, images_dir: &Path) -> Result<Cohort, CohortError> {
    let recs = read_records(records)?;
    let images = read_images(&recs, images_dir)?;
    Cohort::from_parts(recs, read_outcomes(outcomes)?, images)
}

/// Reads `cohort.csv`, `outcomes.csv` and `images/` from one directory.
pub fn read_cohort_dir(dir: &Path) -> Result<Cohort, CohortError> {
    read_cohort(&dir.join(COHORT_FILE), &dir.join(OUTCOMES_FILE), &dir.join(IMAGES_DIR))
}

pub fn write_records(path: &Path, records: &[PatientRecord]) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(record_header())?;
    for r in records {
        w.write_record(record_cells(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outcomes(path: &Path, outcomes: &[OutcomeRecord]) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(OUTCOME_HEADER)?;
    for o in outcomes {
        w.write_record(outcome_cells(o))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `cohort.csv`, `outcomes.csv` and `images/*.pgm` under `dir`.
pub fn write_cohort_dir(cohort: &Cohort, dir: &Path) -> Result<(), CohortError> {
    let images = dir.join(IMAGES_DIR);
    std::fs::create_dir_all(&images)?;
    write_records(&dir.join(COHORT_FILE), &cohort.records)?;
    write_outcomes(&dir.join(OUTCOMES_FILE), &cohort.outcomes)?;
    for (rel, img) in &cohort.images {
        let path = images.join(rel);
        img.write(&path).map_err(|source| CohortError::Image {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_synthetic_cohort, GeneratorConfig};

    #[test]
    fn directory_round_trip_is_exact() {
        let cfg = GeneratorConfig {
            n: 60,
            ..GeneratorConfig::default()
        };
        let cohort = generate_synthetic_cohort(&cfg, 11).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_cohort_dir(&cohort, dir.path()).unwrap();
        let back = read_cohort_dir(dir.path()).unwrap();
        assert_eq!(back, cohort);
    }

    #[test]
    fn field_errors_are_collected() {
        let cells: BTreeMap<&str, &str> = [
            ("patient_id", "x"),
            ("site_id", "9"),
            ("visit_time", "2020-03-01T10:00:00"),
            ("decision_time", "2020-03-01T12:00:00"),
            ("age", "50"),
            ("sex", "female"),
            ("race", "white"),
            ("spo2", "abc"),
            ("avpu", "sleepy"),
        ]
        .into_iter()
        .collect();
        let errs = parse_record(&|k| cells.get(k).map(|v| v.to_string())).unwrap_err();
        let fields: Vec<&str> = errs.iter().map(|e| e.field.as_str()).collect();
        assert_eq!(fields, ["site_id", "spo2", "avpu"]);
        assert!(errs[2].message.contains("alert"));
    }

    #[test]
    fn header_drift_is_a_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "patient_id,shoe_size\n1,9\n").unwrap();
        assert!(matches!(read_records(&path), Err(CohortError::Schema(_))));
    }
}
