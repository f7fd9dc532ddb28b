//! Canonical model feature vocabulary and record encoding.
//!
//! Continuous columns come first (age, vitals, labs), then categoricals
//! stored as category indices. The presenting oxygen device enters as its
//! therapy level (no device means room air).

use thiserror::Error;

use crate::cohort::{
    classify_oxygen_device, device_names, Avpu, Comorbidity, Lab, OxygenTherapyLevel, PatientRecord, Race, Sex,
    Vital,
};
use crate::imputation::{Column, FeatureMatrix, ImputeError};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("unknown presenting_device {value:?}; allowed: {allowed}")]
    UnknownDevice { value: String, allowed: String },
    #[error(transparent)]
    Matrix(#[from] ImputeError),
}

pub const AGE: &str = "age";
pub const SEX: &str = "sex";
pub const RACE: &str = "race";
pub const SMOKING: &str = "smoking";
pub const PRESENTING_DEVICE: &str = "presenting_device";
pub const AVPU: &str = "avpu";

/// Model input columns in stacking order.
pub fn feature_columns() -> Vec<Column> {
    let mut cols = vec![Column::continuous(AGE)];
    cols.extend(Vital::ALL.iter().map(|v| Column::continuous(v.name())));
    cols.extend(Lab::ALL.iter().map(|l| Column::continuous(l.name())));
    cols.push(Column::categorical(SEX, Sex::COUNT));
    cols.push(Column::categorical(RACE, Race::COUNT));
    cols.push(Column::categorical(SMOKING, 2));
    cols.extend(Comorbidity::ALL.iter().map(|c| Column::categorical(c.name(), 2)));
    cols.push(Column::categorical(PRESENTING_DEVICE, OxygenTherapyLevel::COUNT));
    cols.push(Column::categorical(AVPU, Avpu::COUNT));
    cols
}

pub fn feature_names() -> Vec<String> {
    feature_columns().into_iter().map(|c| c.name).collect()
}

/// Columns that may be missing and are filled by imputation.
pub fn imputable_columns() -> Vec<&'static str> {
    let mut v: Vec<&'static str> = Vital::ALL.iter().map(|v| v.name()).collect();
    v.extend(Lab::ALL.iter().map(|l| l.name()));
    v.push(AVPU);
    v
}

fn all_device_names() -> String {
    OxygenTherapyLevel::ALL
        .iter()
        .flat_map(|l| device_names(*l).iter().copied())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Therapy level implied by the presenting device.
pub fn device_level(r: &PatientRecord) -> Result<OxygenTherapyLevel, EncodeError> {
    match &r.presenting_device {
        None => Ok(OxygenTherapyLevel::RoomAir),
        Some(name) => classify_oxygen_device(name).map_err(|_| EncodeError::UnknownDevice {
            value: name.clone(),
            allowed: all_device_names(),
        }),
    }
}

/// One row aligned with [`feature_columns`]; `None` marks a missing cell.
pub fn encode_record(r: &PatientRecord) -> Result<Vec<Option<f64>>, EncodeError> {
    let flag = |b: bool| Some(if b { 1.0 } else { 0.0 });
    let mut row = vec![Some(r.age)];
    row.extend(r.vitals.iter().copied());
    row.extend(r.labs.iter().copied());
    row.push(Some(r.sex.index() as f64));
    row.push(Some(r.race.index() as f64));
    row.push(flag(r.smoking));
    row.extend(r.comorbidities.iter().map(|&c| flag(c)));
    row.push(Some(device_level(r)?.index() as f64));
    row.push(r.avpu.map(|a| a.index() as f64));
    Ok(row)
}

pub fn encode_records(records: &[PatientRecord]) -> Result<FeatureMatrix, EncodeError> {
    let rows = records.iter().map(encode_record).collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureMatrix::new(feature_columns(), rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{generate_synthetic_cohort, GeneratorConfig};

    #[test]
    fn widths_agree() {
        let cols = feature_columns();
        assert_eq!(cols.len(), 1 + 6 + 19 + 3 + 12 + 2);
        let cohort = generate_synthetic_cohort(&GeneratorConfig { n: 30, ..Default::default() }, 2).unwrap();
        let m = encode_records(&cohort.records).unwrap();
        assert_eq!(m.n_cols(), cols.len());
        for name in imputable_columns() {
            assert!(m.column_index(name).is_some());
        }
    }

    #[test]
    fn unknown_device_lists_allowed_names() {
        let mut r = generate_synthetic_cohort(&GeneratorConfig { n: 1, ..Default::default() }, 2)
            .unwrap()
            .records
            .remove(0);
        r.presenting_device = Some("Hyperbaric chamber".into());
        let e = encode_record(&r).unwrap_err().to_string();
        assert!(e.contains("Ventilator"));
        r.presenting_device = Some("ventilator".into());
        assert_eq!(encode_record(&r).unwrap()[feature_columns().len() - 2], Some(3.0));
    }
}
