//! CURB-65 and MEWS baseline scores.
//!
//! Banding tables are reproduced in `docs/clinical_scores.md`. Confusion for
//! CURB-65 is read from AVPU: anything other than Alert counts as confused.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::{Avpu, Lab, PatientRecord, Vital};

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
pub enum ClinicalError {
    #[error("{field} = {value} outside physiologic range [{lo}, {hi}]")]
    OutOfRange {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

/// Inclusive plausibility bounds for score inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysiologicBounds {
    pub respiratory_rate: (f64, f64),
    pub systolic_bp: (f64, f64),
    pub diastolic_bp: (f64, f64),
    pub heart_rate: (f64, f64),
    pub temperature: (f64, f64),
    pub urea: (f64, f64),
    pub age: (f64, f64),
}

impl Default for PhysiologicBounds {
    fn default() -> Self {
        PhysiologicBounds {
            respiratory_rate: (0.0, 80.0),
            systolic_bp: (20.0, 300.0),
            diastolic_bp: (10.0, 200.0),
            heart_rate: (10.0, 300.0),
            temperature: (25.0, 45.0),
            urea: (0.0, 150.0),
            age: (0.0, 120.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalScoreInputs {
    pub confusion: Option<bool>,
    /// mmol/L
    pub urea: Option<f64>,
    pub respiratory_rate: Option<f64>,
    pub systolic_bp: Option<f64>,
    pub diastolic_bp: Option<f64>,
    pub heart_rate: Option<f64>,
    pub temperature: Option<f64>,
    pub age: f64,
    pub avpu: Option<Avpu>,
}

impl ClinicalScoreInputs {
    pub fn from_record(r: &PatientRecord) -> Self {
        ClinicalScoreInputs {
            confusion: r.avpu.map(|a| a != Avpu::Alert),
            urea: r.lab(Lab::Urea),
            respiratory_rate: r.vital(Vital::RespiratoryRate),
            systolic_bp: r.vital(Vital::SystolicBp),
            diastolic_bp: r.vital(Vital::DiastolicBp),
            heart_rate: r.vital(Vital::HeartRate),
            temperature: r.vital(Vital::Temperature),
            age: r.age,
            avpu: r.avpu,
        }
    }

    pub fn validate(&self, b: &PhysiologicBounds) -> Result<(), ClinicalError> {
        let checks = [
            ("respiratory_rate", self.respiratory_rate, b.respiratory_rate),
            ("systolic_bp", self.systolic_bp, b.systolic_bp),
            ("diastolic_bp", self.diastolic_bp, b.diastolic_bp),
            ("heart_rate", self.heart_rate, b.heart_rate),
            ("temperature", self.temperature, b.temperature),
            ("urea", self.urea, b.urea),
            ("age", Some(self.age), b.age),
        ];
        for (field, value, (lo, hi)) in checks {
            if let Some(v) = value {
                if !(v.is_finite() && lo <= v && v <= hi) {
                    return Err(ClinicalError::OutOfRange {
                        field: field.to_string(),
                        value: v,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(())
    }
}

/// A point score, or the list of inputs that prevented computing it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClinicalScore {
    Value(u8),
    Incomputable { missing: Vec<String> },
}

impl ClinicalScore {
    pub fn value(&self) -> Option<u8> {
        match self {
            ClinicalScore::Value(v) => Some(*v),
            ClinicalScore::Incomputable { .. } => None,
        }
    }
}

fn missing(fields: &[(&str, bool)]) -> Option<ClinicalScore> {
    let absent: Vec<String> = fields
        .iter()
        .filter(|(_, present)| !present)
        .map(|(f, _)| f.to_string())
        .collect();
    (!absent.is_empty()).then_some(ClinicalScore::Incomputable { missing: absent })
}

/// CURB-65: one point each for confusion, urea > 7 mmol/L, RR >= 30,
/// SBP < 90 or DBP <= 60, and age >= 65.
pub fn curb65(x: &ClinicalScoreInputs, bounds: &PhysiologicBounds) -> Result<ClinicalScore, ClinicalError> {
    x.validate(bounds)?;
    if let Some(m) = missing(&[
        ("confusion", x.confusion.is_some()),
        ("urea", x.urea.is_some()),
        ("respiratory_rate", x.respiratory_rate.is_some()),
        ("systolic_bp", x.systolic_bp.is_some()),
        ("diastolic_bp", x.diastolic_bp.is_some()),
    ]) {
        return Ok(m);
    }
    let (sbp, dbp) = (x.systolic_bp.unwrap_or_default(), x.diastolic_bp.unwrap_or_default());
    let points = [
        x.confusion == Some(true),
        x.urea.is_some_and(|u| u > 7.0),
        x.respiratory_rate.is_some_and(|r| r >= 30.0),
        sbp < 90.0 || dbp <= 60.0,
        x.age >= 65.0,
    ];
    Ok(ClinicalScore::Value(points.iter().filter(|p| **p).count() as u8))
}

pub fn mews_systolic(sbp: f64) -> u8 {
    if sbp <= 70.0 {
        3
    } else if sbp <= 80.0 {
        2
    } else if sbp <= 100.0 {
        1
    } else if sbp < 200.0 {
        0
    } else {
        2
    }
}

pub fn mews_heart_rate(hr: f64) -> u8 {
    if hr <= 40.0 {
        2
    } else if hr <= 50.0 {
        1
    } else if hr <= 100.0 {
        0
    } else if hr <= 110.0 {
        1
    } else if hr < 130.0 {
        2
    } else {
        3
    }
}

pub fn mews_respiratory_rate(rr: f64) -> u8 {
    if rr < 9.0 {
        2
    } else if rr < 15.0 {
        0
    } else if rr < 21.0 {
        1
    } else if rr < 30.0 {
        2
    } else {
        3
    }
}

pub fn mews_temperature(t: f64) -> u8 {
    if t < 35.0 {
        2
    } else if t < 38.5 {
        0
    } else {
        2
    }
}

pub fn mews_avpu(a: Avpu) -> u8 {
    match a {
        Avpu::Alert => 0,
        Avpu::Voice => 1,
        Avpu::Pain => 2,
        Avpu::Unresponsive => 3,
    }
}

/// Modified Early Warning Score over SBP, HR, RR, temperature and AVPU.
pub fn mews(x: &ClinicalScoreInputs, bounds: &PhysiologicBounds) -> Result<ClinicalScore, ClinicalError> {
    x.validate(bounds)?;
    let (Some(sbp), Some(hr), Some(rr), Some(t), Some(a)) = (
        x.systolic_bp,
        x.heart_rate,
        x.respiratory_rate,
        x.temperature,
        x.avpu,
    ) else {
        return Ok(missing(&[
            ("systolic_bp", x.systolic_bp.is_some()),
            ("heart_rate", x.heart_rate.is_some()),
            ("respiratory_rate", x.respiratory_rate.is_some()),
            ("temperature", x.temperature.is_some()),
            ("avpu", x.avpu.is_some()),
        ])
        .expect("at least one field missing"));
    };
    Ok(ClinicalScore::Value(
        mews_systolic(sbp) + mews_heart_rate(hr) + mews_respiratory_rate(rr) + mews_temperature(t) + mews_avpu(a),
    ))
}
