//! Patient cohorts: record types, the synthetic generator with a planted risk
//! function, inclusion criteria, outcome labels, device taxonomy, splits and
//! the on-disk tabular format.

mod devices;
mod generator;
mod inclusion;
pub mod io;
mod labels;
mod split;

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pnm::GrayImage;

pub use devices::{classify_oxygen_device, device_names, UnknownDevice};
pub use generator::{generate_synthetic_cohort, GeneratorConfig, Marginal, PlantedSignal};
pub use inclusion::{apply_inclusion_criteria, ExclusionReason, MAX_VISIT_MINUTES, MIN_VISIT_MINUTES};
pub use labels::{derive_outcome_label, therapy_encoding};
pub use split::{split_cohort, CohortSplit, DateWindow, SplitKind, SplitSpec};

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error("outcome missing for patient {0}")]
    MissingOutcome(String),
    #[error("duplicate patient id {0}")]
    DuplicateId(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image {path}: {source}")]
    Image {
        path: String,
        source: crate::pnm::PnmError,
    },
}

macro_rules! vocabulary {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = [$($text),+].len();

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            pub fn from_name(s: &str) -> Option<Self> {
                match s { $($text => Some($name::$variant),)+ _ => None }
            }

            pub fn index(self) -> usize {
                self as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

vocabulary!(
    /// Maximum oxygen therapy, ordered from least to most intensive.
    OxygenTherapyLevel {
        RoomAir => "RA",
        LowFlow => "LFO",
        HighFlowNiv => "HFO_NIV",
        Mechanical => "MV",
    }
);

impl OxygenTherapyLevel {
    pub fn from_ordinal(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

vocabulary!(Sex { Female => "female", Male => "male" });

vocabulary!(Race {
    Asian => "asian",
    Black => "black",
    Hispanic => "hispanic",
    Other => "other",
    Unavailable => "unavailable",
    White => "white",
});

vocabulary!(PcrResult { Positive => "positive", Negative => "negative" });

vocabulary!(
    /// Level of consciousness on the AVPU scale.
    Avpu {
        Alert => "alert",
        Voice => "voice",
        Pain => "pain",
        Unresponsive => "unresponsive",
    }
);

vocabulary!(Disposition {
    Discharge => "discharge",
    Floor => "floor",
    Icu => "icu",
});

vocabulary!(Horizon { H24 => "24h", H72 => "72h" });

vocabulary!(Comorbidity {
    Anemia => "anemia",
    Cancer => "cancer",
    CardiovascularDisease => "cardiovascular_disease",
    CerebrovascularDisease => "cerebrovascular_disease",
    ChronicKidneyDisease => "chronic_kidney_disease",
    RespiratoryDisease => "respiratory_disease",
    Coagulopathy => "coagulopathy",
    HistoryOfTransplant => "history_of_transplant",
    LiverDisease => "liver_disease",
    MetabolicDisease => "metabolic_disease",
    NeurodegenerativeDisease => "neurodegenerative_disease",
    Pregnancy => "pregnancy",
});

vocabulary!(Vital {
    Temperature => "temperature",
    Spo2 => "spo2",
    RespiratoryRate => "respiratory_rate",
    HeartRate => "heart_rate",
    SystolicBp => "systolic_bp",
    DiastolicBp => "diastolic_bp",
});

impl Vital {
    pub fn unit(self) -> &'static str {
        match self {
            Vital::Temperature => "°C",
            Vital::Spo2 => "%",
            Vital::RespiratoryRate => "breaths/min",
            Vital::HeartRate => "beats/min",
            Vital::SystolicBp | Vital::DiastolicBp => "mmHg",
        }
    }
}

vocabulary!(Lab {
    AlanineAminotransferase => "alanine_aminotransferase",
    AspartateAminotransferase => "aspartate_aminotransferase",
    CReactiveProtein => "c_reactive_protein",
    Creatinine => "creatinine",
    Ferritin => "ferritin",
    Gfr => "gfr",
    Glucose => "glucose",
    Hemoglobin => "hemoglobin",
    Lactate => "lactate",
    LactateDehydrogenase => "lactate_dehydrogenase",
    Lymphocyte => "lymphocyte",
    Neutrophils => "neutrophils",
    Platelet => "platelet",
    Potassium => "potassium",
    Sodium => "sodium",
    Wbc => "wbc",
    DDimer => "d_dimer",
    TroponinT => "troponin_t",
    Urea => "urea",
});

impl Lab {
    pub fn unit(self) -> &'static str {
        match self {
            Lab::AlanineAminotransferase | Lab::AspartateAminotransferase => "U/L",
            Lab::LactateDehydrogenase => "U/L",
            Lab::CReactiveProtein => "mg/L",
            Lab::Creatinine | Lab::Glucose => "mg/dL",
            Lab::Ferritin => "µg/L",
            Lab::Gfr => "ml/min/1.73m²",
            Lab::Hemoglobin => "g/dL",
            Lab::Lactate | Lab::Potassium | Lab::Sodium | Lab::Urea => "mmol/L",
            Lab::Lymphocyte | Lab::Neutrophils | Lab::Platelet | Lab::Wbc => "10⁹/L",
            Lab::DDimer => "µg/mL",
            Lab::TroponinT => "ng/L",
        }
    }
}

/// One ED visit as seen at the decision point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub site_id: u8,
    pub visit_time: NaiveDateTime,
    pub decision_time: NaiveDateTime,
    pub age: f64,
    pub sex: Sex,
    pub race: Race,
    pub smoking: bool,
    pub covid_pcr_ordered: bool,
    pub covid_pcr_result: Option<PcrResult>,
    pub pcr_time: Option<NaiveDateTime>,
    pub comorbidities: [bool; Comorbidity::COUNT],
    pub vitals: [Option<f64>; Vital::COUNT],
    pub labs: [Option<f64>; Lab::COUNT],
    pub avpu: Option<Avpu>,
    pub presenting_device: Option<String>,
    /// Path of the chest image, relative to the cohort's image directory.
    pub image: Option<String>,
}

impl PatientRecord {
    pub fn vital(&self, v: Vital) -> Option<f64> {
        self.vitals[v.index()]
    }

    pub fn lab(&self, l: Lab) -> Option<f64> {
        self.labs[l.index()]
    }

    pub fn has_comorbidity(&self, c: Comorbidity) -> bool {
        self.comorbidities[c.index()]
    }

    /// Minutes between arrival and the ED decision point.
    pub fn visit_minutes(&self) -> f64 {
        (self.decision_time - self.visit_time).num_seconds() as f64 / 60.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub patient_id: String,
    pub max_therapy_24h: OxygenTherapyLevel,
    pub max_therapy_72h: OxygenTherapyLevel,
    pub died_24h: bool,
    pub died_72h: bool,
    pub death_time: Option<NaiveDateTime>,
    pub disposition: Disposition,
    pub followup_days: f64,
}

impl OutcomeRecord {
    pub fn max_therapy(&self, h: Horizon) -> OxygenTherapyLevel {
        match h {
            Horizon::H24 => self.max_therapy_24h,
            Horizon::H72 => self.max_therapy_72h,
        }
    }

    pub fn died(&self, h: Horizon) -> bool {
        match h {
            Horizon::H24 => self.died_24h,
            Horizon::H72 => self.died_72h,
        }
    }

    /// Days from `visit` to death, if the patient died.
    pub fn days_to_death(&self, visit: NaiveDateTime) -> Option<f64> {
        self.death_time
            .map(|t| (t - visit).num_seconds() as f64 / 86_400.0)
    }

    /// Death within `days` of the visit.
    pub fn died_within(&self, visit: NaiveDateTime, days: f64) -> bool {
        self.days_to_death(visit).is_some_and(|d| d <= days)
    }
}

/// Records, their outcomes (same order) and any decoded chest images keyed
/// by the record's relative image path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub outcomes: Vec<OutcomeRecord>,
    pub images: BTreeMap<String, GrayImage>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&PatientRecord, &OutcomeRecord)> {
        self.records.iter().zip(&self.outcomes)
    }

    pub fn image_for(&self, record: &PatientRecord) -> Option<&GrayImage> {
        record.image.as_ref().and_then(|p| self.images.get(p))
    }

    /// Keeps the records whose ids satisfy `keep`, with their outcomes and images.
    pub fn filter(&self, mut keep: impl FnMut(&PatientRecord) -> bool) -> Cohort {
        let mut out = Cohort::default();
        for (r, o) in self.pairs() {
            if keep(r) {
                if let Some(path) = &r.image {
                    if let Some(img) = self.images.get(path) {
                        out.images.insert(path.clone(), img.clone());
                    }
                }
                out.records.push(r.clone());
                out.outcomes.push(o.clone());
            }
        }
        out
    }

    /// Pairs each record with its outcome by patient id.
    pub fn from_parts(
        records: Vec<PatientRecord>,
        outcomes: Vec<OutcomeRecord>,
        images: BTreeMap<String, GrayImage>,
    ) -> Result<Cohort, CohortError> {
        let mut by_id: BTreeMap<String, OutcomeRecord> = BTreeMap::new();
        for o in outcomes {
            let id = o.patient_id.clone();
            if by_id.insert(id.clone(), o).is_some() {
                return Err(CohortError::DuplicateId(id));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut paired = Vec::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.patient_id.clone()) {
                return Err(CohortError::DuplicateId(r.patient_id.clone()));
            }
            let o = by_id
                .remove(&r.patient_id)
                .ok_or_else(|| CohortError::MissingOutcome(r.patient_id.clone()))?;
            paired.push(o);
        }
        Ok(Cohort {
            records,
            outcomes: paired,
            images,
        })
    }
}
