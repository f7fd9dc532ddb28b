//! Ordinal outcome labels.

use super::{Horizon, OutcomeRecord, OxygenTherapyLevel};

/// Label value for a surviving patient at a therapy level.
pub fn therapy_encoding(level: OxygenTherapyLevel) -> f64 {
    match level {
        OxygenTherapyLevel::RoomAir => 0.0,
        OxygenTherapyLevel::LowFlow => 0.25,
        OxygenTherapyLevel::HighFlowNiv => 0.5,
        OxygenTherapyLevel::Mechanical => 0.75,
    }
}

/// 1.0 if the patient died within the horizon, else the therapy encoding.
pub fn derive_outcome_label(outcome: &OutcomeRecord, horizon: Horizon) -> f64 {
    if outcome.died(horizon) {
        1.0
    } else {
        therapy_encoding(outcome.max_therapy(horizon))
    }
}
