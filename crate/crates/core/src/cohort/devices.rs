//! Oxygen delivery device taxonomy.

use thiserror::Error;

use super::OxygenTherapyLevel;

const LOW_FLOW: &[&str] = &[
    "Nasal cannula",
    "Simple mask",
    "Oxymask",
    "Oxygen conserving device",
    "Blow-by",
    "Pulse dose device",
    "Aerosol mask",
];

const HIGH_FLOW_NIV: &[&str] = &[
    "High flow nasal cannula",
    "Face tent",
    "High flow face mask",
    "Bag-valve Mask",
    "Non-rebreather mask",
    "T-Piece",
    "Venturi mask",
    "Partial rebreather mask",
    "Bi-PAP",
    "CPAP",
    "Transtracheal catheter",
];

const MECHANICAL: &[&str] = &["Ventilator"];

const ROOM_AIR: &[&str] = &["Room air"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown oxygen device {0:?}")]
pub struct UnknownDevice(pub String);

fn normalize(s: &str) -> String {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect()
}

/// Maps a device name to its therapy level, ignoring case and whitespace.
pub fn classify_oxygen_device(device_name: &str) -> Result<OxygenTherapyLevel, UnknownDevice> {
    let key = normalize(device_name);
    let tables = [
        (ROOM_AIR, OxygenTherapyLevel::RoomAir),
        (LOW_FLOW, OxygenTherapyLevel::LowFlow),
        (HIGH_FLOW_NIV, OxygenTherapyLevel::HighFlowNiv),
        (MECHANICAL, OxygenTherapyLevel::Mechanical),
    ];
    tables
        .iter()
        .find(|(names, _)| names.iter().any(|n| normalize(n) == key))
        .map(|(_, level)| *level)
        .ok_or_else(|| UnknownDevice(device_name.to_string()))
}

/// Canonical device names for one therapy level.
pub fn device_names(level: OxygenTherapyLevel) -> &'static [&'static str] {
    match level {
        OxygenTherapyLevel::RoomAir => ROOM_AIR,
        OxygenTherapyLevel::LowFlow => LOW_FLOW,
        OxygenTherapyLevel::HighFlowNiv => HIGH_FLOW_NIV,
        OxygenTherapyLevel::Mechanical => MECHANICAL,
    }
}
