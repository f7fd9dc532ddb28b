//! Source combination, the cube-root CO-RISK transform and risk bands.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort::Disposition;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoringError {
    #[error("image available but no fusion-model prediction supplied")]
    MissingFusionPrediction,
    #[error("raw prediction {0} outside [0, 1]")]
    RawOutOfRange(f64),
    #[error("band fitting needs every disposition; {0} is absent")]
    MissingDisposition(&'static str),
    #[error("band fitting needs at least three distinct scores")]
    Degenerate,
    #[error("invalid thresholds {0} / {1}: need 0 < low < high < 100")]
    InvalidThresholds(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    FusionModel,
    Forest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RiskBand {
    Low,
    Medium,
    High,
}

impl RiskBand {
    pub const ALL: [RiskBand; 3] = [RiskBand::Low, RiskBand::Medium, RiskBand::High];

    pub fn name(self) -> &'static str {
        match self {
            RiskBand::Low => "Low",
            RiskBand::Medium => "Medium",
            RiskBand::High => "High",
        }
    }

    /// The disposition the band is fitted to agree with.
    pub fn disposition(self) -> Disposition {
        match self {
            RiskBand::Low => Disposition::Discharge,
            RiskBand::Medium => Disposition::Floor,
            RiskBand::High => Disposition::Icu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub t_low_med: f64,
    pub t_med_high: f64,
}

impl BandThresholds {
    pub fn new(t_low_med: f64, t_med_high: f64) -> Result<Self, ScoringError> {
        if !(0.0 < t_low_med && t_low_med < t_med_high && t_med_high < 100.0) {
            return Err(ScoringError::InvalidThresholds(t_low_med, t_med_high));
        }
        Ok(BandThresholds {
            t_low_med,
            t_med_high,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoRiskScore {
    pub score_24h: f64,
    pub score_72h: f64,
    pub source: ScoreSource,
    pub band_72h: RiskBand,
}

/// Fusion prediction when an image exists, forest prediction otherwise.
pub fn combine(dl_pred: Option<f64>, rf_pred: f64, has_cxr: bool) -> Result<(f64, ScoreSource), ScoringError> {
    if has_cxr {
        dl_pred
            .map(|p| (p, ScoreSource::FusionModel))
            .ok_or(ScoringError::MissingFusionPrediction)
    } else {
        Ok((rf_pred, ScoreSource::Forest))
    }
}

/// `100 * raw^(1/3)`.
pub fn to_corisk(raw: f64) -> Result<f64, ScoringError> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(ScoringError::RawOutOfRange(raw));
    }
    Ok(100.0 * raw.cbrt())
}

/// Low below `t_low_med`, High at or above `t_med_high`, Medium between.
pub fn assign_band(score: f64, t: &BandThresholds) -> RiskBand {
    if score < t.t_low_med {
        RiskBand::Low
    } else if score >= t.t_med_high {
        RiskBand::High
    } else {
        RiskBand::Medium
    }
}

/// Number of `(score, disposition)` pairs whose band matches the disposition.
pub fn band_agreement(scores: &[(f64, Disposition)], t: &BandThresholds) -> usize {
    scores
        .iter()
        .filter(|(s, d)| assign_band(*s, t).disposition() == *d)
        .count()
}

/// Result of band fitting: thresholds plus the agreement they achieve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandFit {
    pub thresholds: BandThresholds,
    pub agreement: usize,
}

/// Exhaustive search over pairs of midpoints between adjacent distinct
/// scores. Ties prefer the wider gap between cutpoints, then the lower pair.
pub fn fit_band_thresholds(train: &[(f64, Disposition)]) -> Result<BandFit, ScoringError> {
    for d in Disposition::ALL {
        if !train.iter().any(|(_, x)| x == d) {
            return Err(ScoringError::MissingDisposition(d.name()));
        }
    }
    let mut sorted: Vec<(f64, Disposition)> = train.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // group by distinct score: counts per disposition
    let mut groups: Vec<(f64, [usize; 3])> = Vec::new();
    for (s, d) in &sorted {
        match groups.last_mut() {
            Some((v, c)) if *v == *s => c[d.index()] += 1,
            _ => {
                let mut c = [0; 3];
                c[d.index()] = 1;
                groups.push((*s, c));
            }
        }
    }
    if groups.len() < 3 {
        return Err(ScoringError::Degenerate);
    }
    let g = groups.len();
    let cuts: Vec<f64> = groups.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect();
    // prefix[k][c]: count of disposition c among the first k groups
    let mut prefix = vec![[0usize; 3]; g + 1];
    for k in 0..g {
        for c in 0..3 {
            prefix[k + 1][c] = prefix[k][c] + groups[k].1[c];
        }
    }
    let total = prefix[g];
    let mut best: Option<(usize, f64, usize, usize)> = None;
    // cut i sits between group i and i+1; Low = groups[..=i], High = groups[j+1..]
    for i in 0..cuts.len() {
        let low = prefix[i + 1][0];
        for j in (i + 1)..cuts.len() {
            let med = prefix[j + 1][1] - prefix[i + 1][1];
            let high = total[2] - prefix[j + 1][2];
            let agreement = low + med + high;
            let margin = cuts[j] - cuts[i];
            let better = match best {
                None => true,
                Some((a, m, _, _)) => agreement > a || (agreement == a && margin > m),
            };
            if better {
                best = Some((agreement, margin, i, j));
            }
        }
    }
    let (agreement, _, i, j) = best.ok_or(ScoringError::Degenerate)?;
    let thresholds = BandThresholds::new(cuts[i], cuts[j])?;
    Ok(BandFit {
        thresholds,
        agreement,
    })
}
