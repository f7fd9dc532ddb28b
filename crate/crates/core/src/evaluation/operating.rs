use serde::{Deserialize, Serialize};

use super::{check_lengths, EvalError, RocCurve};
use crate::cohort::Disposition;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub sensitivity: f64,
    pub specificity: f64,
    pub threshold: Option<f64>,
}

/// Physician sensitivity P(icu | MV72) and specificity P(floor | no MV72).
/// Discharged patients must be removed beforehand.
pub fn physician_operating_point(dispositions: &[Disposition], mv72: &[bool]) -> Result<OperatingPoint, EvalError> {
    check_lengths(dispositions.len(), mv72.len())?;
    if let Some(d) = dispositions.iter().find(|d| **d == Disposition::Discharge) {
        return Err(EvalError::UnexpectedDisposition(d.name().to_string()));
    }
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (d, m) in dispositions.iter().zip(mv72) {
        let icu = *d == Disposition::Icu;
        if *m {
            pos += 1;
            tp += icu as usize;
        } else {
            neg += 1;
            tn += !icu as usize;
        }
    }
    if pos == 0 {
        return Err(EvalError::NoPositives);
    }
    if neg == 0 {
        return Err(EvalError::NoNegatives);
    }
    Ok(OperatingPoint {
        sensitivity: tp as f64 / pos as f64,
        specificity: tn as f64 / neg as f64,
        threshold: None,
    })
}

fn as_point(p: &crate::evaluation::RocPoint) -> OperatingPoint {
    OperatingPoint {
        sensitivity: p.tpr,
        specificity: 1.0 - p.fpr,
        threshold: p.threshold,
    }
}

/// Curve vertex nearest to `target` in (sensitivity, specificity) space.
/// Ties prefer higher tpr, then lower fpr.
pub fn closest_roc_threshold(curve: &RocCurve, target: &OperatingPoint) -> (Option<f64>, OperatingPoint) {
    let dist = |p: &crate::evaluation::RocPoint| {
        ((p.tpr - target.sensitivity).powi(2) + ((1.0 - p.fpr) - target.specificity).powi(2)).sqrt()
    };
    let best = curve
        .points
        .iter()
        .min_by(|a, b| {
            dist(a)
                .total_cmp(&dist(b))
                .then_with(|| b.tpr.total_cmp(&a.tpr))
                .then_with(|| a.fpr.total_cmp(&b.fpr))
        })
        .expect("ROC curves always have at least two points");
    (best.threshold, as_point(best))
}

/// First vertex from the (0, 0) end (largest threshold) with tpr >= target.
pub fn operating_point_at_sensitivity(curve: &RocCurve, target_sens: f64) -> Result<OperatingPoint, EvalError> {
    curve
        .points
        .iter()
        .find(|p| p.tpr >= target_sens)
        .map(as_point)
        .ok_or_else(|| EvalError::Unreachable {
            target: target_sens,
            max: curve.points.iter().map(|p| p.tpr).fold(0.0, f64::max),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::RocPoint;
    use Disposition::*;

    fn curve(pts: &[(f64, f64)]) -> RocCurve {
        RocCurve {
            points: pts
                .iter()
                .enumerate()
                .map(|(i, &(fpr, tpr))| RocPoint {
                    fpr,
                    tpr,
                    threshold: (i > 0).then(|| 1.0 - i as f64 / 10.0),
                })
                .collect(),
            auc: 0.0,
        }
    }

    #[test]
    fn perfect_physician() {
        let p = physician_operating_point(&[Icu, Floor, Icu, Floor], &[true, false, true, false]).unwrap();
        assert_eq!((p.sensitivity, p.specificity), (1.0, 1.0));
        assert!(physician_operating_point(&[Discharge], &[true]).is_err());
        assert_eq!(physician_operating_point(&[Floor], &[false]), Err(EvalError::NoPositives));
    }

    #[test]
    fn worked_closest_point() {
        let c = curve(&[(0.0, 0.0), (0.1, 0.8), (1.0, 1.0)]);
        let target = OperatingPoint {
            sensitivity: 0.672,
            specificity: 0.966,
            threshold: None,
        };
        let (_, p) = closest_roc_threshold(&c, &target);
        assert!((p.specificity - 0.9).abs() < 1e-12);
        assert_eq!(p.sensitivity, 0.8);
    }

    #[test]
    fn sensitivity_targets() {
        let c = curve(&[(0.0, 0.0), (0.1, 0.5), (0.3, 1.0), (1.0, 1.0)]);
        let p = operating_point_at_sensitivity(&c, 0.0).unwrap();
        assert_eq!((p.sensitivity, p.specificity, p.threshold), (0.0, 1.0, None));
        let p = operating_point_at_sensitivity(&c, 1.0).unwrap();
        assert_eq!(p.sensitivity, 1.0);
        assert!((p.specificity - 0.7).abs() < 1e-12);
        assert!(operating_point_at_sensitivity(&c, 1.1).is_err());
    }
}
