use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{check_lengths, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmStep {
    pub time: f64,
    pub survival: f64,
    pub at_risk: usize,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    /// Starts with `(0, 1.0)`, then one step per distinct event time.
    pub steps: Vec<KmStep>,
    pub horizon: f64,
}

impl KmCurve {
    /// Survival probability at time `t` (right-continuous step function).
    pub fn survival_at(&self, t: f64) -> f64 {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(1.0, |s| s.survival)
    }
}

fn validate(times: &[f64], events: &[bool]) -> Result<(), EvalError> {
    check_lengths(times.len(), events.len())?;
    for &t in times {
        if !t.is_finite() {
            return Err(EvalError::NonFinite);
        }
        if t < 0.0 {
            return Err(EvalError::NegativeTime(t));
        }
    }
    Ok(())
}

/// Product-limit estimate up to `horizon`; later events count as censored
/// at the horizon.
pub fn km_estimate(times: &[f64], events: &[bool], horizon: f64) -> Result<KmCurve, EvalError> {
    validate(times, events)?;
    let mut event_times: Vec<f64> = times
        .iter()
        .zip(events)
        .filter(|(t, e)| **e && **t <= horizon)
        .map(|(t, _)| *t)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    let mut steps = vec![KmStep {
        time: 0.0,
        survival: 1.0,
        at_risk: times.len(),
        events: 0,
    }];
    let mut s = 1.0;
    for t in event_times {
        let at_risk = times.iter().filter(|&&x| x >= t).count();
        let d = times
            .iter()
            .zip(events)
            .filter(|(x, e)| **e && **x == t)
            .count();
        s *= 1.0 - d as f64 / at_risk as f64;
        if t == 0.0 {
            steps[0] = KmStep {
                time: 0.0,
                survival: s,
                at_risk,
                events: d,
            };
        } else {
            steps.push(KmStep {
                time: t,
                survival: s,
                at_risk,
                events: d,
            });
        }
    }
    Ok(KmCurve { steps, horizon })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Log-rank chi-square test across groups of `(times, events)`.
pub fn logrank_test(groups: &[(Vec<f64>, Vec<bool>)]) -> Result<LogRank, EvalError> {
    if groups.len() < 2 {
        return Err(EvalError::TooFewGroups);
    }
    for (t, e) in groups {
        validate(t, e)?;
    }
    let g = groups.len();
    let mut event_times: Vec<f64> = groups
        .iter()
        .flat_map(|(t, e)| t.iter().zip(e).filter(|(_, e)| **e).map(|(t, _)| *t))
        .collect();
    if event_times.is_empty() {
        return Err(EvalError::NoEvents);
    }
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();

    let k = g - 1;
    let mut o_minus_e = DVector::<f64>::zeros(k);
    let mut var = DMatrix::<f64>::zeros(k, k);
    for &t in &event_times {
        let n_g: Vec<f64> = groups
            .iter()
            .map(|(ts, _)| ts.iter().filter(|&&x| x >= t).count() as f64)
            .collect();
        let d_g: Vec<f64> = groups
            .iter()
            .map(|(ts, es)| ts.iter().zip(es).filter(|(x, e)| **e && **x == t).count() as f64)
            .collect();
        let n: f64 = n_g.iter().sum();
        let d: f64 = d_g.iter().sum();
        for i in 0..k {
            o_minus_e[i] += d_g[i] - d * n_g[i] / n;
        }
        if n > 1.0 {
            let c = d * (n - d) / (n - 1.0);
            for i in 0..k {
                for j in 0..k {
                    let delta = if i == j { 1.0 } else { 0.0 };
                    var[(i, j)] += c * n_g[i] / n * (delta - n_g[j] / n);
                }
            }
        }
    }
    let inv = var
        .clone()
        .try_inverse()
        .or_else(|| var.pseudo_inverse(1e-12).ok())
        .unwrap_or_else(|| DMatrix::zeros(k, k));
    let statistic = (o_minus_e.transpose() * inv * &o_minus_e)[(0, 0)].max(0.0);
    let chi = ChiSquared::new(k as f64).expect("positive degrees of freedom");
    let p_value = if statistic.is_finite() {
        (1.0 - chi.cdf(statistic)).clamp(0.0, 1.0)
    } else {
        return Err(EvalError::NonFinite);
    };
    Ok(LogRank {
        statistic,
        df: k,
        p_value,
    })
}
