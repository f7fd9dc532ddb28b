use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::bootstrap::percentile_nearest_rank;
use super::EvalError;

/// Nearest-rank quartiles of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
}

pub fn summarize(values: &[f64]) -> Result<Summary, EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(Summary {
        n: v.len(),
        median: percentile_nearest_rank(&v, 0.5),
        q25: percentile_nearest_rank(&v, 0.25),
        q75: percentile_nearest_rank(&v, 0.75),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U statistic of the first group.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
}

/// Two-sided Mann-Whitney U test, normal approximation with tie correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut all: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    if all.iter().any(|(x, _)| !x.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    all.sort_by(|x, y| x.0.total_cmp(&y.0));
    let n = all.len();
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut rank_sum = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        rank_sum += avg_rank * all[i..j].iter().filter(|(_, first)| *first).count() as f64;
        i = j;
    }
    let u = rank_sum - n1 * (n1 + 1.0) / 2.0;
    let nf = n as f64;
    let var = n1 * n2 / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)).max(1.0));
    let (z, p_value) = if var <= 0.0 {
        (0.0, 1.0)
    } else {
        let z = (u - n1 * n2 / 2.0) / var.sqrt();
        let std = Normal::new(0.0, 1.0).expect("standard normal");
        (z, (2.0 * (1.0 - std.cdf(z.abs()))).clamp(0.0, 1.0))
    };
    Ok(MannWhitney { u, z, p_value })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub a: Summary,
    pub b: Summary,
    pub p_value: f64,
}

/// Boxplot statistics for two groups and their rank-sum p-value.
pub fn group_stats(a: &[f64], b: &[f64]) -> Result<GroupComparison, EvalError> {
    Ok(GroupComparison {
        a: summarize(a)?,
        b: summarize(b)?,
        p_value: mann_whitney(a, b)?.p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartiles_of_1_to_100() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let s = summarize(&v).unwrap();
        assert_eq!((s.q25, s.median, s.q75), (25.0, 50.0, 75.0));
    }

    #[test]
    fn identical_groups() {
        let v: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let r = group_stats(&v, &v).unwrap();
        assert!(r.p_value >= 0.9);
    }

    #[test]
    fn all_tied() {
        assert_eq!(mann_whitney(&[1.0, 1.0], &[1.0]).unwrap().p_value, 1.0);
        assert!(mann_whitney(&[], &[1.0]).is_err());
    }

    #[test]
    fn matches_hand_u() {
        // a = {1, 3}, b = {2, 4}: ranks of a are 1 and 3, U = 4 - 3 = 1
        let r = mann_whitney(&[1.0, 3.0], &[2.0, 4.0]).unwrap();
        assert_eq!(r.u, 1.0);
    }
}
