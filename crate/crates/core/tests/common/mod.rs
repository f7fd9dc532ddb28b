//! Independent oracles and data generators shared by the integration and
//! acceptance tests. Nothing here calls into the code it checks.

#![allow(dead_code)]

use corisk::clinical::ClinicalScoreInputs;
use corisk::cohort::{Avpu, Disposition};
use corisk::evaluation::RocCurve;
use corisk::imputation::{Column, FeatureMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- AUC

/// Scores on a coarse grid so ties are common; both classes present.
pub fn auc_dataset(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<bool>) {
    let n = rng.random_range(2..=500);
    let levels = rng.random_range(2..=40) as f64;
    let shift: f64 = rng.random_range(0.0..1.5);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = labels
        .iter()
        .map(|&l| {
            let z: f64 = StandardNormal.sample(rng);
            ((z + if l { shift } else { 0.0 }) * levels / 4.0).round() / levels
        })
        .collect();
    (scores, labels)
}

/// Tie-corrected pair counting: P(pos > neg) + 0.5 P(pos == neg).
pub fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut half_units, mut pairs) = (0u64, 0u64);
    for (i, &p) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &q) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            half_units += if p > q { 2 } else if p == q { 1 } else { 0 };
        }
    }
    half_units as f64 / (2 * pairs) as f64
}

// ---------------------------------------------------------------- clinical tables

/// A banded range `[lo, hi]` with per-end inclusivity.
struct Band {
    lo: f64,
    lo_incl: bool,
    hi: f64,
    hi_incl: bool,
    points: u8,
}

const fn band(lo: f64, lo_incl: bool, hi: f64, hi_incl: bool, points: u8) -> Band {
    Band { lo, lo_incl, hi, hi_incl, points }
}

const INF: f64 = f64::INFINITY;

/// Published MEWS tables, written as ranges.
const MEWS_SBP: &[Band] = &[
    band(-INF, true, 70.0, true, 3),
    band(70.0, false, 80.0, true, 2),
    band(80.0, false, 100.0, true, 1),
    band(100.0, false, 200.0, false, 0),
    band(200.0, true, INF, true, 2),
];
const MEWS_HR: &[Band] = &[
    band(-INF, true, 40.0, true, 2),
    band(40.0, false, 50.0, true, 1),
    band(50.0, false, 100.0, true, 0),
    band(100.0, false, 110.0, true, 1),
    band(110.0, false, 130.0, false, 2),
    band(130.0, true, INF, true, 3),
];
const MEWS_RR: &[Band] = &[
    band(-INF, true, 9.0, false, 2),
    band(9.0, true, 15.0, false, 0),
    band(15.0, true, 21.0, false, 1),
    band(21.0, true, 30.0, false, 2),
    band(30.0, true, INF, true, 3),
];
const MEWS_TEMP: &[Band] = &[
    band(-INF, true, 35.0, false, 2),
    band(35.0, true, 38.5, false, 0),
    band(38.5, true, INF, true, 2),
];

fn lookup(table: &[Band], v: f64) -> u8 {
    let hits: Vec<u8> = table
        .iter()
        .filter(|b| {
            let above = if b.lo_incl { v >= b.lo } else { v > b.lo };
            let below = if b.hi_incl { v <= b.hi } else { v < b.hi };
            above && below
        })
        .map(|b| b.points)
        .collect();
    assert_eq!(hits.len(), 1, "table bands must partition the line at {v}");
    hits[0]
}

/// Inclusive plausibility bounds of the default configuration.
pub const BOUNDS: [(&str, f64, f64); 7] = [
    ("respiratory_rate", 0.0, 80.0),
    ("systolic_bp", 20.0, 300.0),
    ("diastolic_bp", 10.0, 200.0),
    ("heart_rate", 10.0, 300.0),
    ("temperature", 25.0, 45.0),
    ("urea", 0.0, 150.0),
    ("age", 0.0, 120.0),
];

fn bound(name: &str) -> (f64, f64) {
    BOUNDS.iter().find(|b| b.0 == name).map(|b| (b.1, b.2)).unwrap()
}

fn in_bounds(name: &str, v: Option<f64>) -> bool {
    let (lo, hi) = bound(name);
    v.is_none_or(|v| lo <= v && v <= hi)
}

fn all_in_bounds(x: &ClinicalScoreInputs) -> bool {
    in_bounds("respiratory_rate", x.respiratory_rate)
        && in_bounds("systolic_bp", x.systolic_bp)
        && in_bounds("diastolic_bp", x.diastolic_bp)
        && in_bounds("heart_rate", x.heart_rate)
        && in_bounds("temperature", x.temperature)
        && in_bounds("urea", x.urea)
        && in_bounds("age", Some(x.age))
}

/// Expected outcome: `Err(())` for implausible input, `Ok(None)` when a
/// required field is absent, otherwise the point total.
pub type Expected = Result<Option<u8>, ()>;

pub fn mews_oracle(x: &ClinicalScoreInputs) -> Expected {
    if !all_in_bounds(x) {
        return Err(());
    }
    let (Some(s), Some(h), Some(r), Some(t), Some(a)) =
        (x.systolic_bp, x.heart_rate, x.respiratory_rate, x.temperature, x.avpu)
    else {
        return Ok(None);
    };
    let avpu = [Avpu::Alert, Avpu::Voice, Avpu::Pain, Avpu::Unresponsive]
        .iter()
        .position(|v| *v == a)
        .unwrap() as u8;
    Ok(Some(lookup(MEWS_SBP, s) + lookup(MEWS_HR, h) + lookup(MEWS_RR, r) + lookup(MEWS_TEMP, t) + avpu))
}

pub fn curb65_oracle(x: &ClinicalScoreInputs) -> Expected {
    if !all_in_bounds(x) {
        return Err(());
    }
    let (Some(c), Some(u), Some(r), Some(s), Some(d)) =
        (x.confusion, x.urea, x.respiratory_rate, x.systolic_bp, x.diastolic_bp)
    else {
        return Ok(None);
    };
    // criteria table: (met?, 1 point)
    let criteria = [c, u > 7.0, r >= 30.0, s < 90.0 || d <= 60.0, x.age >= 65.0];
    Ok(Some(criteria.iter().map(|&m| m as u8).sum()))
}

/// Values around each edge and each plausibility bound, plus absence.
pub fn edge_values(field: &str, edges: &[f64]) -> Vec<Option<f64>> {
    let (lo, hi) = bound(field);
    let mut v = vec![None, Some(lo), Some(hi), Some(lo - 0.5), Some(hi + 0.5)];
    for &e in edges {
        for d in [-0.5, -1e-9, 0.0, 1e-9, 0.5] {
            v.push(Some(e + d));
        }
    }
    v
}

pub fn avpu_values() -> Vec<Option<Avpu>> {
    vec![None, Some(Avpu::Alert), Some(Avpu::Voice), Some(Avpu::Pain), Some(Avpu::Unresponsive)]
}

fn empty_inputs() -> ClinicalScoreInputs {
    ClinicalScoreInputs {
        confusion: None,
        urea: None,
        respiratory_rate: None,
        systolic_bp: None,
        diastolic_bp: None,
        heart_rate: None,
        temperature: None,
        age: 50.0,
        avpu: None,
    }
}

/// Product grid over the MEWS inputs' band edges.
pub fn mews_grid() -> Vec<ClinicalScoreInputs> {
    let sbp = edge_values("systolic_bp", &[70.0, 80.0, 100.0, 200.0]);
    let hr = edge_values("heart_rate", &[40.0, 50.0, 100.0, 110.0, 130.0]);
    let rr = edge_values("respiratory_rate", &[9.0, 15.0, 21.0, 30.0]);
    let temp = edge_values("temperature", &[35.0, 38.5]);
    let mut out = Vec::new();
    for &s in &sbp {
        for &h in &hr {
            for &r in &rr {
                for &t in &temp {
                    for a in avpu_values() {
                        out.push(ClinicalScoreInputs {
                            systolic_bp: s,
                            heart_rate: h,
                            respiratory_rate: r,
                            temperature: t,
                            avpu: a,
                            ..empty_inputs()
                        });
                    }
                }
            }
        }
    }
    out
}

/// Product grid over the CURB-65 inputs' cutoffs.
pub fn curb65_grid() -> Vec<ClinicalScoreInputs> {
    let urea = edge_values("urea", &[7.0]);
    let rr = edge_values("respiratory_rate", &[30.0]);
    let sbp = edge_values("systolic_bp", &[90.0]);
    let dbp = edge_values("diastolic_bp", &[60.0]);
    let ages = [0.0, 64.5, 65.0 - 1e-9, 65.0, 65.5, 120.0, 120.5, -0.5];
    let mut out = Vec::new();
    for confusion in [None, Some(false), Some(true)] {
        for &u in &urea {
            for &r in &rr {
                for &s in &sbp {
                    for &d in &dbp {
                        for &age in &ages {
                            out.push(ClinicalScoreInputs {
                                confusion,
                                urea: u,
                                respiratory_rate: r,
                                systolic_bp: s,
                                diastolic_bp: d,
                                age,
                                ..empty_inputs()
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------- bands

pub fn band_instance(rng: &mut ChaCha8Rng) -> Vec<(f64, Disposition)> {
    let n = rng.random_range(3..=200);
    let mut v: Vec<(f64, Disposition)> = (0..n)
        .map(|_| {
            let d = Disposition::ALL[rng.random_range(0..3)];
            let centre = 30.0 * d.index() as f64 + 20.0;
            let z: f64 = StandardNormal.sample(rng);
            let s = centre + 25.0 * z;
            ((s.clamp(0.0, 100.0) * 2.0).round() / 2.0, d)
        })
        .collect();
    for (k, d) in Disposition::ALL.iter().enumerate() {
        v[k].1 = *d;
    }
    v
}

/// Direct count over every pair of midpoint cutpoints.
pub fn brute_force_agreement(data: &[(f64, Disposition)]) -> usize {
    let mut distinct: Vec<f64> = data.iter().map(|d| d.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let cuts: Vec<f64> = distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    let mut best = 0;
    for (i, &lo) in cuts.iter().enumerate() {
        for &hi in &cuts[i + 1..] {
            let agree = data
                .iter()
                .filter(|(s, d)| {
                    let band = if *s < lo {
                        Disposition::Discharge
                    } else if *s >= hi {
                        Disposition::Icu
                    } else {
                        Disposition::Floor
                    };
                    band == *d
                })
                .count();
            best = best.max(agree);
        }
    }
    best
}

// ---------------------------------------------------------------- ROC curves

/// Random monotone curve from (0, 0) to (1, 1) with distinct thresholds.
pub fn random_curve(rng: &mut ChaCha8Rng) -> RocCurve {
    let k = rng.random_range(1..60);
    let mut fpr: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let mut tpr: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    fpr.sort_by(f64::total_cmp);
    tpr.sort_by(f64::total_cmp);
    let mut points = vec![corisk::evaluation::RocPoint { fpr: 0.0, tpr: 0.0, threshold: None }];
    for i in 0..k {
        points.push(corisk::evaluation::RocPoint {
            fpr: fpr[i],
            tpr: tpr[i],
            threshold: Some(1.0 - (i + 1) as f64 / (k + 2) as f64),
        });
    }
    points.push(corisk::evaluation::RocPoint { fpr: 1.0, tpr: 1.0, threshold: Some(0.0) });
    RocCurve { points, auc: 0.0 }
}

/// Minimum Euclidean distance from the target over every vertex.
pub fn scan_min_distance(curve: &RocCurve, sens: f64, spec: f64) -> f64 {
    curve
        .points
        .iter()
        .map(|p| ((p.tpr - sens).powi(2) + ((1.0 - p.fpr) - spec).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- imputation

/// Correlated Gaussian columns driven by two latent factors.
pub fn correlated_matrix(n: usize, p: usize, seed: u64) -> FeatureMatrix {
    let mut r = rng(seed);
    let loadings: Vec<[f64; 2]> = (0..p).map(|_| [r.random_range(0.5..1.5), r.random_range(-1.0..1.0)]).collect();
    let rows = (0..n)
        .map(|_| {
            let f: [f64; 2] = [StandardNormal.sample(&mut r), StandardNormal.sample(&mut r)];
            loadings
                .iter()
                .enumerate()
                .map(|(c, l)| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    Some(c as f64 + l[0] * f[0] + l[1] * f[1] + 0.3 * e)
                })
                .collect()
        })
        .collect();
    let cols = (0..p).map(|c| Column::continuous(format!("x{c}"))).collect();
    FeatureMatrix::new(cols, rows).unwrap()
}

/// Blanks exactly `round(rate * cells)` cells chosen at random, never the
/// last observed value of a row. Returns the masked matrix and the mask
/// (row-major).
pub fn mask_cells(m: &FeatureMatrix, rate: f64, seed: u64) -> (FeatureMatrix, Vec<bool>) {
    let mut r = rng(seed);
    let (n, p) = (m.n_rows(), m.n_cols());
    let keep: Vec<usize> = (0..n).map(|_| r.random_range(0..p)).collect();
    let mut candidates: Vec<usize> = (0..n * p).filter(|i| keep[i / p] != i % p).collect();
    let target = (rate * (n * p) as f64).round() as usize;
    assert!(target <= candidates.len(), "rate too high to keep one value per row");
    let mut mask = vec![false; n * p];
    for k in 0..target {
        let j = r.random_range(k..candidates.len());
        candidates.swap(k, j);
        mask[candidates[k]] = true;
    }
    let rows = (0..n)
        .map(|i| (0..p).map(|c| if mask[i * p + c] { None } else { m.get(i, c) }).collect())
        .collect();
    (FeatureMatrix::new(m.columns().to_vec(), rows).unwrap(), mask)
}

/// Pooled normalized RMSE over masked cells.
pub fn nrmse_oracle(truth: &FeatureMatrix, imputed: &FeatureMatrix, mask: &[bool]) -> f64 {
    let p = truth.n_cols();
    let cells: Vec<(f64, f64)> = mask
        .iter()
        .enumerate()
        .filter(|(_, m)| **m)
        .map(|(i, _)| (truth.get(i / p, i % p).unwrap(), imputed.get(i / p, i % p).unwrap()))
        .collect();
    let n = cells.len() as f64;
    let mean = cells.iter().map(|c| c.0).sum::<f64>() / n;
    let var = cells.iter().map(|c| (c.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mse = cells.iter().map(|c| (c.0 - c.1).powi(2)).sum::<f64>() / n;
    (mse / var).sqrt()
}
