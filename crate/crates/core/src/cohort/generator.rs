//! Synthetic cohort generator with a planted risk function.
//!
//! Each patient gets a latent illness factor `z`. Every vital and lab is a
//! monotone transform of its own standard-normal score `u_f`, correlated with
//! `z` through a signed loading, so marginals are exact while features stay
//! mutually correlated. The planted linear predictor
//! `eta = intercept + sum(beta_f * u_f)` plus Gaussian noise gives the latent
//! `L`; severity is `logistic(L)`. Therapy levels, death and disposition are
//! all thresholded or logistic in `L`.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::devices::device_names;
use super::split::N_SITES;
use super::{
    Avpu, Cohort, CohortError, Comorbidity, Disposition, Lab, OutcomeRecord, OxygenTherapyLevel,
    PatientRecord, PcrResult, Race, Sex, Vital,
};
use crate::exec::Execution;
use crate::pnm::GrayImage;
use crate::seed;

/// Marginal distribution of one continuous feature, parameterized by a
/// standard-normal score `u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, sd: f64 },
    LogNormal { median: f64, sigma: f64 },
    /// `ceiling - gap` with a lognormal gap; increasing in `u`.
    ReflectedLogNormal { ceiling: f64, median_gap: f64, sigma: f64 },
}

impl Marginal {
    /// Lognormal with the given median and interquartile range.
    pub fn lognormal_iqr(median: f64, q25: f64, q75: f64) -> Self {
        Marginal::LogNormal {
            median,
            sigma: (q75 / q25).ln() / 1.349,
        }
    }

    /// Lognormal matching a mean and standard deviation.
    pub fn lognormal_moments(mean: f64, sd: f64) -> Self {
        let s2 = (1.0 + (sd / mean).powi(2)).ln();
        Marginal::LogNormal {
            median: mean / (s2 / 2.0).exp(),
            sigma: s2.sqrt(),
        }
    }

    pub fn value(&self, u: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, sd } => mean + sd * u,
            Marginal::LogNormal { median, sigma } => median * (sigma * u).exp(),
            Marginal::ReflectedLogNormal {
                ceiling,
                median_gap,
                sigma,
            } => ceiling - median_gap * (-sigma * u).exp(),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Marginal::Normal { mean, .. } => mean,
            Marginal::LogNormal { median, sigma } => median * (sigma * sigma / 2.0).exp(),
            Marginal::ReflectedLogNormal {
                ceiling,
                median_gap,
                sigma,
            } => ceiling - median_gap * (sigma * sigma / 2.0).exp(),
        }
    }

    pub fn sd(&self) -> f64 {
        match *self {
            Marginal::Normal { sd, .. } => sd,
            Marginal::LogNormal { median: m, sigma }
            | Marginal::ReflectedLogNormal {
                median_gap: m,
                sigma,
                ..
            } => {
                let s2 = sigma * sigma;
                ((s2.exp() - 1.0) * s2.exp()).sqrt() * m
            }
        }
    }

    fn is_valid(&self) -> bool {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        match *self {
            Marginal::Normal { mean, sd } => mean.is_finite() && ok(sd),
            Marginal::LogNormal { median, sigma } => ok(median) && ok(sigma),
            Marginal::ReflectedLogNormal {
                ceiling,
                median_gap,
                sigma,
            } => ceiling.is_finite() && ok(median_gap) && ok(sigma),
        }
    }
}

/// Marginal plus signed loading on the illness factor (|loading| < 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub marginal: Marginal,
    pub loading: f64,
    /// Physiologic clamp applied after sampling.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
}

fn spec(marginal: Marginal, loading: f64) -> FeatureSpec {
    FeatureSpec {
        marginal,
        loading,
        bounds: None,
    }
}

fn default_feature_spec(name: &str) -> Option<FeatureSpec> {
    use Marginal as M;
    let iqr = M::lognormal_iqr;
    Some(match name {
        "temperature" => spec(M::Normal { mean: 36.9, sd: 0.7 }, 0.35),
        "spo2" => FeatureSpec {
            marginal: M::ReflectedLogNormal {
                ceiling: 100.0,
                median_gap: 3.0,
                sigma: 0.70,
            },
            loading: -0.6,
            bounds: Some((50.0, 100.0)),
        },
        "respiratory_rate" => spec(M::lognormal_moments(20.4, 5.9), 0.5),
        "heart_rate" => spec(M::lognormal_moments(91.4, 19.8), 0.4),
        "systolic_bp" => spec(M::Normal { mean: 138.4, sd: 25.9 }, -0.2),
        "diastolic_bp" => spec(M::Normal { mean: 78.4, sd: 14.8 }, -0.2),
        "alanine_aminotransferase" => spec(iqr(22.0, 14.0, 36.0), 0.2),
        "aspartate_aminotransferase" => spec(iqr(27.0, 20.0, 43.0), 0.3),
        "c_reactive_protein" => spec(iqr(31.8, 7.7, 89.5), 0.5),
        "creatinine" => spec(iqr(0.9, 0.8, 1.2), 0.2),
        "ferritin" => spec(iqr(276.0, 118.0, 638.0), 0.35),
        "gfr" => spec(iqr(78.0, 53.0, 98.0), -0.2),
        "glucose" => spec(iqr(116.0, 100.0, 146.0), 0.2),
        "hemoglobin" => spec(iqr(13.1, 11.6, 14.4), -0.1),
        "lactate" => spec(iqr(1.5, 1.1, 2.3), 0.45),
        "lactate_dehydrogenase" => spec(iqr(255.0, 200.0, 351.0), 0.5),
        "lymphocyte" => spec(iqr(1.3, 0.9, 2.0), -0.35),
        "neutrophils" => spec(iqr(5.3, 3.7, 7.9), 0.4),
        "platelet" => spec(iqr(225.0, 175.0, 283.0), -0.1),
        "potassium" => spec(iqr(4.0, 3.7, 4.4), 0.05),
        "sodium" => spec(iqr(139.0, 136.0, 141.0), -0.1),
        "wbc" => spec(iqr(7.8, 5.8, 10.5), 0.3),
        "d_dimer" => spec(iqr(0.9, 0.5, 1.7), 0.4),
        "troponin_t" => spec(iqr(12.0, 7.0, 25.0), 0.3),
        "urea" => spec(iqr(5.7, 4.0, 8.6), 0.3),
        _ => return None,
    })
}

fn default_missing_rate(name: &str) -> Option<f64> {
    Some(match name {
        "temperature" | "heart_rate" => 0.03,
        "spo2" | "respiratory_rate" => 0.04,
        "systolic_bp" | "diastolic_bp" => 0.03,
        "wbc" | "hemoglobin" | "platelet" | "lymphocyte" | "neutrophils" => 0.15,
        "sodium" | "potassium" | "creatinine" | "gfr" | "glucose" => 0.15,
        "urea" => 0.12,
        "alanine_aminotransferase" | "aspartate_aminotransferase" => 0.4,
        "c_reactive_protein" => 0.4,
        "lactate" | "lactate_dehydrogenase" => 0.5,
        "ferritin" | "d_dimer" | "troponin_t" => 0.55,
        "avpu" => 0.2,
        _ => return None,
    })
}

fn continuous_names() -> impl Iterator<Item = &'static str> {
    Vital::ALL
        .iter()
        .map(|v| v.name())
        .chain(Lab::ALL.iter().map(|l| l.name()))
}

/// Names that may carry a planted coefficient.
pub fn plantable_names() -> Vec<&'static str> {
    let mut v: Vec<&'static str> = continuous_names().collect();
    v.extend(["age", "presenting_device"]);
    v
}

const REQUIRED_PLANTED: [&str; 4] = ["spo2", "respiratory_rate", "presenting_device", "age"];

/// Ground-truth risk function. Coefficients act on each feature's
/// standard-normal score (age: z-score; presenting_device: ordinal level 0-3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSignal {
    pub intercept: f64,
    pub coefficients: BTreeMap<String, f64>,
    pub noise_sd: f64,
}

impl Default for PlantedSignal {
    fn default() -> Self {
        let coefficients = [
            ("spo2", -1.1),
            ("respiratory_rate", 0.9),
            ("presenting_device", 0.9),
            ("age", 0.8),
            ("lactate", 0.35),
            ("lactate_dehydrogenase", 0.35),
            ("c_reactive_protein", 0.3),
            ("neutrophils", 0.3),
            ("systolic_bp", -0.2),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        PlantedSignal {
            intercept: -2.0,
            coefficients,
            noise_sd: 0.6,
        }
    }
}

/// Rates of records built to trip each exclusion rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExclusionRates {
    pub no_pcr: f64,
    pub prior_negative: f64,
    pub bad_timestamps: f64,
    pub bad_duration: f64,
}

impl Default for ExclusionRates {
    fn default() -> Self {
        ExclusionRates {
            no_pcr: 0.04,
            prior_negative: 0.03,
            bad_timestamps: 0.005,
            bad_duration: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub n: usize,
    pub site_proportions: [f64; N_SITES as usize],
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub age: Marginal,
    pub male_rate: f64,
    /// Asian, Black, Hispanic, Other, Unavailable, White.
    pub race_proportions: [f64; Race::COUNT],
    pub smoking_rate: f64,
    pub comorbidity_rates: [f64; Comorbidity::COUNT],
    /// Overrides for vital and lab marginals; absent names use built-in defaults.
    pub features: BTreeMap<String, FeatureSpec>,
    /// Base missing rate per vital, lab or `avpu`; absent names use defaults.
    pub missingness: BTreeMap<String, f64>,
    /// Log-odds decrease in missingness per unit of the latent `L`.
    pub informative_missingness: f64,
    pub planted: PlantedSignal,
    /// Standard-normal cutpoints of the presenting-device latent (LFO, HFO/NIV, MV).
    pub device_cutpoints: [f64; 3],
    /// Cutpoints on `L` for 72h therapy (LFO, HFO/NIV, MV).
    pub therapy_cutpoints: [f64; 3],
    /// Extra cutpoint offset for the 24h horizon.
    pub therapy_24h_offset: f64,
    pub therapy_noise_sd: f64,
    pub death_center: f64,
    pub death_slope: f64,
    pub disposition_noise_sd: f64,
    /// Cutpoints on the physician's noisy view of `L` (floor, icu).
    pub disposition_cutpoints: [f64; 2],
    pub image_intercept: f64,
    pub image_slope: f64,
    pub image_center: f64,
    pub image_noise_sd: f64,
    pub image_min_side: usize,
    pub image_max_side: usize,
    pub pcr_positive_rate: f64,
    pub pcr_pending_rate: f64,
    pub exclusions: ExclusionRates,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        let d = |m, dd| NaiveDate::from_ymd_opt(2020, m, dd).expect("valid date");
        let features = continuous_names()
            .map(|n| (n.to_string(), default_feature_spec(n).expect("default spec")))
            .collect();
        let missingness = continuous_names()
            .chain(["avpu"])
            .map(|n| (n.to_string(), default_missing_rate(n).expect("default rate")))
            .collect();
        GeneratorConfig {
            n: 5000,
            site_proportions: [4556.0, 2401.0, 998.0, 1873.0, 1232.0].map(|c| c / 11060.0),
            start_date: d(3, 1),
            end_date: d(5, 31),
            age: Marginal::Normal {
                mean: 56.7,
                sd: 19.8,
            },
            male_rate: 0.494,
            race_proportions: [0.033, 0.132, 0.026, 0.131, 0.051, 0.627],
            smoking_rate: 0.105,
            comorbidity_rates: [
                0.172, 0.166, 0.746, 0.059, 0.098, 0.217, 0.039, 0.018, 0.054, 0.337, 0.043, 0.010,
            ],
            features,
            missingness,
            informative_missingness: 0.4,
            planted: PlantedSignal::default(),
            device_cutpoints: [0.874, 1.675, 2.034],
            therapy_cutpoints: [-0.8, 1.93, 2.73],
            therapy_24h_offset: 0.4,
            therapy_noise_sd: 0.3,
            death_center: 2.79,
            death_slope: 1.6,
            disposition_noise_sd: 1.6,
            disposition_cutpoints: [-2.52, 2.79],
            image_intercept: 1.93,
            image_slope: 0.6,
            image_center: -0.8,
            image_noise_sd: 0.35,
            image_min_side: 40,
            image_max_side: 52,
            pcr_positive_rate: 0.309,
            pcr_pending_rate: 0.05,
            exclusions: ExclusionRates::default(),
            execution: Execution::default(),
        }
    }
}

fn check_rate(name: &str, r: f64) -> Result<(), CohortError> {
    if (0.0..=1.0).contains(&r) {
        Ok(())
    } else {
        Err(CohortError::Config(format!("{name} = {r} is not a rate in [0, 1]")))
    }
}

fn check_proportions(name: &str, p: &[f64]) -> Result<(), CohortError> {
    for &x in p {
        if !(x.is_finite() && x >= 0.0) {
            return Err(CohortError::Config(format!("{name} has invalid entry {x}")));
        }
    }
    if p.iter().sum::<f64>() <= 0.0 {
        return Err(CohortError::Config(format!("{name} sums to zero")));
    }
    Ok(())
}

fn check_sorted(name: &str, c: &[f64]) -> Result<(), CohortError> {
    if c.iter().any(|x| !x.is_finite()) || c.windows(2).any(|w| w[0] > w[1]) {
        return Err(CohortError::Config(format!("{name} must be finite and nondecreasing")));
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn feature_spec(&self, name: &str) -> Option<FeatureSpec> {
        self.features
            .get(name)
            .copied()
            .or_else(|| default_feature_spec(name))
    }

    pub fn missing_rate(&self, name: &str) -> f64 {
        self.missingness
            .get(name)
            .copied()
            .or_else(|| default_missing_rate(name))
            .unwrap_or(0.0)
    }

    /// Same config with every feature always observed and no designed exclusions.
    pub fn fully_observed(mut self) -> Self {
        for v in self.missingness.values_mut() {
            *v = 0.0;
        }
        for n in continuous_names().chain(["avpu"]) {
            self.missingness.insert(n.to_string(), 0.0);
        }
        self.exclusions = ExclusionRates {
            no_pcr: 0.0,
            prior_negative: 0.0,
            bad_timestamps: 0.0,
            bad_duration: 0.0,
        };
        self
    }

    pub fn validate(&self) -> Result<(), CohortError> {
        let err = |m: String| Err(CohortError::Config(m));
        if self.n == 0 {
            return err("n must be positive".into());
        }
        check_proportions("site_proportions", &self.site_proportions)?;
        check_proportions("race_proportions", &self.race_proportions)?;
        if self.start_date > self.end_date {
            return err("start_date after end_date".into());
        }
        if !self.age.is_valid() {
            return err("age marginal invalid".into());
        }
        check_rate("male_rate", self.male_rate)?;
        check_rate("smoking_rate", self.smoking_rate)?;
        check_rate("pcr_positive_rate", self.pcr_positive_rate)?;
        check_rate("pcr_pending_rate", self.pcr_pending_rate)?;
        for (c, r) in Comorbidity::ALL.iter().zip(&self.comorbidity_rates) {
            check_rate(c.name(), *r)?;
        }
        let ex = &self.exclusions;
        for (n, r) in [
            ("exclusions.no_pcr", ex.no_pcr),
            ("exclusions.prior_negative", ex.prior_negative),
            ("exclusions.bad_timestamps", ex.bad_timestamps),
            ("exclusions.bad_duration", ex.bad_duration),
        ] {
            check_rate(n, r)?;
        }
        if ex.no_pcr + ex.prior_negative + ex.bad_timestamps + ex.bad_duration > 1.0 {
            return err("exclusion rates sum above 1".into());
        }
        for (name, s) in &self.features {
            if default_feature_spec(name).is_none() {
                return err(format!("unknown feature {name:?}"));
            }
            if !s.marginal.is_valid() || !(s.loading.abs() < 1.0) {
                return err(format!("feature {name:?} has an invalid marginal or loading"));
            }
        }
        for (name, r) in &self.missingness {
            if default_missing_rate(name).is_none() {
                return err(format!("unknown missingness key {name:?}"));
            }
            check_rate(&format!("missingness.{name}"), *r)?;
        }
        let p = &self.planted;
        if p.coefficients.is_empty() {
            return err("planted signal has no coefficients".into());
        }
        let allowed = plantable_names();
        for (k, v) in &p.coefficients {
            if !allowed.contains(&k.as_str()) {
                return err(format!("planted coefficient on unknown feature {k:?}"));
            }
            if !v.is_finite() {
                return err(format!("planted coefficient {k:?} is not finite"));
            }
        }
        for req in REQUIRED_PLANTED {
            if !p.coefficients.contains_key(req) {
                return err(format!("planted signal must include {req}"));
            }
        }
        if !(p.noise_sd.is_finite() && p.noise_sd >= 0.0 && p.intercept.is_finite()) {
            return err("planted intercept/noise_sd invalid".into());
        }
        check_sorted("device_cutpoints", &self.device_cutpoints)?;
        check_sorted("therapy_cutpoints", &self.therapy_cutpoints)?;
        check_sorted("disposition_cutpoints", &self.disposition_cutpoints)?;
        for (n, x) in [
            ("therapy_noise_sd", self.therapy_noise_sd),
            ("disposition_noise_sd", self.disposition_noise_sd),
            ("image_noise_sd", self.image_noise_sd),
            ("death_slope", self.death_slope),
            ("informative_missingness", self.informative_missingness),
        ] {
            if !(x.is_finite() && x >= 0.0) {
                return err(format!("{n} must be finite and nonnegative"));
            }
        }
        if !(self.therapy_24h_offset.is_finite() && self.therapy_24h_offset >= 0.0) {
            return err("therapy_24h_offset must be nonnegative".into());
        }
        if self.image_min_side < 8 || self.image_min_side > self.image_max_side {
            return err("image side bounds invalid".into());
        }
        Ok(())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-9, 1.0 - 1e-9);
    (p / (1.0 - p)).ln()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn categorical(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

fn count_above(x: f64, cuts: &[f64]) -> usize {
    cuts.iter().filter(|&&c| x > c).count()
}

struct Generated {
    record: PatientRecord,
    outcome: OutcomeRecord,
    image: Option<GrayImage>,
}

/// Draws a synthetic chest radiograph whose lung opacity grows with `opacity`.
fn synth_image(rng: &mut ChaCha8Rng, width: usize, height: usize, opacity: f64) -> GrayImage {
    let (w, h) = (width as f64, height as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let lungs = [
        (cx - 0.2 * w, cy, 0.14 * w, 0.32 * h),
        (cx + 0.2 * w, cy, 0.14 * w, 0.32 * h),
    ];
    let in_ellipse = |x: f64, y: f64, (ex, ey, rx, ry): (f64, f64, f64, f64)| {
        ((x - ex) / rx).powi(2) + ((y - ey) / ry).powi(2) <= 1.0
    };
    let n_blobs = (opacity * 8.0).round() as usize;
    let blobs: Vec<(f64, f64, f64, f64)> = (0..n_blobs)
        .map(|_| {
            let (ex, ey, rx, ry) = lungs[rng.random_range(0..2)];
            let a = rng.random::<f64>() * std::f64::consts::TAU;
            let r = rng.random::<f64>().sqrt();
            (
                ex + r * rx * a.cos(),
                ey + r * ry * a.sin(),
                rng.random_range(1.5..4.0),
                rng.random_range(40.0..80.0),
            )
        })
        .collect();
    let mut pixels = Vec::with_capacity(width * height);
    for j in 0..height {
        for i in 0..width {
            let (x, y) = (i as f64 + 0.5, j as f64 + 0.5);
            let mut v = if in_ellipse(x, y, (cx, cy, 0.46 * w, 0.46 * h)) {
                150.0
            } else {
                25.0
            };
            if lungs.iter().any(|&l| in_ellipse(x, y, l)) {
                v = 45.0 + 85.0 * opacity;
                for &(bx, by, br, amp) in &blobs {
                    let d2 = (x - bx).powi(2) + (y - by).powi(2);
                    v += amp * (-d2 / (2.0 * br * br)).exp();
                }
            }
            v += 6.0 * normal(rng);
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(width, height, pixels).expect("dimensions match")
}

fn generate_one(cfg: &GeneratorConfig, master: u64, i: usize) -> Generated {
    let mut rng = seed::item_rng(master, i as u64);
    let rng = &mut rng;
    let patient_id = format!("P{i:06}");

    let site_id = categorical(rng, &cfg.site_proportions) as u8 + 1;
    let days = (cfg.end_date - cfg.start_date).num_days() + 1;
    let start: NaiveDateTime = cfg.start_date.and_hms_opt(0, 0, 0).expect("midnight");
    let visit_time = start + Duration::minutes(rng.random_range(0..days * 24 * 60));
    let mut decision_time = visit_time + Duration::minutes(rng.random_range(60..600));

    let u_age = normal(rng);
    let age = cfg.age.value(u_age).clamp(1.0, 105.0);
    let sex = if rng.random::<f64>() < cfg.male_rate {
        Sex::Male
    } else {
        Sex::Female
    };
    let race = Race::ALL[categorical(rng, &cfg.race_proportions)];
    let smoking = rng.random::<f64>() < cfg.smoking_rate;
    let mut comorbidities = [false; Comorbidity::COUNT];
    for (k, c) in Comorbidity::ALL.iter().enumerate() {
        let p = cfg.comorbidity_rates[k];
        comorbidities[k] = if *c == Comorbidity::Pregnancy {
            // concentrate the population rate on women aged 15-50
            let eligible = sex == Sex::Female && (15.0..=50.0).contains(&age);
            eligible && rng.random::<f64>() < (p * 5.0).min(1.0)
        } else {
            rng.random::<f64>() < p
        };
    }

    let z = normal(rng);
    let names: Vec<&str> = continuous_names().collect();
    let mut scores = BTreeMap::new();
    let mut values = Vec::with_capacity(names.len());
    for name in &names {
        let s = cfg.feature_spec(name).expect("known feature");
        let u = s.loading * z + (1.0 - s.loading * s.loading).sqrt() * normal(rng);
        let mut v = s.marginal.value(u);
        if let Some((lo, hi)) = s.bounds {
            v = v.clamp(lo, hi);
        }
        scores.insert(*name, u);
        values.push(v);
    }

    let u_spo2 = scores["spo2"];
    let device_latent = (-0.8 * u_spo2 + 0.4 * z + 0.6 * normal(rng)) / 1.2426;
    let device_level = count_above(device_latent, &cfg.device_cutpoints);
    let presenting_device = if device_level == 0 {
        None
    } else {
        let names = device_names(OxygenTherapyLevel::ALL[device_level]);
        Some(names[rng.random_range(0..names.len())].to_string())
    };

    let avpu_latent = 0.6 * z + 0.8 * normal(rng);
    let avpu = Avpu::ALL[count_above(avpu_latent, &[1.645, 2.3, 2.8])];

    let p = &cfg.planted;
    let mut eta = p.intercept;
    for (k, beta) in &p.coefficients {
        let x = match k.as_str() {
            "age" => u_age,
            "presenting_device" => device_level as f64,
            other => scores[other],
        };
        eta += beta * x;
    }
    let latent = eta + p.noise_sd * normal(rng);

    let eps_therapy = cfg.therapy_noise_sd * normal(rng);
    let level72 = count_above(latent + eps_therapy, &cfg.therapy_cutpoints);
    let cuts24 = cfg.therapy_cutpoints.map(|c| c + cfg.therapy_24h_offset);
    let level24 = count_above(latent + eps_therapy, &cuts24);

    let p_death = logistic(cfg.death_slope * (latent - cfg.death_center));
    let death_day = (rng.random::<f64>() < p_death).then(|| 30.0 * rng.random::<f64>().powi(2));
    // the physician sees the presentation, not the hidden course
    let physician_view = eta + cfg.disposition_noise_sd * normal(rng);
    let disposition = Disposition::ALL[count_above(physician_view, &cfg.disposition_cutpoints)];

    let obs_end = (cfg.end_date + Duration::days(31))
        .and_hms_opt(0, 0, 0)
        .expect("midnight");
    let observed_days = (obs_end - visit_time).num_seconds() as f64 / 86_400.0;
    let death_time =
        death_day.map(|d| decision_time + Duration::seconds((d * 86_400.0).round() as i64));
    let days_to_death = death_time.map(|t| (t - visit_time).num_seconds() as f64 / 86_400.0);
    let followup_days = match days_to_death {
        Some(d) if d < observed_days => d,
        _ => observed_days,
    };
    let died_24h = days_to_death.is_some_and(|d| d <= 1.0);
    let died_72h = days_to_death.is_some_and(|d| d <= 3.0);

    let has_image = rng.random::<f64>() < logistic(cfg.image_intercept + cfg.image_slope * latent);
    let image = has_image.then(|| {
        let w = rng.random_range(cfg.image_min_side..=cfg.image_max_side);
        let h = rng.random_range(cfg.image_min_side..=cfg.image_max_side);
        let opacity = logistic(latent - cfg.image_center + cfg.image_noise_sd * normal(rng));
        synth_image(rng, w, h, opacity)
    });

    let shift = cfg.informative_missingness * latent;
    let mut vitals = [None; Vital::COUNT];
    let mut labs = [None; Lab::COUNT];
    for (k, name) in names.iter().enumerate() {
        let p_miss = logistic(logit(cfg.missing_rate(name)) - shift);
        let present = cfg.missing_rate(name) == 0.0 || rng.random::<f64>() >= p_miss;
        let v = present.then_some(values[k]);
        if k < Vital::COUNT {
            vitals[k] = v;
        } else {
            labs[k - Vital::COUNT] = v;
        }
    }
    let avpu_rate = cfg.missing_rate("avpu");
    let avpu = (avpu_rate == 0.0 || rng.random::<f64>() >= logistic(logit(avpu_rate) - shift))
        .then_some(avpu);

    // PCR status and designed exclusions
    let ex = &cfg.exclusions;
    let mut covid_pcr_ordered = true;
    let mut pcr_time = Some(visit_time + Duration::minutes(rng.random_range(0..60)));
    let mut covid_pcr_result = if rng.random::<f64>() < cfg.pcr_pending_rate {
        None
    } else if rng.random::<f64>() < cfg.pcr_positive_rate {
        Some(PcrResult::Positive)
    } else {
        Some(PcrResult::Negative)
    };
    match categorical(
        rng,
        &[
            ex.no_pcr,
            ex.prior_negative,
            ex.bad_timestamps,
            ex.bad_duration,
            (1.0 - ex.no_pcr - ex.prior_negative - ex.bad_timestamps - ex.bad_duration).max(0.0),
        ],
    ) {
        0 => {
            covid_pcr_ordered = false;
            pcr_time = None;
            covid_pcr_result = None;
        }
        1 => {
            pcr_time = Some(visit_time - Duration::hours(rng.random_range(24..13 * 24)));
            covid_pcr_result = Some(PcrResult::Negative);
        }
        2 => decision_time = visit_time - Duration::minutes(rng.random_range(10..120)),
        3 => {
            decision_time = if rng.random::<bool>() {
                visit_time + Duration::minutes(2)
            } else {
                visit_time + Duration::days(8)
            }
        }
        _ => {}
    }

    let image_path = image.as_ref().map(|_| format!("{patient_id}.pgm"));
    let record = PatientRecord {
        patient_id: patient_id.clone(),
        site_id,
        visit_time,
        decision_time,
        age,
        sex,
        race,
        smoking,
        covid_pcr_ordered,
        covid_pcr_result,
        pcr_time,
        comorbidities,
        vitals,
        labs,
        avpu,
        presenting_device,
        image: image_path,
    };
    let outcome = OutcomeRecord {
        patient_id,
        max_therapy_24h: OxygenTherapyLevel::ALL[level24],
        max_therapy_72h: OxygenTherapyLevel::ALL[level72],
        died_24h,
        died_72h,
        death_time,
        disposition,
        followup_days,
    };
    Generated {
        record,
        outcome,
        image,
    }
}

/// Generates `config.n` records with outcomes and images, deterministically per seed.
pub fn generate_synthetic_cohort(config: &GeneratorConfig, seed: u64) -> Result<Cohort, CohortError> {
    config.validate()?;
    let generated = config
        .execution
        .map_indexed(config.n, |i| generate_one(config, seed, i));
    let mut cohort = Cohort::default();
    for g in generated {
        if let (Some(path), Some(img)) = (&g.record.image, g.image) {
            cohort.images.insert(path.clone(), img);
        }
        cohort.records.push(g.record);
        cohort.outcomes.push(g.outcome);
    }
    Ok(cohort)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(n: usize) -> GeneratorConfig {
        GeneratorConfig {
            n,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_cohort(&small(200), 7).unwrap();
        let b = generate_synthetic_cohort(&small(200), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_cohort(&small(200), 8).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn sequential_matches_parallel() {
        let mut cfg = small(100);
        let a = generate_synthetic_cohort(&cfg, 3).unwrap();
        cfg.execution = Execution::Sequential;
        assert_eq!(a, generate_synthetic_cohort(&cfg, 3).unwrap());
    }

    #[test]
    fn config_errors() {
        let mut cfg = small(10);
        cfg.planted.coefficients.clear();
        assert!(matches!(generate_synthetic_cohort(&cfg, 0), Err(CohortError::Config(_))));
        let mut cfg = small(10);
        cfg.missingness.insert("lactate".into(), -0.1);
        assert!(generate_synthetic_cohort(&cfg, 0).is_err());
        let mut cfg = small(10);
        cfg.planted.coefficients.remove("spo2");
        assert!(generate_synthetic_cohort(&cfg, 0).is_err());
    }

    #[test]
    fn record_invariants() {
        let c = generate_synthetic_cohort(&small(500), 1).unwrap();
        for (r, o) in c.pairs() {
            assert!((1..=5).contains(&r.site_id));
            assert!(r.age > 0.0);
            assert!(r.vitals.iter().chain(&r.labs).flatten().all(|v| v.is_finite()));
            assert!(!o.died_24h || o.died_72h);
            assert!(o.max_therapy_24h <= o.max_therapy_72h);
            if o.death_time.is_none() {
                assert!(o.followup_days >= 30.0);
            }
            assert_eq!(r.image.is_some(), c.image_for(r).is_some());
        }
    }

    #[test]
    fn marginal_moments() {
        let m = Marginal::lognormal_moments(20.4, 5.9);
        assert!((m.mean() - 20.4).abs() < 1e-9);
        assert!((m.sd() - 5.9).abs() < 1e-9);
        let r = Marginal::ReflectedLogNormal {
            ceiling: 100.0,
            median_gap: 3.0,
            sigma: 0.7,
        };
        assert!(r.value(1.0) > r.value(0.0));
        assert_eq!(r.value(0.0), 97.0);
    }
}
