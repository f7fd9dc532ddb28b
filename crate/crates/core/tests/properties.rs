//! Invariants checked over generated inputs.

mod common;

use std::collections::BTreeSet;

use corisk::clinical::{curb65, mews, ClinicalScore, ClinicalScoreInputs, PhysiologicBounds};
use corisk::cohort::{
    apply_inclusion_criteria, derive_outcome_label, generate_synthetic_cohort, split_cohort, therapy_encoding,
    Avpu, Disposition, GeneratorConfig, Horizon, OutcomeRecord, OxygenTherapyLevel, SplitSpec,
};
use corisk::evaluation::{
    auc, bootstrap_ci, closest_roc_threshold, km_estimate, operating_point_at_sensitivity, roc, BootstrapConfig,
    OperatingPoint, Resample,
};
use corisk::forest::{ColumnKind, DenseColumns, Forest, ForestConfig, Task};
use corisk::imputation::{impute, ImputeConfig};
use corisk::scoring::{assign_band, combine, fit_band_thresholds, to_corisk, BandThresholds, ScoreSource};
use corisk::Execution;
use proptest::prelude::*;

fn labelled(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0u8..20, any::<bool>()), 2..max).prop_map(|mut v| {
        v[0].1 = true;
        v[1].1 = false;
        v.into_iter().map(|(s, l)| (s as f64 / 19.0, l)).unzip()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn to_corisk_is_strictly_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (sa, sb) = (to_corisk(a).unwrap(), to_corisk(b).unwrap());
        prop_assert!((0.0..=100.0).contains(&sa));
        if a < b {
            prop_assert!(sa < sb);
        }
    }

    #[test]
    fn to_corisk_rejects_out_of_range(x in prop_oneof![-10.0f64..-1e-12, 1.0f64 + 1e-12..10.0]) {
        prop_assert!(to_corisk(x).is_err());
    }

    #[test]
    fn combine_never_mixes(dl in 0.0f64..1.0, rf in 0.0f64..1.0, has in any::<bool>()) {
        let (v, src) = combine(Some(dl), rf, has).unwrap();
        if has {
            prop_assert_eq!((v, src), (dl, ScoreSource::FusionModel));
        } else {
            prop_assert_eq!((v, src), (rf, ScoreSource::Forest));
        }
    }

    #[test]
    fn assign_band_is_monotone(lo in 1.0f64..50.0, gap in 1.0f64..49.0, a in 0.0f64..=100.0, b in 0.0f64..=100.0) {
        let t = BandThresholds::new(lo, lo + gap).unwrap();
        if a <= b {
            prop_assert!(assign_band(a, &t) <= assign_band(b, &t));
        }
    }

    #[test]
    fn fitted_bands_are_ordered_and_consistent(seed in any::<u64>()) {
        let data = common::band_instance(&mut common::rng(seed));
        let fit = fit_band_thresholds(&data).unwrap();
        let t = fit.thresholds;
        prop_assert!(0.0 < t.t_low_med && t.t_low_med < t.t_med_high && t.t_med_high < 100.0);
        let agreement = data.iter().filter(|(s, d)| assign_band(*s, &t).disposition() == *d).count();
        prop_assert_eq!(agreement, fit.agreement);
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms((s, l) in labelled(200)) {
        let base = auc(&s, &l).unwrap();
        let cube: Vec<f64> = s.iter().map(|&x| to_corisk(x).unwrap()).collect();
        let exp: Vec<f64> = s.iter().map(|&x| (3.0 * x).exp() - 7.0).collect();
        prop_assert_eq!(auc(&cube, &l).unwrap(), base);
        prop_assert_eq!(auc(&exp, &l).unwrap(), base);
        let neg: Vec<f64> = s.iter().map(|x| -x).collect();
        prop_assert!((auc(&neg, &l).unwrap() - (1.0 - base)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn roc_curve_is_monotone((s, l) in labelled(200)) {
        let c = roc(&s, &l).unwrap();
        let (first, last) = (c.points[0], *c.points.last().unwrap());
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
    }

    #[test]
    fn closest_point_is_a_curve_vertex((s, l) in labelled(100), sens in 0.0f64..=1.0, spec in 0.0f64..=1.0) {
        let c = roc(&s, &l).unwrap();
        let target = OperatingPoint { sensitivity: sens, specificity: spec, threshold: None };
        let (thr, p) = closest_roc_threshold(&c, &target);
        prop_assert!(c.points.iter().any(|v| v.threshold == thr && v.tpr == p.sensitivity && 1.0 - v.fpr == p.specificity));
    }

    #[test]
    fn operating_point_at_sensitivity_is_monotone((s, l) in labelled(100), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let c = roc(&s, &l).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pl, ph) = (operating_point_at_sensitivity(&c, lo).unwrap(), operating_point_at_sensitivity(&c, hi).unwrap());
        prop_assert!(pl.sensitivity >= lo && ph.sensitivity >= hi);
        prop_assert!(pl.sensitivity <= ph.sensitivity);
        prop_assert!(pl.specificity >= ph.specificity);
    }

    #[test]
    fn km_is_non_increasing(v in prop::collection::vec((0u8..40, any::<bool>()), 1..60)) {
        let (t, e): (Vec<f64>, Vec<bool>) = v.into_iter().map(|(t, e)| (t as f64, e)).unzip();
        let km = km_estimate(&t, &e, 30.0).unwrap();
        for w in km.steps.windows(2) {
            prop_assert!(w[1].survival <= w[0].survival && w[1].time > w[0].time);
        }
        for s in &km.steps {
            prop_assert!((0.0..=1.0).contains(&s.survival));
            prop_assert!(s.time <= 30.0);
        }
    }

    #[test]
    fn identity_bootstrap_equals_point_estimate((s, l) in labelled(100)) {
        let cfg = BootstrapConfig { n_boot: 1, resample: Resample::Identity, ..Default::default() };
        let ci = bootstrap_ci(&s, &l, auc, &cfg, 1).unwrap();
        let p = auc(&s, &l).unwrap();
        prop_assert_eq!((ci.lo, ci.hi), (p, p));
    }

    #[test]
    fn clinical_scores_are_bounded_and_all_or_nothing(
        conf in proptest::option::of(any::<bool>()),
        urea in proptest::option::of(0.0f64..150.0),
        rr in proptest::option::of(0.0f64..80.0),
        sbp in proptest::option::of(20.0f64..300.0),
        dbp in proptest::option::of(10.0f64..200.0),
        hr in proptest::option::of(10.0f64..300.0),
        temp in proptest::option::of(25.0f64..45.0),
        age in 0.0f64..120.0,
        avpu in proptest::option::of(0usize..4),
    ) {
        let x = ClinicalScoreInputs {
            confusion: conf, urea, respiratory_rate: rr, systolic_bp: sbp, diastolic_bp: dbp,
            heart_rate: hr, temperature: temp, age, avpu: avpu.map(|i| Avpu::ALL[i]),
        };
        let b = PhysiologicBounds::default();
        let c = curb65(&x, &b).unwrap();
        let curb_complete = conf.is_some() && urea.is_some() && rr.is_some() && sbp.is_some() && dbp.is_some();
        match c {
            ClinicalScore::Value(v) => prop_assert!(curb_complete && v <= 5),
            ClinicalScore::Incomputable { missing } => prop_assert!(!curb_complete && !missing.is_empty()),
        }
        let m = mews(&x, &b).unwrap();
        let mews_complete = sbp.is_some() && hr.is_some() && rr.is_some() && temp.is_some() && avpu.is_some();
        match m {
            ClinicalScore::Value(v) => prop_assert!(mews_complete && v <= 14),
            ClinicalScore::Incomputable { missing } => prop_assert!(!mews_complete && !missing.is_empty()),
        }
    }

    /// Switching any single CURB-65 criterion on never lowers the score.
    #[test]
    fn curb65_monotone_in_each_criterion(base in 0u8..32, extra in 0usize..5) {
        let on = |bits: u8, k: usize| bits & (1 << k) != 0;
        let inputs = |bits: u8| ClinicalScoreInputs {
            confusion: Some(on(bits, 0)),
            urea: Some(if on(bits, 1) { 9.0 } else { 5.0 }),
            respiratory_rate: Some(if on(bits, 2) { 32.0 } else { 18.0 }),
            systolic_bp: Some(if on(bits, 3) { 85.0 } else { 120.0 }),
            diastolic_bp: Some(80.0),
            heart_rate: None,
            temperature: None,
            age: if on(bits, 4) { 70.0 } else { 40.0 },
            avpu: None,
        };
        let b = PhysiologicBounds::default();
        let before = curb65(&inputs(base), &b).unwrap().value().unwrap();
        let after = curb65(&inputs(base | 1 << extra), &b).unwrap().value().unwrap();
        prop_assert!(after >= before);
        prop_assert_eq!(before as u32, base.count_ones());
    }

    #[test]
    fn label_monotone_in_therapy(a in 0usize..4, b in 0usize..4) {
        let (la, lb) = (OxygenTherapyLevel::ALL[a], OxygenTherapyLevel::ALL[b]);
        if la < lb {
            prop_assert!(therapy_encoding(la) < therapy_encoding(lb));
        }
        let o = OutcomeRecord {
            patient_id: "x".into(), max_therapy_24h: la, max_therapy_72h: lb, died_24h: false, died_72h: false,
            death_time: None, disposition: Disposition::Floor, followup_days: 30.0,
        };
        prop_assert_eq!(derive_outcome_label(&o, Horizon::H24), therapy_encoding(la));
        prop_assert_eq!(derive_outcome_label(&o, Horizon::H72), therapy_encoding(lb));
    }
}

fn small_cohort(seed: u64) -> corisk::cohort::Cohort {
    let cfg = GeneratorConfig {
        n: 400,
        ..GeneratorConfig::default()
    };
    generate_synthetic_cohort(&cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn exclusion_is_idempotent(seed in any::<u64>()) {
        let c = small_cohort(seed);
        let (once, _) = apply_inclusion_criteria(&c.records);
        let (twice, log) = apply_inclusion_criteria(&once);
        prop_assert_eq!(once, twice);
        prop_assert!(log.is_empty());
    }

    #[test]
    fn splits_partition_the_included_cohort(seed in any::<u64>(), by_period in any::<bool>()) {
        let c = small_cohort(seed);
        let (included, _) = apply_inclusion_criteria(&c.records);
        let spec = if by_period { SplitSpec::default_periods() } else { SplitSpec::default_sites() };
        let Ok(s) = split_cohort(&included, &spec, seed) else {
            // a small cohort may leave a window empty, which is a reported error
            return Ok(());
        };
        let sets: Vec<BTreeSet<&String>> = [&s.train_ids, &s.validation_ids, &s.test_ids]
            .iter()
            .map(|v| v.iter().collect())
            .collect();
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                prop_assert!(a.is_disjoint(b));
            }
        }
        let all: BTreeSet<&String> = sets.iter().flatten().copied().collect();
        let expected: BTreeSet<&String> = included.iter().map(|r| &r.patient_id).collect();
        prop_assert_eq!(all, expected);
        let windowed: usize = s.test_windows.iter().map(|w| w.1.len()).sum();
        prop_assert_eq!(windowed, s.test_ids.len());
    }

    #[test]
    fn forest_predictions_stay_in_target_range(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..4).map(|_| rand::Rng::random::<f64>(&mut r)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|x| 3.0 * x[0] - x[1] + rand::Rng::random_range(&mut r, -0.2..0.2)).collect();
        let x = DenseColumns::from_rows(vec![ColumnKind::Continuous; 4], &rows).unwrap();
        let cfg = ForestConfig { n_trees: 20, ..ForestConfig::default() };
        let f = Forest::fit(&x, &y, Task::Regression, &cfg, seed).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        for _ in 0..50 {
            let q: Vec<f64> = (0..4).map(|_| rand::Rng::random_range(&mut r, -1.0..2.0)).collect();
            let p = f.predict(&q).unwrap();
            prop_assert!(lo <= p && p <= hi);
        }
        let again = Forest::fit(&x, &y, Task::Regression, &cfg, seed).unwrap();
        prop_assert_eq!(&f, &again);
    }

    /// Row order does not matter once rows carry stable keys.
    #[test]
    fn keyed_forest_ignores_row_order(seed in any::<u64>()) {
        let mut r = common::rng(seed);
        let rows: Vec<Vec<f64>> = (0..80).map(|_| (0..3).map(|_| rand::Rng::random::<f64>(&mut r)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|x| x[0] + x[2]).collect();
        let keys: Vec<u64> = (0..80).map(|i| i * 7919 + 13).collect();
        let mut perm: Vec<usize> = (0..80).collect();
        perm.reverse();
        perm.swap(3, 40);
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let ys: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let ks: Vec<u64> = perm.iter().map(|&i| keys[i]).collect();
        let kinds = vec![ColumnKind::Continuous; 3];
        let cfg = ForestConfig { n_trees: 10, ..ForestConfig::default() };
        let a = Forest::fit_keyed(&DenseColumns::from_rows(kinds.clone(), &rows).unwrap(), &y, &keys, Task::Regression, &cfg, seed).unwrap();
        let b = Forest::fit_keyed(&DenseColumns::from_rows(kinds, &shuffled).unwrap(), &ys, &ks, Task::Regression, &cfg, seed).unwrap();
        for row in &rows {
            prop_assert_eq!(a.predict(row).unwrap(), b.predict(row).unwrap());
        }
    }

    #[test]
    fn imputation_keeps_observed_cells_and_fills_the_rest(seed in any::<u64>()) {
        let truth = common::correlated_matrix(60, 4, seed);
        let (masked, mask) = common::mask_cells(&truth, 0.2, seed ^ 1);
        let cfg = ImputeConfig { n_trees: 8, max_iters: 3, execution: Execution::Sequential, ..ImputeConfig::default() };
        let out = impute(&masked, &cfg, seed).unwrap().completed;
        prop_assert_eq!(out.n_missing(), 0);
        for r in 0..truth.n_rows() {
            for c in 0..truth.n_cols() {
                if !mask[r * truth.n_cols() + c] {
                    prop_assert_eq!(out.get(r, c).unwrap().to_bits(), masked.get(r, c).unwrap().to_bits());
                }
            }
        }
    }
}
