use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fit::{fit_models, PreparedCohort};
use super::{km_svg, roc_svg, ModelBundle, PipelineConfig, PipelineError, ScoreResult, Scorer};
use crate::cohort::{derive_outcome_label, split_cohort, CohortSplit, Disposition, Horizon, OxygenTherapyLevel};
use crate::evaluation::{
    auc, bootstrap_ci, bootstrap_statistic, closest_roc_threshold, group_stats, km_estimate, logrank_test,
    mean_squared_error, operating_point_at_sensitivity, permutation_importance, physician_operating_point, roc,
    BootstrapConfig, ConfidenceInterval, EvalError, GroupComparison, Importance, KmCurve, LogRank, OperatingPoint,
    RocCurve,
};
use crate::features::feature_names;
use crate::fusion::SourceView;
use crate::scoring::{BandThresholds, RiskBand, ScoreSource};
use crate::seed::{derive, streams};

/// Ordinal-label cutoffs: at least low-flow oxygen, at least high-flow/NIV,
/// and mechanical ventilation, each or death.
pub const CUTOFFS: [(f64, &str); 3] = [
    (0.25, "lfo_or_worse_or_death"),
    (0.5, "hfo_niv_or_worse_or_death"),
    (0.75, "mv_or_death"),
];

const MV_OR_DEATH: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucEstimate {
    pub n: usize,
    pub n_positive: usize,
    pub auc: f64,
    pub ci: ConfidenceInterval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutoffResult {
    pub horizon: Horizon,
    pub cutoff: f64,
    pub outcome: String,
    /// CO-RISK score (fusion network when imaged, forest otherwise).
    pub combined: Option<AucEstimate>,
    /// Fusion network alone on the imaged subset.
    pub fusion_model: Option<AucEstimate>,
    /// Forest alone on every test record.
    pub forest: Option<AucEstimate>,
    pub curve: Option<RocCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutcome {
    pub outcome: String,
    pub corisk: Option<AucEstimate>,
    pub baseline: Option<AucEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineComparison {
    pub baseline: String,
    pub n_test: usize,
    pub n_computable: usize,
    pub computable_rate: f64,
    pub outcomes: Vec<ComparisonOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalComparison {
    pub mews: BaselineComparison,
    pub curb65: BaselineComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicianComparison {
    /// Admitted test patients (floor or ICU); discharges are excluded.
    pub n: usize,
    pub n_mv72: usize,
    pub physician: OperatingPoint,
    pub physician_sensitivity_ci: ConfidenceInterval,
    pub physician_specificity_ci: ConfidenceInterval,
    pub corisk_auc: AucEstimate,
    /// Curve vertex nearest the physician point.
    pub closest: OperatingPoint,
    /// First vertex reaching the physician's sensitivity.
    pub matched_sensitivity: Option<OperatingPoint>,
    pub curve: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSurvival {
    pub group: String,
    pub n: usize,
    pub deaths: usize,
    pub death_rate: f64,
    pub curve: KmCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub horizon_days: f64,
    pub thresholds: BandThresholds,
    pub by_band: Vec<GroupSurvival>,
    pub band_logrank: Option<LogRank>,
    pub by_disposition: Vec<GroupSurvival>,
    pub disposition_logrank: Option<LogRank>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boxplot {
    pub score: String,
    pub comparison: String,
    pub group_a: String,
    pub group_b: String,
    pub stats: GroupComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: String,
    pub n: usize,
    pub results: Vec<CutoffResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalReport {
    pub n_train: usize,
    pub n_validation: usize,
    pub thresholds: BandThresholds,
    pub windows: Vec<WindowResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub split_kind: String,
    pub n_included: usize,
    pub exclusions: BTreeMap<String, usize>,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub n_test_images: usize,
    pub thresholds: BandThresholds,
    pub fusion_best_epoch: usize,
    pub bootstrap_resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub discrimination: Vec<CutoffResult>,
    pub clinical_comparison: ClinicalComparison,
    pub physician: Option<PhysicianComparison>,
    pub survival: SurvivalReport,
    pub boxplots: Vec<Boxplot>,
    pub importance: Vec<Importance>,
    pub temporal: Option<TemporalReport>,
    /// Sections or estimates that could not be computed, with the reason.
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String, PipelineError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.json` plus ROC and K-M plots into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut files = vec![("report.json".to_string(), self.to_json()?)];
        for r in &self.discrimination {
            if let Some(curve) = &r.curve {
                let title = format!("{} {}", r.horizon.name(), r.outcome);
                files.push((format!("roc_{}_{}.svg", r.horizon.name(), r.outcome), roc_svg(&title, &[("CO-RISK", curve)])));
            }
        }
        let curves: Vec<(&str, &KmCurve)> =
            self.survival.by_band.iter().map(|g| (g.group.as_str(), &g.curve)).collect();
        files.push(("km_bands.svg".into(), km_svg("30-day survival by risk band", &curves)));
        let curves: Vec<(&str, &KmCurve)> =
            self.survival.by_disposition.iter().map(|g| (g.group.as_str(), &g.curve)).collect();
        files.push(("km_dispositions.svg".into(), km_svg("30-day survival by disposition", &curves)));
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(io(&path))?;
        }
        Ok(())
    }
}

/// A scored evaluation set: per-record results aligned with cohort positions.
struct Scored {
    positions: Vec<usize>,
    results: Vec<ScoreResult>,
    completed: Vec<Vec<f64>>,
    image_features: Vec<Option<Vec<f64>>>,
}

fn score_positions(scorer: &Scorer<'_>, prepared: &PreparedCohort, positions: Vec<usize>, cfg: &PipelineConfig) -> Result<Scored, PipelineError> {
    let cohort = &prepared.cohort;
    let fusion = &scorer.bundle().fusion;
    let out = cfg.execution().try_map_indexed(positions.len(), |k| {
        let r = &cohort.records[positions[k]];
        let c = scorer.components(r, cohort.image_for(r), SourceView::Synthetic)?;
        let features = c.image.as_ref().map(|img| fusion.image_features(img)).transpose()?;
        let fusion_raw = match &features {
            Some(f) => {
                let (a, b) = fusion.predict_from_features(&[&c.completed], &[f])?[0];
                Some([a, b])
            }
            None => None,
        };
        let completed = c.completed.clone();
        Ok::<_, PipelineError>((scorer.finish(r, c, fusion_raw)?, completed, features))
    })?;
    let mut s = Scored {
        positions,
        results: Vec::with_capacity(out.len()),
        completed: Vec::with_capacity(out.len()),
        image_features: Vec::with_capacity(out.len()),
    };
    for (r, c, f) in out {
        s.results.push(r);
        s.completed.push(c);
        s.image_features.push(f);
    }
    Ok(s)
}

struct Ctx {
    boot: BootstrapConfig,
    seed: u64,
    counter: std::cell::Cell<u64>,
    notes: std::cell::RefCell<Vec<String>>,
}

impl Ctx {
    fn new(boot: BootstrapConfig, seed: u64) -> Self {
        Ctx {
            boot,
            seed,
            counter: std::cell::Cell::new(0),
            notes: Default::default(),
        }
    }

    /// Each bootstrap in the report gets the next stream of the bootstrap seed.
    fn next_seed(&self) -> u64 {
        let k = self.counter.get();
        self.counter.set(k + 1);
        derive(self.seed, k)
    }

    fn note(&self, what: &str, e: impl std::fmt::Display) {
        self.notes.borrow_mut().push(format!("{what}: {e}"));
    }

    fn auc(&self, what: &str, scores: &[f64], labels: &[bool]) -> Option<AucEstimate> {
        let seed = self.next_seed();
        let run = || -> Result<AucEstimate, EvalError> {
            let point = auc(scores, labels)?;
            let ci = bootstrap_ci(scores, labels, auc, &self.boot, seed)?;
            Ok(AucEstimate {
                n: scores.len(),
                n_positive: labels.iter().filter(|&&l| l).count(),
                auc: point,
                ci,
            })
        };
        run().map_err(|e| self.note(what, e)).ok()
    }
}

fn label(prepared: &PreparedCohort, pos: usize, h: Horizon) -> f64 {
    derive_outcome_label(&prepared.cohort.outcomes[pos], h)
}

fn score_of(r: &ScoreResult, h: Horizon) -> f64 {
    match h {
        Horizon::H24 => r.corisk.score_24h,
        Horizon::H72 => r.corisk.score_72h,
    }
}

fn cutoff_results(ctx: &Ctx, prepared: &PreparedCohort, s: &Scored, with_curve: bool, scope: &str) -> Vec<CutoffResult> {
    let mut out = Vec::new();
    for h in [Horizon::H24, Horizon::H72] {
        let hi = if h == Horizon::H24 { 0 } else { 1 };
        for (cutoff, name) in CUTOFFS {
            let labels: Vec<bool> = s.positions.iter().map(|&p| label(prepared, p, h) >= cutoff).collect();
            let what = format!("{scope} {} {name}", h.name());
            let combined: Vec<f64> = s.results.iter().map(|r| score_of(r, h)).collect();
            let forest: Vec<f64> = s.results.iter().map(|r| r.forest_raw[hi]).collect();
            let (fs, fl): (Vec<f64>, Vec<bool>) = s
                .results
                .iter()
                .zip(&labels)
                .filter_map(|(r, &l)| r.fusion_raw.map(|f| (f[hi], l)))
                .unzip();
            let curve = if with_curve {
                roc(&combined, &labels).map_err(|e| ctx.note(&format!("{what} curve"), e)).ok()
            } else {
                None
            };
            out.push(CutoffResult {
                horizon: h,
                cutoff,
                outcome: name.to_string(),
                combined: ctx.auc(&format!("{what} combined"), &combined, &labels),
                fusion_model: ctx.auc(&format!("{what} fusion model"), &fs, &fl),
                forest: ctx.auc(&format!("{what} forest"), &forest, &labels),
                curve,
            });
        }
    }
    out
}

fn died_30d(prepared: &PreparedCohort, pos: usize, days: f64) -> bool {
    let r = &prepared.cohort.records[pos];
    prepared.cohort.outcomes[pos].died_within(r.visit_time, days)
}

fn baseline_comparison(
    ctx: &Ctx,
    prepared: &PreparedCohort,
    s: &Scored,
    name: &str,
    value: impl Fn(&ScoreResult) -> Option<u8>,
    second: (&str, &dyn Fn(usize) -> bool),
) -> BaselineComparison {
    let keep: Vec<usize> = (0..s.results.len()).filter(|&k| value(&s.results[k]).is_some()).collect();
    let corisk: Vec<f64> = keep.iter().map(|&k| s.results[k].corisk.score_72h).collect();
    let base: Vec<f64> = keep.iter().map(|&k| value(&s.results[k]).unwrap_or(0) as f64).collect();
    let mv: &dyn Fn(usize) -> bool = &|p| label(prepared, p, Horizon::H72) >= MV_OR_DEATH;
    let outcomes = [("mv_or_death_72h", mv), second]
        .into_iter()
        .map(|(outcome, f)| {
            let labels: Vec<bool> = keep.iter().map(|&k| f(s.positions[k])).collect();
            ComparisonOutcome {
                outcome: outcome.to_string(),
                corisk: ctx.auc(&format!("{name} subset {outcome} CO-RISK"), &corisk, &labels),
                baseline: ctx.auc(&format!("{name} subset {outcome} {name}"), &base, &labels),
            }
        })
        .collect();
    BaselineComparison {
        baseline: name.to_string(),
        n_test: s.results.len(),
        n_computable: keep.len(),
        computable_rate: keep.len() as f64 / s.results.len().max(1) as f64,
        outcomes,
    }
}

fn physician(ctx: &Ctx, prepared: &PreparedCohort, s: &Scored) -> Result<PhysicianComparison, EvalError> {
    let admitted: Vec<usize> = (0..s.results.len())
        .filter(|&k| prepared.cohort.outcomes[s.positions[k]].disposition != Disposition::Discharge)
        .collect();
    let disp: Vec<Disposition> = admitted.iter().map(|&k| prepared.cohort.outcomes[s.positions[k]].disposition).collect();
    let mv: Vec<bool> = admitted
        .iter()
        .map(|&k| prepared.cohort.outcomes[s.positions[k]].max_therapy_72h == OxygenTherapyLevel::Mechanical)
        .collect();
    let scores: Vec<f64> = admitted.iter().map(|&k| s.results[k].corisk.score_72h).collect();
    let point = physician_operating_point(&disp, &mv)?;
    let resampled = |idx: &[usize]| {
        let d: Vec<Disposition> = idx.iter().map(|&i| disp[i]).collect();
        let m: Vec<bool> = idx.iter().map(|&i| mv[i]).collect();
        physician_operating_point(&d, &m)
    };
    let (sens_ci, _) = bootstrap_statistic(disp.len(), |idx| Ok(resampled(idx)?.sensitivity), &ctx.boot, ctx.next_seed())?;
    let (spec_ci, _) = bootstrap_statistic(disp.len(), |idx| Ok(resampled(idx)?.specificity), &ctx.boot, ctx.next_seed())?;
    let curve = roc(&scores, &mv)?;
    let (_, closest) = closest_roc_threshold(&curve, &point);
    let matched = operating_point_at_sensitivity(&curve, point.sensitivity)
        .map_err(|e| ctx.note("physician matched sensitivity", e))
        .ok();
    let corisk_auc = ctx
        .auc("physician subset CO-RISK", &scores, &mv)
        .ok_or(EvalError::SingleClass)?;
    Ok(PhysicianComparison {
        n: disp.len(),
        n_mv72: mv.iter().filter(|&&m| m).count(),
        physician: point,
        physician_sensitivity_ci: sens_ci,
        physician_specificity_ci: spec_ci,
        corisk_auc,
        closest,
        matched_sensitivity: matched,
        curve,
    })
}

fn survival_groups(
    ctx: &Ctx,
    prepared: &PreparedCohort,
    s: &Scored,
    horizon: f64,
    groups: &[(String, Vec<usize>)],
    what: &str,
) -> (Vec<GroupSurvival>, Option<LogRank>) {
    let mut out = Vec::new();
    let mut tests = Vec::new();
    for (name, members) in groups {
        if members.is_empty() {
            ctx.note(what, format!("group {name} is empty"));
            continue;
        }
        let (mut times, mut events) = (Vec::new(), Vec::new());
        for &k in members {
            let pos = s.positions[k];
            let (r, o) = (&prepared.cohort.records[pos], &prepared.cohort.outcomes[pos]);
            match o.days_to_death(r.visit_time) {
                Some(d) => {
                    times.push(d.max(0.0));
                    events.push(true);
                }
                None => {
                    times.push(o.followup_days.max(0.0));
                    events.push(false);
                }
            }
        }
        let deaths = times.iter().zip(&events).filter(|(t, e)| **e && **t <= horizon).count();
        match km_estimate(&times, &events, horizon) {
            Ok(curve) => out.push(GroupSurvival {
                group: name.clone(),
                n: members.len(),
                deaths,
                death_rate: deaths as f64 / members.len() as f64,
                curve,
            }),
            Err(e) => ctx.note(&format!("{what} {name}"), e),
        }
        // log-rank on the same horizon: later deaths are censored there
        let t: Vec<f64> = times.iter().map(|&t| t.min(horizon)).collect();
        let e: Vec<bool> = times.iter().zip(&events).map(|(&t, &e)| e && t <= horizon).collect();
        tests.push((t, e));
    }
    let lr = logrank_test(&tests).map_err(|e| ctx.note(&format!("{what} log-rank"), e)).ok();
    (out, lr)
}

fn boxplots(ctx: &Ctx, prepared: &PreparedCohort, s: &Scored, horizon: f64) -> Vec<Boxplot> {
    type Split<'a> = (&'a str, &'a str, &'a str, Box<dyn Fn(usize) -> Option<bool> + 'a>);
    let outcome = |p: usize| &prepared.cohort.outcomes[p];
    let comparisons: Vec<Split<'_>> = vec![
        (
            "admitted_vs_discharged",
            "admitted",
            "discharged",
            Box::new(|p| Some(outcome(p).disposition != Disposition::Discharge)),
        ),
        (
            "icu_vs_floor",
            "icu",
            "floor",
            Box::new(|p| match outcome(p).disposition {
                Disposition::Icu => Some(true),
                Disposition::Floor => Some(false),
                Disposition::Discharge => None,
            }),
        ),
        (
            "death_vs_survival_30d",
            "died",
            "survived",
            Box::new(|p| Some(died_30d(prepared, p, horizon))),
        ),
        (
            "mv_hfo_vs_lfo_ra_72h",
            "mv_or_hfo",
            "lfo_or_ra",
            Box::new(|p| Some(outcome(p).max_therapy_72h >= OxygenTherapyLevel::HighFlowNiv)),
        ),
    ];
    let scores: [(&str, Box<dyn Fn(&ScoreResult) -> Option<f64>>); 3] = [
        ("corisk_72h", Box::new(|r| Some(r.corisk.score_72h))),
        ("curb65", Box::new(|r| r.curb65.value().map(f64::from))),
        ("mews", Box::new(|r| r.mews.value().map(f64::from))),
    ];
    let mut out = Vec::new();
    for (score, get) in &scores {
        for (comparison, a_name, b_name, split) in &comparisons {
            let (mut a, mut b) = (Vec::new(), Vec::new());
            for (k, r) in s.results.iter().enumerate() {
                if let (Some(v), Some(side)) = (get(r), split(s.positions[k])) {
                    if side {
                        a.push(v)
                    } else {
                        b.push(v)
                    }
                }
            }
            match group_stats(&a, &b) {
                Ok(stats) => out.push(Boxplot {
                    score: score.to_string(),
                    comparison: comparison.to_string(),
                    group_a: a_name.to_string(),
                    group_b: b_name.to_string(),
                    stats,
                }),
                Err(e) => ctx.note(&format!("boxplot {score} {comparison}"), e),
            }
        }
    }
    out
}

fn importance(bundle: &ModelBundle, prepared: &PreparedCohort, s: &Scored, cfg: &PipelineConfig) -> Vec<Importance> {
    let y: Vec<f64> = s.positions.iter().map(|&p| label(prepared, p, Horizon::H72)).collect();
    let imaged: Vec<usize> = (0..s.results.len()).filter(|&k| s.image_features[k].is_some()).collect();
    let feats: Vec<&[f64]> = imaged.iter().filter_map(|&k| s.image_features[k].as_deref()).collect();
    let predict = |rows: &[Vec<f64>]| -> Vec<f64> {
        let mut out: Vec<f64> = rows
            .iter()
            .map(|r| bundle.forest_72h.predict_unit(r).expect("rows share the bundle schema"))
            .collect();
        let img_rows: Vec<&[f64]> = imaged.iter().map(|&k| rows[k].as_slice()).collect();
        let fused = bundle
            .fusion
            .predict_from_features(&img_rows, &feats)
            .expect("permuted rows keep valid categories");
        for (&k, p) in imaged.iter().zip(fused) {
            out[k] = p.1;
        }
        out
    };
    permutation_importance(
        &feature_names(),
        &s.completed,
        &y,
        predict,
        mean_squared_error,
        cfg.eval.importance_repeats,
        derive(cfg.seed, streams::IMPORTANCE),
        cfg.execution(),
    )
}

/// Scores `ids` with `bundle` and computes per-horizon, per-cutoff AUCs.
pub fn evaluate_split(
    bundle: &ModelBundle,
    prepared: &PreparedCohort,
    ids: &[String],
    cfg: &PipelineConfig,
    bootstrap_seed: u64,
) -> Result<(Vec<CutoffResult>, Vec<String>), PipelineError> {
    let scorer = Scorer::new(bundle)?;
    let s = score_positions(&scorer, prepared, prepared.positions(ids)?, cfg)?;
    let ctx = Ctx::new(cfg.eval.bootstrap, bootstrap_seed);
    let r = cutoff_results(&ctx, prepared, &s, false, "split");
    Ok((r, ctx.notes.into_inner()))
}

fn temporal(cfg: &PipelineConfig, prepared: &PreparedCohort) -> Result<(TemporalReport, Vec<String>), PipelineError> {
    let master = derive(cfg.seed, streams::TEMPORAL);
    let split = split_cohort(&prepared.cohort.records, &cfg.eval.temporal_split, derive(master, streams::SPLIT))?;
    let bundle = fit_models(prepared, &split, cfg, master)?;
    let mut windows = Vec::new();
    let mut all_notes = Vec::new();
    for (w, (name, ids)) in split.test_windows.iter().enumerate() {
        let (results, notes) = evaluate_split(&bundle, prepared, ids, cfg, derive(derive(master, streams::BOOTSTRAP), w as u64))?;
        all_notes.extend(notes.into_iter().map(|n| format!("temporal window {name}: {n}")));
        windows.push(WindowResult {
            window: name.clone(),
            n: ids.len(),
            results,
        });
    }
    let report = TemporalReport {
        n_train: split.train_ids.len(),
        n_validation: split.validation_ids.len(),
        thresholds: bundle.thresholds,
        windows,
    };
    Ok((report, all_notes))
}

/// Builds the full report for the test partition of `split`.
pub fn evaluate(
    cfg: &PipelineConfig,
    bundle: &ModelBundle,
    prepared: &PreparedCohort,
    split: &CohortSplit,
) -> Result<EvalReport, PipelineError> {
    let scorer = Scorer::new(bundle)?;
    let s = score_positions(&scorer, prepared, prepared.positions(&split.test_ids)?, cfg)?;
    if s.results.is_empty() {
        return Err(PipelineError::Data("test split is empty".into()));
    }
    let ctx = Ctx::new(cfg.eval.bootstrap, derive(cfg.seed, streams::BOOTSTRAP));
    let horizon = cfg.eval.km_horizon_days;

    let discrimination = cutoff_results(&ctx, prepared, &s, true, "test");

    let death: &dyn Fn(usize) -> bool = &|p| died_30d(prepared, p, horizon);
    let icu_or_death: &dyn Fn(usize) -> bool =
        &|p| prepared.cohort.outcomes[p].disposition == Disposition::Icu || died_30d(prepared, p, horizon);
    let clinical_comparison = ClinicalComparison {
        mews: baseline_comparison(&ctx, prepared, &s, "mews", |r| r.mews.value(), ("icu_or_death_30d", icu_or_death)),
        curb65: baseline_comparison(&ctx, prepared, &s, "curb65", |r| r.curb65.value(), ("death_30d", death)),
    };

    let physician = physician(&ctx, prepared, &s).map_err(|e| ctx.note("physician comparison", e)).ok();

    let thresholds = scorer.thresholds();
    let bands: Vec<(String, Vec<usize>)> = RiskBand::ALL
        .iter()
        .map(|&b| {
            let members = (0..s.results.len()).filter(|&k| s.results[k].corisk.band_72h == b).collect();
            (b.name().to_string(), members)
        })
        .collect();
    let dispositions: Vec<(String, Vec<usize>)> = Disposition::ALL
        .iter()
        .map(|&d| {
            let members = (0..s.results.len())
                .filter(|&k| prepared.cohort.outcomes[s.positions[k]].disposition == d)
                .collect();
            (d.name().to_string(), members)
        })
        .collect();
    let (by_band, band_logrank) = survival_groups(&ctx, prepared, &s, horizon, &bands, "survival by band");
    let (by_disposition, disposition_logrank) =
        survival_groups(&ctx, prepared, &s, horizon, &dispositions, "survival by disposition");

    let boxplots = boxplots(&ctx, prepared, &s, horizon);
    let importance = importance(bundle, prepared, &s, cfg);
    let temporal = if cfg.eval.temporal {
        match temporal(cfg, prepared) {
            Ok((t, notes)) => {
                ctx.notes.borrow_mut().extend(notes);
                Some(t)
            }
            Err(e) => {
                ctx.note("temporal split", e);
                None
            }
        }
    } else {
        None
    };

    let n_test_images = s.results.iter().filter(|r| r.corisk.source == ScoreSource::FusionModel).count();
    Ok(EvalReport {
        meta: ReportMeta {
            seed: cfg.seed,
            split_kind: format!("{:?}", split.split_kind),
            n_included: prepared.cohort.len(),
            exclusions: prepared.exclusion_counts(),
            n_train: split.train_ids.len(),
            n_validation: split.validation_ids.len(),
            n_test: s.results.len(),
            n_test_images,
            thresholds,
            fusion_best_epoch: bundle.metadata.fusion_best_epoch,
            bootstrap_resamples: cfg.eval.bootstrap.n_boot,
        },
        discrimination,
        clinical_comparison,
        physician,
        survival: SurvivalReport {
            horizon_days: horizon,
            thresholds,
            by_band,
            band_logrank,
            by_disposition,
            disposition_logrank,
        },
        boxplots,
        importance,
        temporal,
        notes: ctx.notes.into_inner(),
    })
}
