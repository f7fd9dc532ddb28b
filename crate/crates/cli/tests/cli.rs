//! The `corisk` binary: commands, determinism and exit codes.

mod common;

use common::{arg, corisk, fixture, ok};
use corisk::pipeline::ScoreResult;
use corisk::scoring::ScoreSource;
use corisk_cli::exit;

fn code(out: &std::process::Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn training_twice_writes_byte_identical_bundles() {
    let f = fixture();
    let again = f.root.join("again.bundle");
    ok(&["pipeline", "train", "--config", arg(&f.config), "--bundle", arg(&again), "--sequential"]);
    assert_eq!(std::fs::read(&f.bundle).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn cohort_gen_is_deterministic() {
    let f = fixture();
    let other = f.root.join("cohort2");
    ok(&["cohort", "gen", "--config", arg(&f.config), "--out", arg(&other)]);
    for file in ["cohort.csv", "outcomes.csv"] {
        assert_eq!(std::fs::read(f.cohort.join(file)).unwrap(), std::fs::read(other.join(file)).unwrap());
    }
}

fn score_lines(out: &std::process::Output) -> Vec<ScoreResult> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn score_file_routes_rows_without_images_to_the_forest() {
    let f = fixture();
    let records = corisk::cohort::io::read_records(&f.cohort.join("cohort.csv")).unwrap();
    let stripped: Vec<_> = records
        .iter()
        .take(40)
        .cloned()
        .map(|mut r| {
            r.image = None;
            r
        })
        .collect();
    let path = f.root.join("no_images.csv");
    corisk::cohort::io::write_records(&path, &stripped).unwrap();
    let out = ok(&["score", "file", "--bundle", arg(&f.bundle), "--records", arg(&path)]);
    let results = score_lines(&out);
    assert_eq!(results.len(), 40);
    for (r, s) in stripped.iter().zip(&results) {
        assert_eq!(s.patient_id, r.patient_id);
        assert_eq!(s.corisk.source, ScoreSource::Forest);
        assert!((0.0..=100.0).contains(&s.corisk.score_24h) && (0.0..=100.0).contains(&s.corisk.score_72h));
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"source\":\"forest\""));
}

#[test]
fn score_file_uses_images_and_threshold_override() {
    let f = fixture();
    let out_path = f.root.join("scores.jsonl");
    let records = f.cohort.join("cohort.csv");
    ok(&["score", "file", "-b", arg(&f.bundle), "--records", arg(&records), "-o", arg(&out_path), "--thresholds", "1,2"]);
    let text = std::fs::read_to_string(&out_path).unwrap();
    let results: Vec<ScoreResult> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(results.iter().any(|s| s.corisk.source == ScoreSource::FusionModel));
    assert!(results.iter().any(|s| s.corisk.source == ScoreSource::Forest));
    assert!(results.iter().all(|s| s.thresholds.t_low_med == 1.0 && s.thresholds.t_med_high == 2.0));
}

#[test]
fn pipeline_eval_writes_every_report_section() {
    let f = fixture();
    let report = f.root.join("eval_report");
    ok(&["pipeline", "eval", "--config", arg(&f.config), "--report-dir", arg(&report)]);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.join("report.json")).unwrap()).unwrap();
    for key in ["meta", "discrimination", "clinical_comparison", "physician", "survival", "boxplots", "importance", "temporal"] {
        let v = json.get(key).unwrap_or_else(|| panic!("report.json lacks {key}"));
        assert!(!v.is_null(), "{key} is null");
        if let Some(a) = v.as_array() {
            assert!(!a.is_empty(), "{key} is empty");
        }
    }
    assert_eq!(json["temporal"]["windows"].as_array().unwrap().len(), 3);
    for file in ["km_bands.svg", "km_dispositions.svg"] {
        assert!(report.join(file).exists(), "{file} missing");
    }
    assert!(std::fs::read_dir(&report).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("roc_")));
}

#[test]
fn malformed_config_exits_with_the_config_code() {
    let f = fixture();
    let bad = f.root.join("bad.toml");
    std::fs::write(&bad, "seed = \"seven\"\n").unwrap();
    let out = corisk(&["pipeline", "train", "--config", arg(&bad)]);
    assert_eq!(code(&out), exit::CONFIG as i32);
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration"));

    std::fs::write(&bad, "[forest]\nn_trees = 0\n").unwrap();
    assert_eq!(code(&corisk(&["pipeline", "train", "--config", arg(&bad)])), exit::CONFIG as i32);
    std::fs::write(&bad, "[forst]\nn_trees = 3\n").unwrap();
    assert_eq!(code(&corisk(&["cohort", "gen", "--config", arg(&bad), "--out", "x"])), exit::CONFIG as i32);
    let missing = f.root.join("nope.toml");
    assert_eq!(code(&corisk(&["pipeline", "eval", "--config", arg(&missing)])), exit::CONFIG as i32);
    assert_eq!(code(&corisk(&["pipeline", "launch"])), exit::CONFIG as i32);
}

#[test]
fn eval_refuses_a_bundle_from_another_seed() {
    let f = fixture();
    let out = corisk(&["pipeline", "eval", "--config", arg(&f.config), "--seed", "8", "--report-dir", arg(&f.root.join("r8"))]);
    assert_eq!(code(&out), exit::CONFIG as i32, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_or_corrupt_bundle_exits_with_the_bundle_code() {
    let f = fixture();
    let records = f.cohort.join("cohort.csv");
    let missing = f.root.join("absent.bundle");
    let out = corisk(&["score", "file", "--bundle", arg(&missing), "--records", arg(&records)]);
    assert_eq!(code(&out), exit::BUNDLE as i32);
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.bundle"));
    assert_eq!(code(&corisk(&["serve", "--bundle", arg(&missing)])), exit::BUNDLE as i32);

    let corrupt = f.root.join("corrupt.bundle");
    let mut bytes = std::fs::read(&f.bundle).unwrap();
    bytes.truncate(bytes.len() / 3);
    std::fs::write(&corrupt, bytes).unwrap();
    let out = corisk(&["pipeline", "eval", "--config", arg(&f.config), "--bundle", arg(&corrupt)]);
    assert_eq!(code(&out), exit::BUNDLE as i32);
}

#[test]
fn input_schema_drift_exits_with_the_drift_code() {
    let f = fixture();
    let text = std::fs::read_to_string(f.cohort.join("cohort.csv")).unwrap();
    let drifted = text.replacen("spo2", "oxygen_saturation", 1);
    let path = f.root.join("drifted.csv");
    std::fs::write(&path, drifted).unwrap();
    let out = corisk(&["score", "file", "--bundle", arg(&f.bundle), "--records", arg(&path)]);
    assert_eq!(code(&out), exit::SCHEMA_DRIFT as i32);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("oxygen_saturation") && err.contains("spo2"), "{err}");
}

#[test]
fn bundle_schema_drift_exits_with_the_drift_code() {
    let f = fixture();
    let mut bundle = corisk::pipeline::ModelBundle::load(&f.bundle).unwrap();
    bundle.feature_names.swap(1, 2);
    let path = f.root.join("drifted.bundle");
    bundle.save(&path).unwrap();
    let records = f.cohort.join("cohort.csv");
    let out = corisk(&["score", "file", "--bundle", arg(&path), "--records", arg(&records)]);
    assert_eq!(code(&out), exit::SCHEMA_DRIFT as i32);
    assert_eq!(code(&corisk(&["serve", "--bundle", arg(&path)])), exit::SCHEMA_DRIFT as i32);
}

#[test]
fn every_command_documents_its_flags() {
    let cases: [(&[&str], &[&str]); 6] = [
        (&["--help"], &["cohort", "pipeline", "score", "serve", "Exit status"]),
        (&["cohort", "gen", "--help"], &["--config", "--seed", "--sequential", "--out", "--n"]),
        (&["pipeline", "train", "--help"], &["--config", "--seed", "--sequential", "--bundle"]),
        (&["pipeline", "eval", "--help"], &["--config", "--bundle", "--report-dir"]),
        (&["score", "file", "--help"], &["--bundle", "--records", "--images", "--out", "--view", "--thresholds"]),
        (&["serve", "--help"], &["--bundle", "--bind", "--thresholds", "--images-root"]),
    ];
    for (args, flags) in cases {
        let out = ok(args);
        let help = String::from_utf8_lossy(&out.stdout);
        for flag in flags {
            assert!(help.contains(flag), "{args:?} help lacks {flag}");
        }
    }
}
