#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

pub const CONFIG: &str = r#"
seed = 7

[paths]
cohort_dir = "cohort"
bundle = "model.bundle"
report_dir = "report"

[generator]
n = 700

[impute]
n_trees = 8
max_iters = 2

[forest]
n_trees = 30

[fusion]
max_epochs = 3

[eval]
importance_repeats = 1

[eval.bootstrap]
n_boot = 40
"#;

pub fn corisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corisk")).args(args).output().expect("run corisk")
}

pub fn ok(args: &[&str]) -> Output {
    let out = corisk(args);
    assert!(
        out.status.success(),
        "corisk {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A generated cohort and a bundle trained on it through the binary.
pub struct Fixture {
    _dir: tempfile::TempDir,
    pub root: PathBuf,
    pub config: PathBuf,
    pub cohort: PathBuf,
    pub bundle: PathBuf,
}

pub fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let config = root.join("corisk.toml");
        std::fs::write(&config, CONFIG).unwrap();
        let cohort = root.join("cohort");
        ok(&["cohort", "gen", "--config", arg(&config), "--out", arg(&cohort)]);
        ok(&["pipeline", "train", "--config", arg(&config)]);
        Fixture {
            bundle: root.join("model.bundle"),
            _dir: dir,
            root,
            config,
            cohort,
        }
    })
}
