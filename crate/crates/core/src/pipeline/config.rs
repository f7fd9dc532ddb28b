use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::cohort::{GeneratorConfig, SplitSpec};
use crate::evaluation::BootstrapConfig;
use crate::forest::ForestConfig;
use crate::fusion::TrainConfig;
use crate::imputation::ImputeConfig;
use crate::Execution;

/// Input and output locations. Relative paths are resolved against the
/// directory of the config file. With no cohort inputs the synthetic
/// generator is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    /// Directory holding `cohort.csv`, `outcomes.csv` and `images/`.
    pub cohort_dir: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub images_dir: Option<PathBuf>,
    pub bundle: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            cohort_dir: None,
            records: None,
            outcomes: None,
            images_dir: None,
            bundle: PathBuf::from("corisk.bundle"),
            report_dir: PathBuf::from("report"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub bootstrap: BootstrapConfig,
    pub importance_repeats: usize,
    pub km_horizon_days: f64,
    /// Also train and evaluate under `temporal_split`.
    pub temporal: bool,
    pub temporal_split: SplitSpec,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            bootstrap: BootstrapConfig::default(),
            importance_repeats: 5,
            km_horizon_days: 30.0,
            temporal: true,
            temporal_split: SplitSpec::default_periods(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Spread data-parallel loops over threads. Results do not depend on it.
    pub parallel: bool,
    pub paths: PathsConfig,
    pub generator: GeneratorConfig,
    pub split: SplitSpec,
    pub impute: ImputeConfig,
    pub fusion: TrainConfig,
    pub forest: ForestConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 20200301,
            parallel: true,
            paths: PathsConfig::default(),
            generator: GeneratorConfig::default(),
            split: SplitSpec::default_sites(),
            impute: ImputeConfig::default(),
            fusion: TrainConfig::default(),
            forest: ForestConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.apply_execution();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a TOML file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [&mut paths.cohort_dir, &mut paths.records, &mut paths.outcomes, &mut paths.images_dir]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut paths.bundle);
        fix(&mut paths.report_dir);
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    /// Pushes the `parallel` switch into every sub-config.
    pub fn apply_execution(&mut self) {
        let e = self.execution();
        self.generator.execution = e;
        self.impute.execution = e;
        self.forest.execution = e;
        self.eval.bootstrap.execution = e;
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_string()));
        self.generator.validate()?;
        self.split.validate()?;
        if self.eval.temporal {
            self.eval.temporal_split.validate()?;
        }
        self.fusion.validate()?;
        if self.forest.n_trees == 0 || self.forest.min_leaf == 0 {
            return bad("forest.n_trees and forest.min_leaf must be positive");
        }
        if self.impute.n_trees == 0 || self.impute.min_leaf == 0 || self.impute.transform_passes == 0 {
            return bad("impute.n_trees, impute.min_leaf and impute.transform_passes must be positive");
        }
        if self.eval.bootstrap.n_boot == 0 || !(0.0 < self.eval.bootstrap.level && self.eval.bootstrap.level < 1.0) {
            return bad("eval.bootstrap needs n_boot > 0 and 0 < level < 1");
        }
        if !(self.eval.km_horizon_days > 0.0) {
            return bad("eval.km_horizon_days must be positive");
        }
        let p = &self.paths;
        if p.cohort_dir.is_some() && (p.records.is_some() || p.outcomes.is_some()) {
            return bad("set either paths.cohort_dir or paths.records/outcomes, not both");
        }
        if p.records.is_some() != p.outcomes.is_some() {
            return bad("paths.records and paths.outcomes go together");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = PipelineConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
    }

    #[test]
    fn partial_override() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            seed = 7
            parallel = false
            [generator]
            n = 300
            [split]
            kind = "by_site"
            train_sites = [1, 2, 3]
            test_sites = [4, 5]
            [fusion]
            max_epochs = 2
            [paths]
            bundle = "out/model.bin"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.generator.n, 300);
        assert_eq!(cfg.fusion.max_epochs, 2);
        assert_eq!(cfg.fusion.batch_size, 32);
        assert_eq!(cfg.forest.execution, Execution::Sequential);
        let mut cfg = cfg;
        cfg.resolve_paths(Path::new("/base"));
        assert_eq!(cfg.paths.bundle, PathBuf::from("/base/out/model.bin"));
    }

    #[test]
    fn malformed_configs() {
        for text in [
            "seed = \"x\"",
            "unknown_key = 1",
            "[split]\nkind = \"by_site\"\ntrain_sites = [1]\ntest_sites = [1]",
            "[fusion]\nbatch_size = 0",
            "[paths]\nrecords = \"a.csv\"",
        ] {
            assert!(
                matches!(PipelineConfig::from_toml_str(text), Err(PipelineError::Config(_)) | Err(PipelineError::Cohort(_)) | Err(PipelineError::Fusion(_))),
                "{text}"
            );
        }
    }
}
