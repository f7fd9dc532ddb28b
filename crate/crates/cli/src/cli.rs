//! Command-line arguments and the command implementations.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use corisk::cohort::io::{read_images, read_records, write_cohort_dir, IMAGES_DIR};
use corisk::cohort::{generate_synthetic_cohort, split_cohort};
use corisk::fusion::SourceView;
use corisk::pipeline::{
    evaluate, load_cohort, prepare_cohort, train_pipeline, ModelBundle, PipelineConfig, PipelineError, Scorer,
};
use corisk::scoring::BandThresholds;
use corisk::seed::{derive, streams};

use crate::error::CliError;
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "corisk", version, about = "Severe-outcome risk scoring pipeline and scoring service")]
#[command(after_help = "Exit status: 0 success, 1 runtime failure, 2 bad configuration or arguments, \
3 missing or unreadable bundle, 4 schema drift between bundle and input.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic cohort generation.
    #[command(subcommand)]
    Cohort(CohortCommand),
    /// Training and evaluation.
    #[command(subcommand)]
    Pipeline(PipelineCommand),
    /// Batch scoring.
    #[command(subcommand)]
    Score(ScoreCommand),
    /// Serve a bundle over HTTP: POST /score, GET /bundle, GET /health.
    Serve(ServeArgs),
}

#[derive(Debug, Subcommand)]
pub enum CohortCommand {
    /// Generate a synthetic cohort and write cohort.csv, outcomes.csv and images/.
    Gen(GenArgs),
}

#[derive(Debug, Subcommand)]
pub enum PipelineCommand {
    /// Impute, train the fusion network and forests, fit bands and save the bundle.
    Train(TrainArgs),
    /// Evaluate a trained bundle on the test split and write the report directory.
    Eval(EvalArgs),
}

#[derive(Debug, Subcommand)]
pub enum ScoreCommand {
    /// Score every row of a cohort CSV and write one JSON result per line.
    File(ScoreFileArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Pipeline configuration (TOML). Relative paths inside it resolve against its directory.
    /// Without it the built-in defaults are used, relative to the working directory.
    #[arg(long, short = 'c', value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run data-parallel loops on one thread. Results are identical either way.
    #[arg(long)]
    pub sequential: bool,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Config(e.to_string()))?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if self.sequential {
            cfg.parallel = false;
        }
        cfg.apply_execution();
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Output directory.
    #[arg(long, short = 'o', value_name = "DIR")]
    pub out: PathBuf,
    /// Override the number of generated encounters.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Bundle output path; defaults to paths.bundle from the config.
    #[arg(long, short = 'b', value_name = "FILE")]
    pub bundle: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Bundle to evaluate; defaults to paths.bundle from the config.
    #[arg(long, short = 'b', value_name = "FILE")]
    pub bundle: Option<PathBuf>,
    /// Report directory; defaults to paths.report_dir from the config.
    #[arg(long, short = 'r', value_name = "DIR")]
    pub report_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum View {
    Ap,
    Pa,
    Synthetic,
}

impl From<View> for SourceView {
    fn from(v: View) -> Self {
        match v {
            View::Ap => SourceView::Ap,
            View::Pa => SourceView::Pa,
            View::Synthetic => SourceView::Synthetic,
        }
    }
}

/// `LOW,HIGH` on the 0-100 score scale.
pub fn parse_thresholds(s: &str) -> Result<BandThresholds, String> {
    let (a, b) = s.split_once(',').ok_or("expected LOW,HIGH")?;
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    BandThresholds::new(parse(a)?, parse(b)?).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct ScoreFileArgs {
    /// Trained bundle.
    #[arg(long, short = 'b', value_name = "FILE")]
    pub bundle: PathBuf,
    /// Cohort CSV with the canonical column header.
    #[arg(long, value_name = "FILE")]
    pub records: PathBuf,
    /// Directory holding the images named in the `image` column; defaults to images/ next to the records.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Output file for the JSON lines; stdout when absent.
    #[arg(long, short = 'o', value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Acquisition view of the images.
    #[arg(long, value_enum, default_value_t = View::Synthetic)]
    pub view: View,
    /// Replace the fitted band thresholds, e.g. `30,60`.
    #[arg(long, value_name = "LOW,HIGH", value_parser = parse_thresholds)]
    pub thresholds: Option<BandThresholds>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Trained bundle.
    #[arg(long, short = 'b', value_name = "FILE")]
    pub bundle: PathBuf,
    /// Listen address.
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Replace the fitted band thresholds, e.g. `30,60`.
    #[arg(long, value_name = "LOW,HIGH", value_parser = parse_thresholds)]
    pub thresholds: Option<BandThresholds>,
    /// Directory that image `path` references resolve against. Path references are refused without it.
    #[arg(long, value_name = "DIR")]
    pub images_root: Option<PathBuf>,
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle, CliError> {
    ModelBundle::load(path).map_err(|source| CliError::Bundle {
        path: path.to_path_buf(),
        source,
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Cohort(CohortCommand::Gen(a)) => cohort_gen(&a),
        Command::Pipeline(PipelineCommand::Train(a)) => pipeline_train(&a),
        Command::Pipeline(PipelineCommand::Eval(a)) => pipeline_eval(&a),
        Command::Score(ScoreCommand::File(a)) => score_file(&a),
        Command::Serve(a) => serve(a),
    }
}

fn cohort_gen(a: &GenArgs) -> Result<(), CliError> {
    let mut cfg = a.config.load()?;
    if let Some(n) = a.n {
        cfg.generator.n = n;
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cohort = generate_synthetic_cohort(&cfg.generator, derive(cfg.seed, streams::GENERATOR))
        .map_err(|e| CliError::Pipeline(e.into()))?;
    write_cohort_dir(&cohort, &a.out).map_err(|e| CliError::Pipeline(e.into()))?;
    eprintln!(
        "wrote {} encounters ({} images) to {}",
        cohort.records.len(),
        cohort.images.len(),
        a.out.display()
    );
    Ok(())
}

fn pipeline_train(a: &TrainArgs) -> Result<(), CliError> {
    let cfg = a.config.load()?;
    let path = a.bundle.clone().unwrap_or_else(|| cfg.paths.bundle.clone());
    let out = train_pipeline(&cfg)?;
    out.bundle.save(&path).map_err(|source| CliError::Bundle {
        path: path.clone(),
        source,
    })?;
    let m = &out.bundle.metadata;
    eprintln!(
        "trained on {} + {} encounters ({} + {} imaged), fusion best epoch {}; bundle {}",
        m.n_train,
        m.n_validation,
        m.n_train_images,
        m.n_validation_images,
        m.fusion_best_epoch,
        path.display()
    );
    Ok(())
}

fn pipeline_eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = a.config.load()?;
    let bundle = load_bundle(a.bundle.as_deref().unwrap_or(&cfg.paths.bundle))?;
    Scorer::new(&bundle)?;
    let report_dir = a.report_dir.clone().unwrap_or_else(|| cfg.paths.report_dir.clone());

    let prepared = prepare_cohort(&load_cohort(&cfg)?);
    let split = split_cohort(&prepared.cohort.records, &cfg.split, derive(cfg.seed, streams::SPLIT))
        .map_err(|e| CliError::Pipeline(e.into()))?;
    let t = &bundle.training;
    let kind = format!("{:?}", split.split_kind);
    if t.seed != cfg.seed || t.split_kind != kind {
        return Err(CliError::Config(format!(
            "bundle was trained with seed {} and a {} split, the config gives seed {} and a {kind} split",
            t.seed, t.split_kind, cfg.seed
        )));
    }
    let n_fit = split.train_ids.len() + split.validation_ids.len();
    if n_fit != bundle.metadata.n_train + bundle.metadata.n_validation {
        return Err(CliError::Config(format!(
            "the configured cohort has {n_fit} training and validation encounters, the bundle was fitted on {}",
            bundle.metadata.n_train + bundle.metadata.n_validation
        )));
    }

    let report = evaluate(&cfg, &bundle, &prepared, &split)?;
    report.write(&report_dir)?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    eprintln!("report written to {}", report_dir.display());
    Ok(())
}

fn score_file(a: &ScoreFileArgs) -> Result<(), CliError> {
    let bundle = load_bundle(&a.bundle)?;
    let mut scorer = Scorer::new(&bundle)?;
    if let Some(t) = a.thresholds {
        scorer = scorer.with_thresholds(t);
    }
    let records = read_records(&a.records).map_err(|e| CliError::from(PipelineError::from(e)))?;
    let images_dir = match &a.images {
        Some(d) => d.clone(),
        None => a.records.parent().unwrap_or(Path::new(".")).join(IMAGES_DIR),
    };
    let images = read_images(&records, &images_dir).map_err(|e| CliError::Pipeline(e.into()))?;

    let mut out: Box<dyn Write> = match &a.out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(CliError::io(p))?)),
        None => Box::new(BufWriter::new(std::io::stdout().lock())),
    };
    let sink = a.out.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    for r in &records {
        let img = r.image.as_ref().and_then(|k| images.get(k));
        let result = scorer
            .score_view(r, img, a.view.into())
            .map_err(|e| CliError::Pipeline(PipelineError::Data(format!("{}: {e}", r.patient_id))))?;
        serde_json::to_writer(&mut out, &result)?;
        writeln!(out).map_err(CliError::io(&sink))?;
    }
    out.flush().map_err(CliError::io(&sink))?;
    eprintln!("scored {} records", records.len());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), CliError> {
    let bundle = load_bundle(&a.bundle)?;
    let state = service::AppState::new(bundle, a.thresholds, a.images_root)?;
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::io("tokio runtime"))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(a.bind)
            .await
            .map_err(CliError::io(a.bind.to_string()))?;
        eprintln!("serving {} on http://{}", a.bundle.display(), a.bind);
        axum::serve(listener, service::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(CliError::io(a.bind.to_string()))
    })
}
