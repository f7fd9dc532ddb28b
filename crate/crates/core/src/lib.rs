//! CO-RISK: severe-outcome risk scoring for emergency-department patients.
//!
//! The crate covers the whole modelling pipeline:
//!
//! - [`cohort`]: synthetic cohorts with a planted risk function, inclusion
//!   criteria, outcome labels and train/test splits.
//! - [`imputation`]: MissForest iterative random-forest imputation.
//! - [`autodiff`]: a small reverse-mode tape over dense `f64` tensors.
//! - [`fusion`]: the Deep & Cross fusion network over EHR features and chest
//!   images, plus its training loop.
//! - [`forest`]: CART random forests (regression and classification).
//! - [`scoring`]: source combination, the cube-root score transform and risk
//!   bands.
//! - [`clinical`]: CURB-65 and MEWS baselines.
//! - [`evaluation`]: ROC/AUC, bootstrap intervals, permutation importance,
//!   Kaplan-Meier curves, log-rank tests and operating points.
//! - [`pipeline`]: configuration, training/evaluation orchestration, the
//!   model bundle and single-record scoring.
//!
//! Data-parallel loops (tree fitting, bootstrap resamples, permutation
//! repeats) go through [`exec`]; with the `parallel` feature disabled they
//! run sequentially and produce identical results.

pub mod autodiff;
pub mod clinical;
pub mod cohort;
pub mod evaluation;
pub mod exec;
pub mod features;
pub mod forest;
pub mod fusion;
pub mod imputation;
pub mod pipeline;
pub mod pnm;
pub mod scoring;
pub mod seed;

pub use exec::Execution;
