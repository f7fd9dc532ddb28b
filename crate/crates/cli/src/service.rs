//! HTTP scoring service.
//!
//! `POST /score` takes one flat JSON object whose keys are the canonical
//! record field names (the cohort CSV header). Values may be strings,
//! numbers, booleans or null; null and absent both mean missing. Three keys
//! are reserved:
//!
//! - `image`: `{"pgm_base64": "..."}` with a binary 8-bit PGM, or
//!   `{"path": "..."}` relative to the server's images root
//! - `view`: `ap`, `pa` or `synthetic` (default)
//! - `thresholds`: `{"t_low_med": .., "t_med_high": ..}` for this request
//!
//! Validation failures answer 422 with `{"error": "validation", "fields":
//! [{"field", "message"}]}`.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use corisk::clinical::{ClinicalError, PhysiologicBounds};
use corisk::cohort::io::{parse_record, record_header, FieldError};
use corisk::cohort::{device_names, Avpu, OxygenTherapyLevel, PatientRecord, PcrResult, Race, Sex};
use corisk::features::EncodeError;
use corisk::fusion::{FeatureSchema, SourceView};
use corisk::pipeline::{
    BundleMetadata, ModelBundle, PipelineError, ScoreResult, Scorer, TrainingConfig, BUNDLE_FORMAT, BUNDLE_VERSION,
};
use corisk::pnm::GrayImage;
use corisk::scoring::BandThresholds;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

/// Upper bound on request bodies; leaves room for full-size radiographs.
pub const BODY_LIMIT: usize = 64 << 20;

/// Administrative fields filled in when a request leaves them out. They
/// do not enter the model.
pub const DEFAULTS: [(&str, &str); 4] = [
    ("patient_id", "request"),
    ("site_id", "1"),
    ("visit_time", "2020-03-01T00:00:00"),
    ("decision_time", "2020-03-01T00:00:00"),
];

const IMAGE: &str = "image";
const VIEW: &str = "view";
const THRESHOLDS: &str = "thresholds";

/// Immutable state shared by all requests.
#[derive(Debug)]
pub struct AppState {
    bundle: ModelBundle,
    thresholds: BandThresholds,
    images_root: Option<PathBuf>,
}

impl AppState {
    /// Fails on schema drift between the bundle and this build.
    pub fn new(
        bundle: ModelBundle,
        thresholds: Option<BandThresholds>,
        images_root: Option<PathBuf>,
    ) -> Result<Arc<Self>, CliError> {
        Scorer::new(&bundle)?;
        Ok(Arc::new(AppState {
            thresholds: thresholds.unwrap_or(bundle.thresholds),
            bundle,
            images_root,
        }))
    }

    fn scorer(&self) -> Scorer<'_> {
        Scorer::new(&self.bundle)
            .expect("schema checked at startup")
            .with_thresholds(self.thresholds)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/score", post(score))
        .route("/bundle", get(bundle_info))
        .route("/health", get(health))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    fields: Vec<FieldError>,
}

#[derive(Debug)]
pub enum ApiError {
    Malformed(String),
    Validation(Vec<FieldError>),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Malformed(m) => (
                StatusCode::BAD_REQUEST,
                ErrorBody {
                    error: "malformed_request",
                    message: Some(m),
                    fields: Vec::new(),
                },
            ),
            ApiError::Validation(fields) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                ErrorBody {
                    error: "validation",
                    message: None,
                    fields,
                },
            ),
            ApiError::Internal(m) => (
                StatusCode::INTERNAL_SERVER_ERROR,
                ErrorBody {
                    error: "internal",
                    message: Some(m),
                    fields: Vec::new(),
                },
            ),
        };
        (status, Json(body)).into_response()
    }
}

fn field_error(field: &str, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageRef {
    Pgm(Vec<u8>),
    Path(PathBuf),
}

/// A decoded `POST /score` body.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub record: PatientRecord,
    pub image: Option<ImageRef>,
    pub view: SourceView,
    pub thresholds: Option<BandThresholds>,
}

/// Integral floats lose their `.0` so that `4.0` is accepted where an
/// integer is expected; the parsed value is unchanged.
fn number_text(n: &serde_json::Number) -> String {
    match n.as_f64() {
        Some(x) if n.is_f64() && x.fract() == 0.0 && x.abs() < 9.0e15 => format!("{}", x as i64),
        _ => n.to_string(),
    }
}

fn scalar_text(v: &Value) -> Option<Option<String>> {
    match v {
        Value::Null => Some(None),
        Value::String(s) => Some(Some(s.clone())),
        Value::Number(n) => Some(Some(number_text(n))),
        Value::Bool(b) => Some(Some(b.to_string())),
        Value::Array(_) | Value::Object(_) => None,
    }
}

fn parse_image(v: &Value, errors: &mut Vec<FieldError>) -> Option<ImageRef> {
    let obj = match v {
        Value::Null => return None,
        Value::Object(o) => o,
        _ => {
            errors.push(field_error(IMAGE, "expected {\"pgm_base64\": ...} or {\"path\": ...}"));
            return None;
        }
    };
    match (obj.get("pgm_base64"), obj.get("path"), obj.len()) {
        (Some(Value::String(b)), None, 1) => match base64::engine::general_purpose::STANDARD.decode(b.trim()) {
            Ok(bytes) => Some(ImageRef::Pgm(bytes)),
            Err(e) => {
                errors.push(field_error(IMAGE, format!("pgm_base64 is not valid base64: {e}")));
                None
            }
        },
        (None, Some(Value::String(p)), 1) => Some(ImageRef::Path(PathBuf::from(p))),
        _ => {
            errors.push(field_error(
                IMAGE,
                "expected exactly one of pgm_base64 or path, as a string",
            ));
            None
        }
    }
}

/// Checks the body against the canonical vocabulary and parses the record.
pub fn parse_request(body: &Value) -> Result<ScoreRequest, Vec<FieldError>> {
    let Value::Object(obj) = body else {
        return Err(vec![field_error("", "request body must be a JSON object")]);
    };
    let header = record_header();
    let mut errors = Vec::new();
    let mut text: BTreeMap<String, String> = DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let mut image = None;
    let mut view = SourceView::Synthetic;
    let mut thresholds = None;
    for (key, v) in obj {
        match key.as_str() {
            IMAGE => image = parse_image(v, &mut errors),
            VIEW => match serde_json::from_value::<SourceView>(v.clone()) {
                Ok(s) => view = s,
                Err(_) => errors.push(field_error(VIEW, "expected one of ap, pa, synthetic")),
            },
            THRESHOLDS => match serde_json::from_value::<BandThresholds>(v.clone())
                .map_err(|e| e.to_string())
                .and_then(|t| BandThresholds::new(t.t_low_med, t.t_med_high).map_err(|e| e.to_string()))
            {
                Ok(t) => thresholds = Some(t),
                Err(e) => errors.push(field_error(THRESHOLDS, e)),
            },
            k if header.contains(&k) => match scalar_text(v) {
                Some(Some(s)) => {
                    text.insert(key.clone(), s);
                }
                Some(None) => {
                    text.remove(key);
                }
                None => errors.push(field_error(key, "expected a string, number, boolean or null")),
            },
            _ => errors.push(field_error(key, "unknown field; see GET /bundle for the vocabulary")),
        }
    }
    let get = |name: &str| text.get(name).cloned();
    let record = match parse_record(&get) {
        Ok(r) => Some(r),
        Err(e) => {
            errors.extend(e);
            None
        }
    };
    match record {
        Some(record) if errors.is_empty() => Ok(ScoreRequest {
            record,
            image,
            view,
            thresholds,
        }),
        _ => Err(errors),
    }
}

/// Resolves a server-side image path, refusing anything outside `root`.
fn resolve_image_path(root: Option<&Path>, rel: &Path) -> Result<PathBuf, FieldError> {
    let root = root.ok_or_else(|| field_error(IMAGE, "server-side image paths are not enabled on this server"))?;
    if rel.as_os_str().is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(field_error(IMAGE, "path must be relative and must not contain '..'"));
    }
    Ok(root.join(rel))
}

fn load_image(state: &AppState, image: &ImageRef) -> Result<GrayImage, FieldError> {
    match image {
        ImageRef::Pgm(bytes) => {
            GrayImage::from_pnm_bytes(bytes).map_err(|e| field_error(IMAGE, format!("not a readable PGM: {e}")))
        }
        ImageRef::Path(rel) => {
            let path = resolve_image_path(state.images_root.as_deref(), rel)?;
            GrayImage::read(&path).map_err(|e| field_error(IMAGE, format!("{}: {e}", rel.display())))
        }
    }
}

/// Maps scoring failures caused by the input to field errors.
fn scoring_error(e: PipelineError) -> ApiError {
    match e {
        PipelineError::Encode(EncodeError::UnknownDevice { value, allowed }) => ApiError::Validation(vec![field_error(
            "presenting_device",
            format!("unknown value {value:?}; allowed: {allowed}"),
        )]),
        PipelineError::Clinical(ClinicalError::OutOfRange { field, value, lo, hi }) => ApiError::Validation(vec![
            field_error(&field, format!("{value} is outside the physiologic range [{lo}, {hi}]")),
        ]),
        PipelineError::Fusion(e) => ApiError::Validation(vec![field_error(IMAGE, e.to_string())]),
        other => ApiError::Internal(other.to_string()),
    }
}

/// Scores a decoded request against the shared bundle.
pub fn score_request(state: &AppState, req: &ScoreRequest) -> Result<ScoreResult, ApiError> {
    let image = match &req.image {
        Some(i) => Some(load_image(state, i).map_err(|e| ApiError::Validation(vec![e]))?),
        None => None,
    };
    let mut scorer = state.scorer();
    if let Some(t) = req.thresholds {
        scorer = scorer.with_thresholds(t);
    }
    scorer
        .score_view(&req.record, image.as_ref(), req.view)
        .map_err(scoring_error)
}

async fn score(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ScoreResult>, ApiError> {
    let value: Value = serde_json::from_slice(&body).map_err(|e| ApiError::Malformed(e.to_string()))?;
    let req = parse_request(&value).map_err(ApiError::Validation)?;
    tokio::task::spawn_blocking(move || score_request(&state, &req))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))?
        .map(Json)
}

#[derive(Debug, Serialize)]
struct Vocabulary {
    fields: Vec<&'static str>,
    sex: Vec<&'static str>,
    race: Vec<&'static str>,
    covid_pcr_result: Vec<&'static str>,
    avpu: Vec<&'static str>,
    presenting_device: Vec<&'static str>,
    view: [&'static str; 3],
}

/// `GET /bundle` response.
#[derive(Debug, Serialize)]
pub struct BundleInfo<'a> {
    format: String,
    bundle_version: u32,
    feature_names: &'a [String],
    schema: &'a FeatureSchema,
    vocabulary: Vocabulary,
    /// Thresholds applied when a request does not supply its own.
    thresholds: BandThresholds,
    fitted_thresholds: BandThresholds,
    physiologic_bounds: PhysiologicBounds,
    training: &'a TrainingConfig,
    metadata: &'a BundleMetadata,
}

fn vocabulary() -> Vocabulary {
    Vocabulary {
        fields: record_header(),
        sex: Sex::ALL.iter().map(|v| v.name()).collect(),
        race: Race::ALL.iter().map(|v| v.name()).collect(),
        covid_pcr_result: PcrResult::ALL.iter().map(|v| v.name()).collect(),
        avpu: Avpu::ALL.iter().map(|v| v.name()).collect(),
        presenting_device: OxygenTherapyLevel::ALL
            .iter()
            .flat_map(|l| device_names(*l).iter().copied())
            .collect(),
        view: ["ap", "pa", "synthetic"],
    }
}

async fn bundle_info(State(state): State<Arc<AppState>>) -> Response {
    let b = &state.bundle;
    Json(BundleInfo {
        format: String::from_utf8_lossy(BUNDLE_FORMAT).trim_end_matches('\0').to_string(),
        bundle_version: BUNDLE_VERSION,
        feature_names: &b.feature_names,
        schema: &b.fusion.schema,
        vocabulary: vocabulary(),
        thresholds: state.thresholds,
        fitted_thresholds: b.thresholds,
        physiologic_bounds: PhysiologicBounds::default(),
        training: &b.training,
        metadata: &b.metadata,
    })
    .into_response()
}

async fn health() -> Json<Value> {
    Json(serde_json::json!({"status": "ok", "bundle_version": BUNDLE_VERSION}))
}
