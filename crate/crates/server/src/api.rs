//! `/api/*` handlers.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::Serialize;

use plastiscope_core::aggregate::{area_range, diff_frames, local_range};
use plastiscope_core::payload::{encode_diff, encode_frame, encode_positions};
use plastiscope_core::stats::{frame_stats, FrameStats, RangeMode, DEFAULT_BIN_COUNT, DEFAULT_PARALLEL_CAP};
use plastiscope_core::store::FrameStore;
use plastiscope_core::{
    ConnectivityStatus, Error, FrameKey, NeuronProperty, PropertyRange, Scenario, ScenarioCatalog,
    Statics, TimestepFrame,
};

use crate::AppState;

pub const MAX_BINS: usize = 10_000;

const OCTET_STREAM: &str = "application/octet-stream";
const IMMUTABLE: &str = "public, max-age=31536000, immutable";

/// A loaded store: catalog and statics are read once at startup.
#[derive(Debug)]
pub struct DataStore {
    pub store: FrameStore,
    pub catalog: ScenarioCatalog,
    pub statics: Statics,
    catalog_json: Bytes,
    positions: Bytes,
}

impl DataStore {
    pub fn open(root: &Path) -> plastiscope_core::Result<DataStore> {
        let store = FrameStore::new(root);
        let catalog = store.read_catalog()?;
        let statics = store.read_statics()?;
        if statics.len() != catalog.neuron_count as usize {
            return Err(Error::Validation(format!(
                "catalog lists {} neurons but statics hold {}",
                catalog.neuron_count,
                statics.len()
            )));
        }
        let catalog_json = serde_json::to_vec(&catalog).expect("catalog serializes").into();
        let positions = encode_positions(&statics.neurons, statics.area_count()).into();
        Ok(DataStore {
            store,
            catalog,
            statics,
            catalog_json,
            positions,
        })
    }

    fn read(&self, key: FrameKey) -> Result<TimestepFrame, ApiError> {
        if !self.catalog.contains(key) {
            return Err(ApiError::not_found(format!("no frame {key}")));
        }
        Ok(self.store.read_frame(key)?)
    }
}

/// JSON error body shared by every non-2xx API response.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }

    fn unavailable() -> Self {
        ApiError {
            status: StatusCode::SERVICE_UNAVAILABLE,
            code: "store_unavailable",
            message: "no preprocessed store is loaded".into(),
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        match e {
            Error::NotFound(m) => ApiError::not_found(m),
            Error::Domain(m) | Error::Validation(m) => ApiError::bad_request(m),
            other => {
                tracing::error!(error = %other, "request failed");
                ApiError {
                    status: StatusCode::INTERNAL_SERVER_ERROR,
                    code: "internal",
                    message: other.to_string(),
                }
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.code, "message": self.message });
        (self.status, axum::Json(body)).into_response()
    }
}

type ApiResult = Result<Response, ApiError>;

fn data(state: &AppState) -> Result<Arc<DataStore>, ApiError> {
    state.data.clone().ok_or_else(ApiError::unavailable)
}

fn binary(bytes: impl Into<Bytes>, cache: &'static str) -> Response {
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(OCTET_STREAM)),
            (header::CACHE_CONTROL, HeaderValue::from_static(cache)),
        ],
        bytes.into(),
    )
        .into_response()
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        code: "internal",
        message: e.to_string(),
    })?
}

fn scenario(s: &str) -> Result<Scenario, ApiError> {
    Scenario::from_str(s).map_err(|_| ApiError::not_found(format!("unknown scenario '{s}'")))
}

fn timestep(s: &str) -> Result<u32, ApiError> {
    s.parse().map_err(|_| ApiError::bad_request(format!("timestep '{s}' is not a non-negative integer")))
}

fn frame_key(s: &str, t: &str) -> Result<FrameKey, ApiError> {
    Ok(FrameKey {
        scenario: scenario(s)?,
        timestep: timestep(t)?,
    })
}

fn query<'a>(q: &'a HashMap<String, String>, name: &str) -> Result<&'a str, ApiError> {
    q.get(name)
        .map(String::as_str)
        .ok_or_else(|| ApiError::bad_request(format!("missing query parameter '{name}'")))
}

fn query_usize(q: &HashMap<String, String>, name: &str, default: usize) -> Result<usize, ApiError> {
    q.get(name).map_or(Ok(default), |v| {
        v.parse()
            .map_err(|_| ApiError::bad_request(format!("'{name}' must be a non-negative integer")))
    })
}

pub async fn catalog(State(state): State<AppState>) -> ApiResult {
    let d = data(&state)?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        d.catalog_json.clone(),
    )
        .into_response())
}

pub async fn positions(State(state): State<AppState>) -> ApiResult {
    Ok(binary(data(&state)?.positions.clone(), IMMUTABLE))
}

pub async fn frame(State(state): State<AppState>, UrlPath((s, t)): UrlPath<(String, String)>) -> ApiResult {
    let d = data(&state)?;
    let key = frame_key(&s, &t)?;
    let bytes = blocking(move || Ok(encode_frame(&d.read(key)?)?)).await?;
    Ok(binary(bytes, IMMUTABLE))
}

pub async fn diff(State(state): State<AppState>, Query(q): Query<HashMap<String, String>>) -> ApiResult {
    let d = data(&state)?;
    let base = FrameKey {
        scenario: scenario(query(&q, "baseScenario")?)?,
        timestep: timestep(query(&q, "baseT")?)?,
    };
    let other = FrameKey {
        scenario: scenario(query(&q, "otherScenario")?)?,
        timestep: timestep(query(&q, "otherT")?)?,
    };
    let bytes = blocking(move || {
        let a = d.read(base)?;
        let b = d.read(other)?;
        let missing = |f: &TimestepFrame| f.connectivity_status == ConnectivityStatus::Missing;
        Ok(encode_diff(&diff_frames(&a, &b)?, missing(&a), missing(&b))?)
    })
    .await?;
    Ok(binary(bytes, IMMUTABLE))
}

#[derive(Debug, Serialize)]
struct StatsResponse {
    range_mode: RangeMode,
    #[serde(flatten)]
    stats: FrameStats,
}

/// Range the histogram of `property` spans under `mode`.
pub fn resolve_range(
    d: &DataStore,
    frame: &TimestepFrame,
    property: NeuronProperty,
    mode: RangeMode,
) -> plastiscope_core::Result<PropertyRange> {
    if property == NeuronProperty::Area {
        return area_range(&d.statics);
    }
    match (mode, d.catalog.global_range(frame.scenario, property)) {
        (RangeMode::Global, Some(r)) => Ok(r),
        _ => local_range(frame, property),
    }
}

pub async fn stats(
    State(state): State<AppState>,
    UrlPath((s, t, p)): UrlPath<(String, String, String)>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let d = data(&state)?;
    let property = NeuronProperty::from_str(&p).map_err(|_| ApiError::bad_request(format!("unknown property '{p}'")))?;
    let key = frame_key(&s, &t)?;
    let mode = match q.get("rangeMode").map(String::as_str) {
        None | Some("global") => RangeMode::Global,
        Some("local") => RangeMode::Local,
        Some(other) => return Err(ApiError::bad_request(format!("rangeMode '{other}' is not global or local"))),
    };
    let bins = query_usize(&q, "bins", DEFAULT_BIN_COUNT)?;
    if !(1..=MAX_BINS).contains(&bins) {
        return Err(ApiError::bad_request(format!("bins must be in 1..={MAX_BINS}")));
    }
    let cap = query_usize(&q, "cap", DEFAULT_PARALLEL_CAP)?;
    if cap == 0 {
        return Err(ApiError::bad_request("cap must be at least 1"));
    }
    let body = blocking(move || {
        let frame = d.read(key)?;
        let range = resolve_range(&d, &frame, property, mode)?;
        let stats = frame_stats(&frame, &d.statics, property, range, bins, cap)?;
        Ok(serde_json::to_vec(&StatsResponse { range_mode: mode, stats }).expect("stats serialize"))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response())
}

pub async fn no_route() -> ApiError {
    ApiError::not_found("no such route")
}
