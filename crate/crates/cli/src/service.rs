//! HTTP what-if service over one immutable model bundle.
//!
//! Every response is JSON carrying `version` (`flowmap-api/1`) and the
//! served `model_hash`, which is also sent in the `x-model-hash` header.
//!
//! - `GET /model/summary[?weekday=W&bin=J]`: flows with their rate shares
//!   and rates in one time bin (default: the busiest), the bin layout and the
//!   default map region.
//! - `GET /map?kind=K&fl=F&bin=J[&weekday=W]`: one flight-level slice.
//! - `POST /whatif` with `{"kind", "fl", "bin", "weekday"?, "overrides"?}`:
//!   the same slice recomputed under what-if overrides.
//!
//! Any endpoint accepts `model=<hash>`; a hash other than the served one is
//! answered with 404. Malformed requests get 400 with the offending field.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use flowmap_core::flowmodel::{TLocationScale, TimeBin};
use flowmap_core::model::ModelBundle;
use flowmap_core::proximity::{
    generate_map, DistanceParams, MapKind, MapRegion, MapRequest, MapSlice, Parallelism, WhatIfOverrides,
};

use crate::error::{CliError, CliResult};

pub const API_VERSION: &str = "flowmap-api/1";
const CACHE_CAPACITY: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServiceConfig {
    /// Horizontal lattice spacing, NM.
    pub step_nm: f64,
    /// Padding of the default region around the flows, NM.
    pub pad_nm: f64,
    pub distance: DistanceParams,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { step_nm: 1.0, pad_nm: 10.0, distance: DistanceParams::default() }
    }
}

struct AppState {
    model: ModelBundle,
    hash: String,
    config: ServiceConfig,
    region: MapRegion,
    /// Rendered slice bodies keyed by request; an optimization only.
    cache: Mutex<HashMap<String, Bytes>>,
}

type Shared = Arc<AppState>;

pub fn router(model: ModelBundle, config: ServiceConfig) -> CliResult<Router> {
    model.validate()?;
    if !(config.step_nm > 0.0) || !config.step_nm.is_finite() {
        return Err(CliError::Input(format!("step_nm must be positive, got {}", config.step_nm)));
    }
    config.distance.validate()?;
    let hash = model.model_hash()?;
    let region = MapRegion::around_model(&model, config.pad_nm, config.step_nm, 0.0, 0.0);
    let state = Arc::new(AppState { model, hash, config, region, cache: Mutex::new(HashMap::new()) });
    Ok(Router::new()
        .route("/model/summary", get(summary))
        .route("/map", get(map))
        .route("/whatif", post(whatif))
        .fallback(not_found)
        .with_state(state))
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    version: &'static str,
    model_hash: &'a str,
    error: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<String>,
}

fn json_response(status: StatusCode, hash: &str, body: Bytes) -> Response {
    let mut r = (status, body).into_response();
    let h = r.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    if let Ok(v) = HeaderValue::from_str(hash) {
        h.insert("x-model-hash", v);
    }
    r
}

fn error(state: &AppState, status: StatusCode, message: String, field: Option<String>) -> Response {
    let body = ErrorBody { version: API_VERSION, model_hash: &state.hash, error: message, field };
    let text = serde_json::to_vec(&body).unwrap_or_default();
    json_response(status, &state.hash, Bytes::from(text))
}

fn ok<T: Serialize>(state: &AppState, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(v) => json_response(StatusCode::OK, &state.hash, Bytes::from(v)),
        Err(e) => error(state, StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

async fn not_found(State(state): State<Shared>) -> Response {
    error(&state, StatusCode::NOT_FOUND, "no such endpoint".into(), None)
}

fn check_model(state: &AppState, model: Option<&str>) -> Result<(), Response> {
    match model {
        Some(m) if m != state.hash => Err(error(
            &state,
            StatusCode::NOT_FOUND,
            format!("unknown bundle `{m}`; this service serves {}", state.hash),
            Some("model".into()),
        )),
        _ => Ok(()),
    }
}

fn time_bin(state: &AppState, weekday: Option<u8>, bin: Option<usize>) -> TimeBin {
    let default = state.model.schedule.busiest_bin().unwrap_or(TimeBin { weekday: 0, bin: 0 });
    TimeBin { weekday: weekday.unwrap_or(default.weekday), bin: bin.unwrap_or(default.bin) }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryQuery {
    weekday: Option<u8>,
    bin: Option<usize>,
    model: Option<String>,
}

#[derive(Serialize)]
struct FlowSummary {
    id: usize,
    members: usize,
    /// Share of the bin's arrivals, `π`.
    rate_share: f64,
    rate_per_hour: f64,
    speed: TLocationScale,
    track: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct BinLayout {
    tau_s: i64,
    bins_per_day: usize,
    weekdays: Vec<u8>,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'static str,
    model_hash: &'a str,
    time_bin: TimeBin,
    bins: BinLayout,
    total_rate_per_hour: f64,
    outlier_share: f64,
    flows: Vec<FlowSummary>,
    region: [f64; 4],
    step_nm: f64,
}

async fn summary(State(state): State<Shared>, query: Result<Query<SummaryQuery>, axum::extract::rejection::QueryRejection>) -> Response {
    let q = match query {
        Ok(Query(q)) => q,
        Err(e) => return error(&state, StatusCode::BAD_REQUEST, e.body_text(), None),
    };
    if let Err(r) = check_model(&state, q.model.as_deref()) {
        return r;
    }
    let tb = time_bin(&state, q.weekday, q.bin);
    let s = &state.model.schedule;
    let idx = match s.index(tb) {
        Ok(i) => i,
        Err(e) if s.observed_weekdays().is_empty() => {
            let _ = e;
            return ok(&state, &empty_summary(&state, tb));
        }
        Err(e) => return error(&state, StatusCode::BAD_REQUEST, e.to_string(), Some("bin".into())),
    };
    let lambda_h = s.lambda(idx) * 3600.0;
    let flows = state
        .model
        .flows
        .iter()
        .map(|f| FlowSummary {
            id: f.id,
            members: f.member_count,
            rate_share: f.rate_share[idx],
            rate_per_hour: f.rate_share[idx] * lambda_h,
            speed: f.speed,
            track: f.track.iter().map(|p| [p.x, p.y, p.z]).collect(),
        })
        .collect();
    let mut body = empty_summary(&state, tb);
    body.total_rate_per_hour = lambda_h;
    body.outlier_share = state.model.outlier_share[idx];
    body.flows = flows;
    ok(&state, &body)
}

fn empty_summary(state: &AppState, tb: TimeBin) -> Summary<'_> {
    let s = &state.model.schedule;
    let r = &state.region;
    Summary {
        version: API_VERSION,
        model_hash: &state.hash,
        time_bin: tb,
        bins: BinLayout { tau_s: s.tau, bins_per_day: s.bins_per_day, weekdays: s.observed_weekdays() },
        total_rate_per_hour: 0.0,
        outlier_share: 0.0,
        flows: Vec::new(),
        region: [r.lo.x, r.lo.y, r.hi.x, r.hi.y],
        step_nm: state.config.step_nm,
    }
}

/// One slice request, shared by `GET /map` and `POST /whatif`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceRequest {
    pub kind: MapKind,
    /// Flight level (hundreds of feet).
    pub fl: f64,
    pub bin: usize,
    #[serde(default)]
    pub weekday: Option<u8>,
    #[serde(default)]
    pub overrides: WhatIfOverrides,
    #[serde(default, skip_serializing)]
    pub model: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapQuery {
    kind: String,
    fl: f64,
    bin: usize,
    weekday: Option<u8>,
    model: Option<String>,
}

#[derive(Serialize)]
pub struct SliceResponse<'a> {
    pub version: &'static str,
    pub model_hash: &'a str,
    pub clip_events: usize,
    pub out_of_region: usize,
    pub slice: MapSlice,
}

async fn map(State(state): State<Shared>, query: Result<Query<MapQuery>, axum::extract::rejection::QueryRejection>) -> Response {
    let q = match query {
        Ok(Query(q)) => q,
        Err(e) => return error(&state, StatusCode::BAD_REQUEST, e.body_text(), None),
    };
    let kind = match q.kind.parse::<MapKind>() {
        Ok(k) => k,
        Err(e) => return error(&state, StatusCode::BAD_REQUEST, e.to_string(), Some("kind".into())),
    };
    let req = SliceRequest {
        kind,
        fl: q.fl,
        bin: q.bin,
        weekday: q.weekday,
        overrides: WhatIfOverrides::default(),
        model: q.model,
    };
    slice(state, req).await
}

async fn whatif(State(state): State<Shared>, body: Bytes) -> Response {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let req: SliceRequest = match serde_path_to_error::deserialize(de) {
        Ok(r) => r,
        Err(e) => {
            let path = e.path().to_string();
            let field = (path != ".").then_some(path);
            return error(&state, StatusCode::BAD_REQUEST, e.into_inner().to_string(), field);
        }
    };
    slice(state, req).await
}

async fn slice(state: Shared, req: SliceRequest) -> Response {
    if let Err(r) = check_model(&state, req.model.as_deref()) {
        return r;
    }
    if !(0.0..=1000.0).contains(&req.fl) {
        return error(&state, StatusCode::BAD_REQUEST, format!("flight level {} out of range", req.fl), Some("fl".into()));
    }
    if let Err(e) = req.overrides.validate(&state.model.flow_ids()) {
        return error(&state, StatusCode::BAD_REQUEST, e.to_string(), Some("overrides".into()));
    }
    let tb = time_bin(&state, req.weekday, Some(req.bin));
    let key = serde_json::to_string(&(req.kind, req.fl.to_bits(), tb, &req.overrides)).unwrap_or_default();
    if let Some(body) = state.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
        return json_response(StatusCode::OK, &state.hash, body);
    }
    let st = state.clone();
    let computed = tokio::task::spawn_blocking(move || render_slice(&st, req.kind, req.fl, tb, &req.overrides)).await;
    match computed {
        Ok(Ok(body)) => {
            if let Ok(mut c) = state.cache.lock() {
                if c.len() >= CACHE_CAPACITY {
                    c.clear();
                }
                c.insert(key, body.clone());
            }
            json_response(StatusCode::OK, &state.hash, body)
        }
        Ok(Err(e)) => {
            let field = match &e {
                flowmap_core::Error::InvalidTimeBin { .. } => Some("bin".to_owned()),
                flowmap_core::Error::UnknownFlow { .. } => Some("overrides".to_owned()),
                _ => None,
            };
            error(&state, StatusCode::BAD_REQUEST, e.to_string(), field)
        }
        Err(e) => error(&state, StatusCode::INTERNAL_SERVER_ERROR, e.to_string(), None),
    }
}

fn render_slice(
    state: &AppState,
    kind: MapKind,
    fl: f64,
    time_bin: TimeBin,
    overrides: &WhatIfOverrides,
) -> flowmap_core::Result<Bytes> {
    let mut region = state.region;
    region.lo.z = fl * 100.0;
    region.hi.z = fl * 100.0;
    let request = MapRequest {
        kind,
        region,
        steps: [state.config.step_nm, state.config.step_nm, 1000.0],
        time_bin,
        distance: state.config.distance,
    };
    let grid = generate_map(&state.model, &request, overrides, Parallelism::Parallel)?;
    let body = SliceResponse {
        version: API_VERSION,
        model_hash: &state.hash,
        clip_events: grid.clip_events,
        out_of_region: grid.out_of_region,
        slice: grid.slice(0)?,
    };
    Ok(Bytes::from(serde_json::to_vec(&body)?))
}
