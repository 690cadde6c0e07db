use std::sync::Arc;

use ansc_core::calibration::{Population, Thresholds};
use ansc_core::scoring::{posture_and_movement, Posture, ScoreCard, ScoreSeries};
use ansc_core::simulator::{export_heatmap, HeatmapRow};
use ansc_core::whatif::{evaluate, parse_actions, WhatIfResult};
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::error::ApiError;
use crate::state::{App, SimLock};

const DEFAULT_WINDOW: usize = 30;

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatacenterView {
    pub card: ScoreCard,
    pub region_id: String,
    pub layers: Vec<ScoreCard>,
    /// Scope id of the layer that set the datacenter score.
    pub worst_layer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryView {
    pub series: ScoreSeries,
    /// Absent until the window holds at least two points.
    pub posture: Option<Posture>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickView {
    pub tick: usize,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryParams {
    window: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdParams {
    population: Option<Population>,
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    q.map(|Query(v)| v).map_err(|e| ApiError::bad_request(e.body_text()))
}

/// All routes, with CORS for `cors_origin` when given.
pub fn router(app: Arc<App>, cors_origin: Option<HeaderValue>) -> Router {
    let routes = Router::new()
        .route("/v1/fleet/scores", get(fleet_scores))
        .route("/v1/regions/{region}/heatmap", get(heatmap))
        .route("/v1/datacenters/{dc}/scorecard", get(scorecard))
        .route("/v1/datacenters/{dc}/history", get(history))
        .route("/v1/calibration/thresholds", get(thresholds))
        .route("/v1/whatif", post(whatif))
        .route("/v1/sim/tick", post(tick))
        .with_state(app);
    match cors_origin {
        Some(origin) => routes.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        ),
        None => routes,
    }
}

async fn fleet_scores(State(app): State<Arc<App>>) -> Json<Vec<ScoreCard>> {
    Json(app.snapshot().assessment.all_cards())
}

async fn heatmap(State(app): State<Arc<App>>, Path(region): Path<String>) -> ApiResult<HeatmapRow> {
    let snap = app.snapshot();
    if !snap.fleet.regions.contains(&region) {
        return Err(ApiError::not_found(format!("unknown region {region}")));
    }
    let map = export_heatmap(&snap.fleet, &snap.assessment.dc_cards())?;
    Ok(Json(map.row(&region).cloned().unwrap_or(HeatmapRow {
        region,
        cells: Vec::new(),
    })))
}

async fn scorecard(State(app): State<Arc<App>>, Path(dc): Path<String>) -> ApiResult<DatacenterView> {
    let snap = app.snapshot();
    let (Some(score), Some(meta)) = (snap.assessment.datacenter(&dc), snap.fleet.datacenter(&dc)) else {
        return Err(ApiError::not_found(format!("unknown datacenter {dc}")));
    };
    Ok(Json(DatacenterView {
        card: score.card.clone(),
        region_id: meta.region_id.clone(),
        layers: score.layers.clone(),
        worst_layer: score.layers[score.worst_layer].scope_id.clone(),
    }))
}

async fn history(
    State(app): State<Arc<App>>,
    Path(dc): Path<String>,
    params: Result<Query<HistoryParams>, QueryRejection>,
) -> ApiResult<HistoryView> {
    let window = query(params)?.window.unwrap_or(DEFAULT_WINDOW);
    if window == 0 {
        return Err(ApiError::bad_request("window must be >= 1"));
    }
    let snap = app.snapshot();
    if snap.fleet.datacenter(&dc).is_none() {
        return Err(ApiError::not_found(format!("unknown datacenter {dc}")));
    }
    let series = app.series(&dc, window, snap.at());
    let n = series.points.len();
    let posture = if n >= 2 {
        Some(posture_and_movement(&series, n)?)
    } else {
        None
    };
    Ok(Json(HistoryView { series, posture }))
}

async fn thresholds(
    State(app): State<Arc<App>>,
    params: Result<Query<ThresholdParams>, QueryRejection>,
) -> ApiResult<Thresholds> {
    let population = query(params)?.population.unwrap_or(Population::Datacenter);
    let snap = app.snapshot();
    Ok(Json(match population {
        Population::Datacenter => snap.assessment.dc_thresholds.clone(),
        Population::Region => snap.assessment.region_thresholds.clone(),
    }))
}

async fn whatif(State(app): State<Arc<App>>, body: Bytes) -> ApiResult<WhatIfResult> {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let actions = parse_actions(text)?;
    let snap = app.snapshot();
    let result = tokio::task::spawn_blocking(move || evaluate(&snap.whatif_context(), &actions))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(result))
}

async fn tick(State(app): State<Arc<App>>) -> ApiResult<TickView> {
    let guard = match app.lock_sim() {
        SimLock::FileMode => return Err(ApiError::bad_request("ticks are only available in demo mode")),
        SimLock::Busy => return Err(ApiError::conflict("a tick is already in progress")),
        SimLock::Held(g) => g,
    };
    let runner = app.clone();
    let state = tokio::task::spawn_blocking(move || runner.advance(guard))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(TickView {
        tick: state.tick.unwrap_or_default(),
        at: state.at(),
    }))
}
