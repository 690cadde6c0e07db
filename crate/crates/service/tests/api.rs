use std::sync::Arc;

use ansc_core::calibration::{BudgetConfig, Thresholds};
use ansc_core::fabric::FabricTopology;
use ansc_core::persistence::{parse_json, to_json_pretty, HistoryStore};
use ansc_core::scoring::{Scope, ScoreCard};
use ansc_core::simulator::{generate_fleet, generate_history, FleetGenSpec, ScenarioConfig};
use ansc_core::whatif::WhatIfResult;
use ansc_service::{router, App, DatacenterView, ErrorBody, HistoryView, ServiceState, SimLock, TickView};
use axum::body::Body;
use axum::http::{HeaderValue, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use tower::ServiceExt;

fn fleet() -> FabricTopology {
    generate_fleet(&FleetGenSpec {
        seed: 21,
        n_regions: 2,
        n_datacenters: 4,
        ..Default::default()
    })
    .unwrap()
}

fn config() -> ScenarioConfig {
    ScenarioConfig {
        duration_days: 10,
        pre_roll_days: 365,
        base_fail_rate_per_year: ansc_core::simulator::Span::new(1.0, 4.0),
        ..Default::default()
    }
}

fn file_app() -> Arc<App> {
    let fleet = fleet();
    let history = generate_history(&fleet, &config(), 21);
    let at = config().start;
    let state = ServiceState::from_inputs(fleet, &history, BudgetConfig::default(), at).unwrap();
    Arc::new(App::file(state, HistoryStore::in_memory()))
}

fn demo_app() -> Arc<App> {
    let fleet = fleet();
    let history = generate_history(&fleet, &config(), 21);
    Arc::new(App::demo(&fleet, &history, &config()).unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn get_json<T: DeserializeOwned>(app: &Router, uri: &str) -> T {
    let (status, body) = call(app, Method::GET, uri, None).await;
    assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
    serde_json::from_slice(&body).unwrap()
}

async fn error(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, ErrorBody) {
    let (status, bytes) = call(app, method, uri, body).await;
    let v: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let body = ErrorBody {
        error: match v["error"].as_str().unwrap() {
            "not_found" => "not_found",
            "bad_request" => "bad_request",
            "conflict" => "conflict",
            "schema" => "schema",
            other => panic!("unexpected error kind {other}"),
        },
        message: v["message"].as_str().unwrap().to_string(),
        path: v["path"].as_str().map(str::to_string),
    };
    (status, body)
}

#[tokio::test]
async fn fleet_scores_cover_every_scope_and_round_trip() {
    let app = router(file_app(), None);
    let (status, body) = call(&app, Method::GET, "/v1/fleet/scores", None).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(body).unwrap();
    let cards: Vec<ScoreCard> = parse_json(&text, "response").unwrap();
    let f = fleet();
    let layers: usize = f.datacenters.iter().map(|d| d.layers.len()).sum();
    assert_eq!(cards.len(), layers + 4 + 2);
    assert!(cards.iter().all(|c| c.at == cards[0].at));
    let again: Vec<ScoreCard> = parse_json(&to_json_pretty(&cards), "again").unwrap();
    assert_eq!(again, cards);
}

#[tokio::test]
async fn heatmap_lists_region_dcs_worst_first() {
    let app = router(file_app(), None);
    let row: ansc_core::simulator::HeatmapRow = get_json(&app, "/v1/regions/r00/heatmap").await;
    assert_eq!(row.region, "r00");
    assert_eq!(row.cells.len(), 2);
    assert!(row.cells[0].persisted >= row.cells[1].persisted);
    let (status, e) = error(&app, Method::GET, "/v1/regions/nowhere/heatmap", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(e.message.contains("nowhere"));
}

#[tokio::test]
async fn scorecard_has_layer_breakdown() {
    let app = router(file_app(), None);
    let v: DatacenterView = get_json(&app, "/v1/datacenters/dc000/scorecard").await;
    assert_eq!(v.card.scope, Scope::Datacenter);
    assert_eq!(v.layers.len(), 3);
    assert!(v.layers.iter().all(|l| l.scope_id.starts_with("dc000/")));
    let worst = v.layers.iter().find(|l| l.scope_id == v.worst_layer).unwrap();
    assert_eq!(worst.persisted, v.card.persisted);
    let (status, _) = error(&app, Method::GET, "/v1/datacenters/unknown/scorecard", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = error(&app, Method::GET, "/v1/datacenters/unknown/history", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn thresholds_by_population() {
    let app = router(file_app(), None);
    let dc: Thresholds = get_json(&app, "/v1/calibration/thresholds").await;
    assert_eq!(dc.population, ansc_core::calibration::Population::Datacenter);
    let r: Thresholds = get_json(&app, "/v1/calibration/thresholds?population=region").await;
    assert_eq!(r.population, ansc_core::calibration::Population::Region);
    assert!(dc.t_amber <= dc.t_orange && dc.t_orange <= dc.t_red);
    let (status, _) = error(&app, Method::GET, "/v1/calibration/thresholds?population=planet", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn whatif_contract() {
    let app = router(file_app(), None);
    let (status, body) = call(&app, Method::POST, "/v1/whatif", Some("[]")).await;
    assert_eq!(status, StatusCode::OK);
    let r: WhatIfResult = serde_json::from_slice(&body).unwrap();
    assert_eq!(r.before, r.after);

    let f = fleet();
    let target = &f.datacenters[0].layers[0].elements[0].id;
    let drain = format!(r#"[{{"kind":"drain_element","element_id":"{target}"}}]"#);
    let (status, body) = call(&app, Method::POST, "/v1/whatif", Some(&drain)).await;
    assert_eq!(status, StatusCode::OK);
    let r: WhatIfResult = serde_json::from_slice(&body).unwrap();
    assert!(r.safe_to_remove.is_some());
    assert!(r.after[0].raw >= r.before[0].raw);

    let (status, e) = error(
        &app,
        Method::POST,
        "/v1/whatif",
        Some(r#"[{"kind":"add_capacity","layer_id":"dc000/tor","amount":"lots"}]"#),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e.path.as_deref(), Some("[0].amount"));

    let (status, e) = error(
        &app,
        Method::POST,
        "/v1/whatif",
        Some(r#"[{"kind":"add_capacity","layer_id":"dc000/tor","amount":0}]"#),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e.path.as_deref(), Some("[0].amount"));
    assert!(e.message.contains("> 0"), "{}", e.message);

    let (status, _) = error(
        &app,
        Method::POST,
        "/v1/whatif",
        Some(r#"[{"kind":"repair_element","element_id":"ghost"}]"#),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    // what-ifs never move the snapshot
    let cards: Vec<ScoreCard> = get_json(&app, "/v1/fleet/scores").await;
    let fresh: Vec<ScoreCard> = get_json(&router(file_app(), None), "/v1/fleet/scores").await;
    assert_eq!(cards, fresh);
}

#[tokio::test]
async fn tick_is_demo_only() {
    let app = router(file_app(), None);
    let (status, _) = error(&app, Method::POST, "/v1/sim/tick", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn demo_ticks_advance_snapshot_and_history() {
    let state = demo_app();
    let app = router(state.clone(), None);
    let first: Vec<ScoreCard> = get_json(&app, "/v1/fleet/scores").await;
    let h: HistoryView = get_json(&app, "/v1/datacenters/dc001/history").await;
    assert_eq!(h.series.points.len(), 1);
    assert!(h.posture.is_none());

    for expected in 1..=3 {
        let (status, body) = call(&app, Method::POST, "/v1/sim/tick", None).await;
        assert_eq!(status, StatusCode::OK);
        let t: TickView = serde_json::from_slice(&body).unwrap();
        assert_eq!(t.tick, expected);
        assert_eq!(t.at, first[0].at + chrono::Duration::days(expected as i64));
    }
    let h: HistoryView = get_json(&app, "/v1/datacenters/dc001/history?window=3").await;
    assert_eq!(h.series.points.len(), 3);
    let posture = h.posture.unwrap();
    let p: Vec<f64> = h.series.points.iter().map(|x| x.persisted).collect();
    assert_eq!(posture.ceiling, p.iter().cloned().fold(f64::MIN, f64::max));
    assert_eq!(posture.movement, p[2] - p[0]);

    let v: DatacenterView = get_json(&app, "/v1/datacenters/dc001/scorecard").await;
    assert_eq!(v.card.at, h.series.points[2].at);
    assert_eq!(v.card.persisted, h.series.points[2].persisted);

    let (status, _) = error(&app, Method::GET, "/v1/datacenters/dc001/history?window=0", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = error(&app, Method::GET, "/v1/datacenters/dc001/history?window=x", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn concurrent_tick_conflicts() {
    let state = demo_app();
    let app = router(state.clone(), None);
    let SimLock::Held(guard) = state.lock_sim() else {
        panic!("lock should be free");
    };
    let (status, e) = error(&app, Method::POST, "/v1/sim/tick", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(e.error, "conflict");
    drop(guard);
    let (status, _) = call(&app, Method::POST, "/v1/sim/tick", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn finished_scenario_refuses_ticks() {
    let fleet = fleet();
    let cfg = ScenarioConfig {
        duration_days: 2,
        ..config()
    };
    let app = router(Arc::new(App::demo(&fleet, &[], &cfg).unwrap()), None);
    let (status, _) = call(&app, Method::POST, "/v1/sim/tick", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = error(&app, Method::POST, "/v1/sim/tick", None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn readers_never_see_a_torn_tick() {
    let state = demo_app();
    let app = router(state.clone(), None);
    let ticker = {
        let app = app.clone();
        tokio::spawn(async move {
            for _ in 0..6 {
                let (status, _) = call(&app, Method::POST, "/v1/sim/tick", None).await;
                assert!(status == StatusCode::OK || status == StatusCode::CONFLICT);
            }
        })
    };
    let mut readers = Vec::new();
    for _ in 0..4 {
        let app = app.clone();
        readers.push(tokio::spawn(async move {
            for _ in 0..20 {
                let cards: Vec<ScoreCard> = get_json(&app, "/v1/fleet/scores").await;
                assert!(cards.iter().all(|c| c.at == cards[0].at));
                let h: HistoryView = get_json(&app, "/v1/datacenters/dc000/history?window=100").await;
                let times: Vec<_> = h.series.points.iter().map(|p| p.at).collect();
                assert!(times.windows(2).all(|w| w[0] < w[1]));
                let r: WhatIfResult = {
                    let (status, body) = call(&app, Method::POST, "/v1/whatif", Some("[]")).await;
                    assert_eq!(status, StatusCode::OK);
                    serde_json::from_slice(&body).unwrap()
                };
                assert!(r
                    .before
                    .iter()
                    .chain(&r.after)
                    .all(|c| c.at == r.before.first().map_or(c.at, |f| f.at)));
            }
        }));
    }
    ticker.await.unwrap();
    for r in readers {
        r.await.unwrap();
    }
}

#[tokio::test]
async fn cors_allows_the_console_origin() {
    let origin = HeaderValue::from_static("http://localhost:5173");
    let app = router(file_app(), Some(origin.clone()));
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/v1/fleet/scores")
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "GET")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(resp.headers().get("access-control-allow-origin"), Some(&origin));
}
