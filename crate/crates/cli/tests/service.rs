mod common;

use std::path::Path;
use std::sync::{Arc, LazyLock};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::assert_schema;
use http_body_util::BodyExt;
use npcolor::colorimetry::{delta_e76, hue_difference, parse_hex, srgb8_to_lab};
use npcolor::gamut::{build_gamut, GamutDefinition, GamutModel};
use npcolor::press::synth_np_table;
use npcolor::{PressModel, ViewingCondition};
use npcolor_cli::config::ServiceConfig;
use npcolor_cli::service::{router, AppState};
use npcolor_cli::session::SessionStore;
use serde_json::{json, Value};
use tower::ServiceExt;

static GAMUT: LazyLock<GamutModel> = LazyLock::new(|| {
    let press = PressModel::demo_cmyk();
    build_gamut(&synth_np_table(&press).unwrap(), press.yn(), &ViewingCondition::d50()).unwrap()
});

fn app() -> Router {
    let state = AppState::new("demo-cmyk", GAMUT.clone(), SessionStore::in_memory()).unwrap();
    router(Arc::new(state), None)
}

fn app_with_log(log: &Path) -> Router {
    let sessions = SessionStore::open(log, &GAMUT).unwrap();
    router(Arc::new(AppState::new("demo-cmyk", GAMUT.clone(), sessions).unwrap()), None)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value, bytes)
}

async fn create(app: &Router, body: Value) -> (String, Value) {
    let (status, v, _) = call(app, "POST", "/api/spot/session", Some(&body.to_string())).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    assert_schema("session_created", &v);
    (v["session_id"].as_str().unwrap().to_owned(), v["grid"].clone())
}

fn hue(lab: &Value) -> f64 {
    let (a, b) = (lab["a"].as_f64().unwrap(), lab["b"].as_f64().unwrap());
    b.atan2(a).to_degrees().rem_euclid(360.0)
}

#[tokio::test]
async fn health_and_mesh() {
    let app = app();
    let (status, v, _) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_schema("health", &v);
    assert_eq!(v, json!({"status": "ok", "press_id": "demo-cmyk"}));

    let (status, v, _) = call(&app, "GET", "/api/gamut/mesh", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_schema("gamut_mesh", &v);
    assert_eq!(v, serde_json::to_value(GAMUT.export_mesh()).unwrap());
}

#[tokio::test]
async fn default_session_is_a_seven_by_seven_grid() {
    let app = app();
    let (_, grid) = create(&app, json!({"target_lab": [50.0, 20.0, -30.0]})).await;
    let cells = grid["cells"].as_array().unwrap();
    assert_eq!(cells.len() + grid["ragged"].as_array().unwrap().len(), 49);
    let center = &grid["center"];
    assert_eq!(center["hue_offset"], 0.0);
    let best = cells.iter().map(|c| c["de_to_target"].as_f64().unwrap()).fold(f64::INFINITY, f64::min);
    assert!(center["de_to_target"].as_f64().unwrap() <= best + 1e-12);
}

#[tokio::test]
async fn confirm_without_select_returns_the_closest_match() {
    let app = app();
    let (id, grid) = create(&app, json!({"target_lab": [60.0, -40.0, 10.0], "n_h": 2, "n_l": 1})).await;
    assert_eq!(grid["cells"].as_array().unwrap().len() + grid["ragged"].as_array().unwrap().len(), 15);
    let (status, v, _) = call(&app, "POST", &format!("/api/spot/session/{id}/confirm"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_schema("confirm_response", &v);
    let center = &grid["center"];
    assert_eq!(v["final"]["lab"], center["lab"]);
    assert_eq!(v["final"]["npac"], center["npac"]);
    assert_eq!(v["final"]["srgb_hex"], center["srgb_hex"]);

    let (status, v, _) = call(&app, "GET", &format!("/api/spot/session/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_schema("spot_session", &v);
    assert_eq!(v["final"]["lab"], center["lab"]);
}

#[tokio::test]
async fn selecting_the_center_is_a_fixed_point() {
    let app = app();
    let (id, grid) = create(&app, json!({"target_lab": [55.0, 30.0, 30.0]})).await;
    let uri = format!("/api/spot/session/{id}/select");
    for _ in 0..3 {
        let (status, v, _) = call(&app, "POST", &uri, Some(r#"{"hue_offset":0,"lightness_offset":0}"#)).await;
        assert_eq!(status, StatusCode::OK);
        assert_schema("grid_response", &v);
        assert_eq!(v["grid"], grid);
    }
    let (_, v, _) = call(&app, "GET", &format!("/api/spot/session/{id}"), None).await;
    assert_eq!(v["history"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn hue_pick_recenters_on_the_surface() {
    let app = app();
    let (id, grid) = create(&app, json!({"target_lab": [50.0, 20.0, -30.0]})).await;
    let h0 = hue(&grid["center"]["lab"]);
    let (status, v, _) = call(
        &app,
        "POST",
        &format!("/api/spot/session/{id}/select"),
        Some(r#"{"hue_offset":4,"lightness_offset":0}"#),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let h1 = hue(&v["grid"]["center"]["lab"]);
    assert!((hue_difference(h0, h1) - 4.0).abs() < 0.5, "{h0} -> {h1}");
    // Picking back lands near the starting center.
    let (_, v, _) = call(
        &app,
        "POST",
        &format!("/api/spot/session/{id}/select"),
        Some(r#"{"hue_offset":-4,"lightness_offset":0}"#),
    )
    .await;
    let back: npcolor::Lab = serde_json::from_value(v["grid"]["center"]["lab"].clone()).unwrap();
    let start: npcolor::Lab = serde_json::from_value(grid["center"]["lab"].clone()).unwrap();
    assert!(delta_e76(&back, &start) < 1.0, "{back:?} vs {start:?}");
}

#[tokio::test]
async fn hex_targets_are_converted_server_side() {
    let app = app();
    let (_, grid) = create(&app, json!({"target_hex": "#3366cc"})).await;
    let want = srgb8_to_lab(parse_hex("#3366cc").unwrap(), &ViewingCondition::d50());
    assert_eq!(grid["target"], serde_json::to_value(want).unwrap());
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let check = |status: StatusCode, v: &Value, want: StatusCode| {
        assert_eq!(status, want, "{v}");
        assert_schema("error", v);
    };
    for body in [
        "not json",
        "{}",
        r#"{"target_lab":[50,0]}"#,
        r#"{"target_lab":[150,0,0]}"#,
        r##"{"target_lab":[50,0,0],"target_hex":"#000000"}"##,
        r##"{"target_hex":"#12345"}"##,
        r#"{"target_lab":[50,0,0],"n_h":0}"#,
        r#"{"target_lab":[50,0,0],"step_l":-1}"#,
        r#"{"target_lab":[50,0,0],"chroma":1}"#,
    ] {
        let (status, v, _) = call(&app, "POST", "/api/spot/session", Some(body)).await;
        check(status, &v, StatusCode::BAD_REQUEST);
    }
    for (method, uri) in [
        ("GET", "/api/spot/session/nope"),
        ("POST", "/api/spot/session/nope/select"),
        ("POST", "/api/spot/session/nope/confirm"),
        ("GET", "/api/nothing"),
    ] {
        let (status, v, _) = call(&app, method, uri, Some(r#"{"hue_offset":0,"lightness_offset":0}"#)).await;
        check(status, &v, StatusCode::NOT_FOUND);
    }

    let (id, _) = create(&app, json!({"target_lab": [50.0, 0.0, 0.0]})).await;
    let select = format!("/api/spot/session/{id}/select");
    let (status, v, _) = call(&app, "POST", &select, Some(r#"{"hue_offset":1.5,"lightness_offset":0}"#)).await;
    check(status, &v, StatusCode::BAD_REQUEST);
    let (status, v, _) = call(&app, "POST", &select, Some(r#"{"hue_offset":"x"}"#)).await;
    check(status, &v, StatusCode::BAD_REQUEST);

    let confirm = format!("/api/spot/session/{id}/confirm");
    assert_eq!(call(&app, "POST", &confirm, None).await.0, StatusCode::OK);
    let (status, v, _) = call(&app, "POST", &confirm, None).await;
    check(status, &v, StatusCode::CONFLICT);
    let (status, v, _) = call(&app, "POST", &select, Some(r#"{"hue_offset":0,"lightness_offset":0}"#)).await;
    check(status, &v, StatusCode::CONFLICT);
}

#[tokio::test]
async fn sessions_survive_a_restart_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.jsonl");
    let app = app_with_log(&log);
    let (a, _) = create(&app, json!({"target_lab": [50.0, 20.0, -30.0]})).await;
    let (b, _) = create(&app, json!({"target_lab": [70.0, -20.0, 40.0], "n_h": 1, "n_l": 2})).await;
    call(&app, "POST", &format!("/api/spot/session/{a}/select"), Some(r#"{"hue_offset":-4,"lightness_offset":3}"#)).await;
    call(&app, "POST", &format!("/api/spot/session/{a}/select"), Some(r#"{"hue_offset":0,"lightness_offset":0}"#)).await;
    call(&app, "POST", &format!("/api/spot/session/{b}/confirm"), None).await;
    let before_a = call(&app, "GET", &format!("/api/spot/session/{a}"), None).await.2;
    let before_b = call(&app, "GET", &format!("/api/spot/session/{b}"), None).await.2;
    drop(app);

    for line in std::fs::read_to_string(&log).unwrap().lines() {
        assert_schema("session_event", &serde_json::from_str(line).unwrap());
    }

    let restored = app_with_log(&log);
    assert_eq!(call(&restored, "GET", &format!("/api/spot/session/{a}"), None).await.2, before_a);
    assert_eq!(call(&restored, "GET", &format!("/api/spot/session/{b}"), None).await.2, before_b);
    let (status, _, _) = call(&restored, "POST", &format!("/api/spot/session/{b}/confirm"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // A torn last line, as left by a crash mid-write, is ignored.
    let mut text = std::fs::read_to_string(&log).unwrap();
    text.push_str(r#"{"event":"selected","session_id":"#);
    std::fs::write(&log, text).unwrap();
    let restored = app_with_log(&log);
    assert_eq!(call(&restored, "GET", &format!("/api/spot/session/{a}"), None).await.2, before_a);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_picks_on_one_session_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("sessions.jsonl");
    let app = app_with_log(&log);
    let (id, _) = create(&app, json!({"target_lab": [50.0, 20.0, -30.0]})).await;
    let uri = format!("/api/spot/session/{id}/select");
    let tasks: Vec<_> = (0..8)
        .map(|_| {
            let app = app.clone();
            let uri = uri.clone();
            tokio::spawn(async move { call(&app, "POST", &uri, Some(r#"{"hue_offset":0,"lightness_offset":0}"#)).await.0 })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let live = call(&app, "GET", &format!("/api/spot/session/{id}"), None).await.2;
    let v: Value = serde_json::from_slice(&live).unwrap();
    assert_eq!(v["history"].as_array().unwrap().len(), 8);
    let restored = app_with_log(&log);
    assert_eq!(call(&restored, "GET", &format!("/api/spot/session/{id}"), None).await.2, live);
}

#[tokio::test]
async fn static_files_are_served_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>picker</title>").unwrap();
    let state = AppState::new("demo-cmyk", GAMUT.clone(), SessionStore::in_memory()).unwrap();
    let app = router(Arc::new(state), Some(dir.path()));
    let req = Request::builder().uri("/index.html").body(Body::empty()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let body = resp.into_body().collect().await.unwrap().to_bytes();
    assert!(body.starts_with(b"<!doctype html>"));
    assert_eq!(call(&app, "GET", "/api/health", None).await.0, StatusCode::OK);
}

#[test]
fn config_file_and_environment_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("config.json");
    let file = json!({"press_path": "p.json", "listen_addr": "0.0.0.0:9000", "session_log_path": "s.jsonl"});
    assert_schema("service_config", &file);
    std::fs::write(&path, file.to_string()).unwrap();

    let none = |_: &str| None;
    let c = ServiceConfig::load_with(Some(&path), none).unwrap();
    assert_eq!(c.listen_addr, "0.0.0.0:9000");
    assert_eq!(c.gamut_cache_path, None);

    let env = |k: &str| match k {
        "NPCOLOR_LISTEN_ADDR" => Some("127.0.0.1:1".to_owned()),
        "NPCOLOR_GAMUT_CACHE_PATH" => Some("g.json".to_owned()),
        _ => None,
    };
    let c = ServiceConfig::load_with(Some(&path), env).unwrap();
    assert_eq!(c.listen_addr, "127.0.0.1:1");
    assert_eq!(c.gamut_cache_path.as_deref(), Some(Path::new("g.json")));
    assert_eq!(c.press_path, Path::new("p.json"));

    assert!(ServiceConfig::load_with(None, none).is_err());
    let only_env = |k: &str| (k == "NPCOLOR_PRESS_PATH").then(|| "demo_cmyk.json".to_owned());
    let c = ServiceConfig::load_with(None, only_env).unwrap();
    assert_eq!(c.session_log_path, Path::new("sessions.jsonl"));

    std::fs::write(&path, r#"{"press_path":"p.json","colour":"red"}"#).unwrap();
    assert!(ServiceConfig::load_with(Some(&path), none).is_err());
}

#[test]
fn gamut_cache_is_written_then_reused() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ServiceConfig::new("demo_cmyk.json");
    config.gamut_cache_path = Some(dir.path().join("gamut.json"));
    config.session_log_path = dir.path().join("sessions.jsonl");
    let first = AppState::from_config(&config).unwrap();
    assert!(config.gamut_cache_path.as_ref().unwrap().exists());
    let second = AppState::from_config(&config).unwrap();
    assert_eq!(first.gamut.export_mesh(), second.gamut.export_mesh());
    assert_eq!(first.press_id, "demo-cmyk");

    // A cache from another press is refused.
    let other = PressModel::demo_cmyk().apply_drift(&[0.9, 1.0, 1.0, 1.0]).unwrap();
    let g = build_gamut(&synth_np_table(&other).unwrap(), other.yn(), &ViewingCondition::d50()).unwrap();
    std::fs::write(config.gamut_cache_path.as_ref().unwrap(), serde_json::to_string(&GamutDefinition::of(&g)).unwrap()).unwrap();
    assert!(AppState::from_config(&config).is_err());
}
