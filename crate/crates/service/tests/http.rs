use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use sensor_search::ranking::compute_weights;
use sensor_search::registry::{generate_synthetic, write_csv, write_jsonl};
use sensor_search::{default_schema, search, BoundingBox, PriorityProfile, SearchRequest, SearchResponse};
use sensor_search_service::{router, AppState, RouterOptions, WeightsEcho};
use serde_json::{json, Value};
use tower::ServiceExt;

const CATALOG: &str = "\
id,type,lat,lon,accuracy,reliability,cost
a,temperature,10,10,0.9,0.5,20
b,temperature,10.5,10,0.3,0.9,5
c,humidity,-20,40,0.6,,10
";

const SCHEMA: &str = r#"
[[property]]
name = "accuracy"
polarity = "higher_is_better"
min = 0.0
max = 1.0

[[property]]
name = "reliability"
polarity = "higher_is_better"

[[property]]
name = "cost"
polarity = "lower_is_better"
"#;

fn app() -> (Router, AppState) {
    let state = AppState::new(sensor_search::PropertySchema::from_toml_str(SCHEMA).unwrap());
    (router(state.clone(), &RouterOptions::default()), state)
}

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn loaded() -> Router {
    let (app, _) = app();
    let (status, body) = call_json(&app, "POST", "/sensors/bulk?format=csv", CATALOG).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    app
}

#[tokio::test]
async fn everything_waits_for_the_first_catalog() {
    let (app, _) = app();
    let (status, body) = call_json(&app, "GET", "/health", Body::empty()).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body, json!({ "status": "no_snapshot" }));
    for (method, uri, body) in [
        ("GET", "/schema", String::new()),
        ("GET", "/sensors/a", String::new()),
        ("POST", "/search", json!({ "query": "n = 1" }).to_string()),
    ] {
        let (status, body) = call_json(&app, method, uri, body).await;
        assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert_eq!(body["error"], "no_snapshot");
    }
}

#[tokio::test]
async fn bulk_load_publishes_new_versions() {
    let (app, state) = app();
    let (status, body) = call_json(&app, "POST", "/sensors/bulk?format=csv", CATALOG).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({ "version": 1, "sensors": 3, "format": "csv" }));

    let snapshot = state.registry.snapshot().unwrap();
    let mut jsonl = Vec::new();
    write_jsonl(&snapshot, &mut jsonl).unwrap();
    let (status, body) = call_json(&app, "POST", "/sensors/bulk?format=jsonl", jsonl).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], 2);

    let (status, body) = call_json(&app, "GET", "/health", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["version"], 2);
    assert_eq!(body["sensors"], 3);
}

#[tokio::test]
async fn bad_catalogs_are_rejected_and_leave_the_snapshot_alone() {
    let app = loaded().await;
    let bad = "id,type,lat,lon,accuracy\nz,t,0,0,not-a-number\n";
    let (status, body) = call_json(&app, "POST", "/sensors/bulk?format=csv", bad).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_catalog");
    let (status, body) = call_json(&app, "POST", "/sensors/bulk?format=xml", CATALOG).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_format");
    let (_, body) = call_json(&app, "GET", "/health", Body::empty()).await;
    assert_eq!((body["version"].clone(), body["sensors"].clone()), (json!(1), json!(3)));
}

#[tokio::test]
async fn schema_and_sensor_lookup() {
    let app = loaded().await;
    let (status, body) = call_json(&app, "GET", "/schema", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let names: Vec<&str> = body["properties"].as_array().unwrap().iter().map(|p| p["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["accuracy", "reliability", "cost"]);
    assert_eq!(body["properties"][2]["polarity"], "lower_is_better");

    let (status, body) = call_json(&app, "GET", "/sensors/c", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["type"], "humidity");
    assert_eq!(body["values"]["accuracy"], 0.6);
    assert!(body["values"].get("reliability").is_none_or(Value::is_null));

    let (status, body) = call_json(&app, "GET", "/sensors/nope", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "not_found");
}

#[tokio::test]
async fn search_ranks_and_reports_phases() {
    let app = loaded().await;
    let request = json!({
        "query": "type = \"temperature\" AND n = 1",
        "profile": { "scale": 100, "entries": { "cost": { "checked": true, "slider": 80 }, "accuracy": { "checked": true, "slider": 20 } } }
    });
    let (status, body) = call_json(&app, "POST", "/search", request.to_string()).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let response: SearchResponse = serde_json::from_value(body).unwrap();
    assert_eq!(response.result_ids(), ["b"]);
    assert!(response.ranked && !response.truncated);
    assert_eq!(response.candidates_indexed, 2);
    assert_eq!(response.weights["cost"], 0.8);
    for phase in ["filter", "normalize", "cphf", "index", "rank", "select"] {
        assert!(response.phase_timings.phase(phase).unwrap() >= 0.0);
    }
}

#[tokio::test]
async fn short_result_sets_come_back_unranked() {
    let app = loaded().await;
    let request = json!({ "query": "n = 1000", "profile": { "entries": { "accuracy": { "checked": true, "slider": 1 } } } });
    let (status, body) = call_json(&app, "POST", "/search", request.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["truncated"], true);
    assert_eq!(body["ranked"], false);
    let ids: Vec<&str> = body["results"].as_array().unwrap().iter().map(|r| r["sensor_id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
}

#[tokio::test]
async fn search_errors_are_client_errors() {
    let app = loaded().await;
    let cases = [
        (json!({ "query": "accuracy between 0.9 and", "profile": {} }), "invalid_query"),
        (json!({ "query": "n = 1", "profile": { "entries": { "bogus": { "checked": true, "slider": 1 } } } }), "invalid_profile"),
        (json!({ "query": "n = 1", "use_cphf": true, "margin_percent": -5.0, "profile": { "entries": { "cost": { "checked": true, "slider": 1 } } } }), "invalid_request"),
    ];
    for (request, kind) in cases {
        let (status, body) = call_json(&app, "POST", "/search", request.to_string()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{request}");
        assert_eq!(body["error"], kind, "{body}");
        assert!(!body["message"].as_str().unwrap().is_empty());
    }
    let (status, _) = call(&app, "POST", "/search", "{not json").await;
    assert!(status.is_client_error());
}

#[tokio::test]
async fn csv_search_output() {
    let app = loaded().await;
    let request = json!({ "query": "n = 2", "profile": { "entries": { "accuracy": { "checked": true, "slider": 1 } } } });
    let (status, bytes) = call(&app, "POST", "/search?format=csv", request.to_string()).await;
    assert_eq!(status, StatusCode::OK);
    let text = String::from_utf8(bytes).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("rank,id,type,lat,lon,cpwi"));
    assert!(lines[1].starts_with("1,a,"));
    assert_eq!(lines.len(), 3);
    let (status, _) = call(&app, "POST", "/search?format=yaml", request.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn debug_echo_matches_library_weights() {
    let (app, _) = app();
    let profile = PriorityProfile::new(10)
        .check("reliability", 6)
        .check("accuracy", 3)
        .check("cost", 1)
        .uncheck("energy", 9)
        .ideal("cost", 0.25);
    let (status, body) = call_json(&app, "POST", "/debug/weights", serde_json::to_string(&profile).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let echo: WeightsEcho = serde_json::from_value(body).unwrap();
    assert_eq!(echo.profile, profile);
    let expected: Vec<(String, f64)> = compute_weights(&profile).unwrap().iter().map(|(k, w)| (k.to_string(), w)).collect();
    assert_eq!(echo.weights.into_iter().collect::<Vec<_>>(), expected);

    let (status, body) = call_json(&app, "POST", "/debug/weights", json!({ "entries": {} }).to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_profile");
}

#[tokio::test]
async fn service_matches_the_library_and_cphf_saturates() {
    let (app, state) = {
        let state = AppState::new(default_schema());
        (router(state.clone(), &RouterOptions::default()), state)
    };
    let snapshot = generate_synthetic(3_000, &default_schema(), 5, BoundingBox::WORLD).unwrap();
    let mut csv = Vec::new();
    write_csv(&snapshot, &mut csv).unwrap();
    let (status, _) = call(&app, "POST", "/sensors/bulk", csv).await;
    assert_eq!(status, StatusCode::OK);
    let published = state.registry.snapshot().unwrap();

    let profile = sensor_search::bench::seeded_profile(&default_schema(), 3);
    let exact = SearchRequest::new("type in [\"temperature\", \"humidity\"] AND n = 20", profile);
    let saturated = exact.clone().with_cphf(1e6);
    let mut tables = Vec::new();
    for request in [&exact, &saturated] {
        let (status, body) = call_json(&app, "POST", "/search", serde_json::to_string(request).unwrap()).await;
        assert_eq!(status, StatusCode::OK);
        let over_http: SearchResponse = serde_json::from_value(body).unwrap();
        let direct = search(&published, request).unwrap();
        assert_eq!(over_http.results, direct.results);
        tables.push(over_http.results);
    }
    assert_eq!(tables[0], tables[1]);
}

#[tokio::test]
async fn concurrent_searches_agree_with_serial_ones() {
    let app = loaded().await;
    let request = json!({ "query": "n = 2", "profile": { "entries": { "reliability": { "checked": true, "slider": 3 }, "cost": { "checked": true, "slider": 1 } } } }).to_string();
    let (_, serial) = call_json(&app, "POST", "/search", request.clone()).await;
    let handles: Vec<_> = (0..16)
        .map(|_| {
            let app = app.clone();
            let request = request.clone();
            tokio::spawn(async move { call_json(&app, "POST", "/search", request).await.1 })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap()["results"], serial["results"]);
    }
}

#[tokio::test]
async fn static_ui_is_served_from_the_fallback() {
    let dir = std::env::temp_dir().join(format!("sensor-search-ui-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("index.html"), "<html>ui</html>").unwrap();
    let app = router(
        AppState::new(default_schema()),
        &RouterOptions {
            ui_dir: Some(dir.clone()),
            cors: true,
        },
    );
    let (status, body) = call(&app, "GET", "/index.html", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<html>ui</html>");
    let (status, _) = call(&app, "GET", "/health", Body::empty()).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    std::fs::remove_dir_all(dir).unwrap();
}
