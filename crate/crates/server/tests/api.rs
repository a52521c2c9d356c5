use axum::body::Body;
use axum::http::{Request, StatusCode};
use falldet::synthetic::{poses, standard_suite, write_suite, Script};
use falldet::wire::{ErrorBody, ErrorCode, EvaluateResponse, FramesAccepted, SessionInfo, SweepResponse};
use falldet::{load_manifest, write_frame_line, MetricsJson};
use falldet_server::{router, AppState};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use tower::ServiceExt;

async fn call(state: &AppState, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.into())
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

fn parse<T: DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

fn stand_then_lie() -> String {
    Script::new(30.0, poses::standing())
        .hold(30)
        .move_to(poses::lying_curled(), 1)
        .hold(29)
        .render()
        .iter()
        .map(|f| write_frame_line(f) + "\n")
        .collect()
}

async fn new_session(state: &AppState, body: &str) -> SessionInfo {
    let (status, bytes) = call(state, "POST", "/v1/sessions", body.to_string()).await;
    assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&bytes));
    parse(&bytes)
}

#[tokio::test]
async fn health_reports_ok() {
    let (status, bytes) = call(&AppState::default(), "GET", "/health", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse::<serde_json::Value>(&bytes)["status"], "ok");
}

#[tokio::test]
async fn session_streams_frames_in_batches() {
    let state = AppState::default();
    let s = new_session(&state, "").await;
    assert_eq!(s.frames_processed, 0);
    assert!(!s.calibrated);

    let text = stand_then_lie();
    let lines: Vec<&str> = text.lines().collect();
    let uri = format!("/v1/sessions/{}/frames", s.session_id);
    let mut events = Vec::new();
    for chunk in lines.chunks(7) {
        let (status, bytes) = call(&state, "POST", &uri, chunk.join("\n")).await;
        assert_eq!(status, StatusCode::OK);
        let r: FramesAccepted = parse(&bytes);
        events.extend(r.events);
    }
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].frame, 39);
    assert_eq!(events[0].score, 5.0);

    let (_, bytes) = call(&state, "GET", &format!("/v1/sessions/{}", s.session_id), Body::empty()).await;
    let info: SessionInfo = parse(&bytes);
    assert_eq!((info.frames_processed, info.events_emitted), (60, 1));
    assert!(info.calibrated);
    assert_eq!(info.cooldown_remaining, 40);
}

#[tokio::test]
async fn bad_batch_leaves_session_untouched() {
    let state = AppState::default();
    let s = new_session(&state, "").await;
    let uri = format!("/v1/sessions/{}/frames", s.session_id);
    let text = stand_then_lie();
    let lines: Vec<&str> = text.lines().collect();

    let (status, _) = call(&state, "POST", &uri, lines[..5].join("\n")).await;
    assert_eq!(status, StatusCode::OK);

    let garbage = format!("{}\n{{\"frame\": 6", lines[5]);
    let (status, bytes) = call(&state, "POST", &uri, garbage).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::MalformedRecord);

    // frame 6 then a replay of frame 2: rejected as a whole
    let replayed = format!("{}\n{}", lines[5], lines[2]);
    let (status, bytes) = call(&state, "POST", &uri, replayed).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::OrderViolation);

    let (_, bytes) = call(&state, "GET", &format!("/v1/sessions/{}", s.session_id), Body::empty()).await;
    assert_eq!(parse::<SessionInfo>(&bytes).frames_processed, 5);

    // an earlier batch cannot be resent either
    let (status, _) = call(&state, "POST", &uri, lines[0].to_string()).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn reset_and_delete() {
    let state = AppState::default();
    let s = new_session(&state, "").await;
    let base = format!("/v1/sessions/{}", s.session_id);
    call(&state, "POST", &format!("{base}/frames"), stand_then_lie()).await;

    let (status, bytes) = call(&state, "POST", &format!("{base}/reset"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    let info: SessionInfo = parse(&bytes);
    assert_eq!((info.frames_processed, info.events_emitted, info.calibrated), (0, 0, false));

    // after a reset the same stream is accepted again and behaves identically
    let (_, bytes) = call(&state, "POST", &format!("{base}/frames"), stand_then_lie()).await;
    assert_eq!(parse::<FramesAccepted>(&bytes).events.len(), 1);

    let (status, _) = call(&state, "DELETE", &base, Body::empty()).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    assert_eq!(state.session_count(), 0);
    let (status, bytes) = call(&state, "GET", &base, Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::NotFound);
    let (status, _) = call(&state, "GET", "/v1/sessions/not-a-uuid", Body::empty()).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn session_config_is_validated() {
    let state = AppState::default();
    let (status, bytes) = call(&state, "POST", "/v1/sessions", r#"{"config":{"persistence_fraction":0}}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::InvalidConfig);

    let (status, bytes) = call(&state, "POST", "/v1/sessions", r#"{"config":{"bogus_key":1}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::InvalidConfig);

    let s = new_session(&state, r#"{"config":{"vote_threshold":3.0,"buffer_len":10}}"#).await;
    assert_eq!(s.config.vote_threshold, 3.0);
    assert_eq!(s.config.buffer_len, 10);
    assert_eq!(s.config.cooldown_frames, 60);
}

#[tokio::test]
async fn metrics_endpoint_matches_published_table() {
    let (status, bytes) = call(
        &AppState::default(),
        "POST",
        "/v1/metrics",
        r#"{"tp":75,"fn":1,"fp":10,"tn":44}"#,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let m: MetricsJson = parse(&bytes);
    assert_eq!(m.accuracy, Some(0.9154));
    assert_eq!(m.precision, Some(0.8824));
    assert_eq!(m.recall, Some(0.9868));
    assert_eq!(m.specificity, Some(0.8148));
    assert_eq!(m.f1, Some(0.9317));

    let (_, bytes) = call(&AppState::default(), "POST", "/v1/metrics", r#"{"tp":0,"fn":0,"fp":0,"tn":0}"#).await;
    let v: serde_json::Value = parse(&bytes);
    assert!(v["accuracy"].is_null() && v["f1"].is_null());
}

#[tokio::test]
async fn evaluate_and_sweep_over_synthetic_suite() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = load_manifest(&write_suite(&standard_suite(), dir.path()).unwrap()).unwrap();
    let state = AppState::default();

    let body = serde_json::json!({ "manifest": manifest }).to_string();
    let (status, bytes) = call(&state, "POST", "/v1/evaluate", body).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    let r: EvaluateResponse = parse(&bytes);
    assert_eq!((r.metrics.tp, r.metrics.fn_, r.metrics.fp, r.metrics.tn), (6, 0, 0, 6));
    assert_eq!(r.clips.len(), 12);

    let body = serde_json::json!({ "manifest": manifest, "grid": "vote_threshold=3,4,5" }).to_string();
    let (status, bytes) = call(&state, "POST", "/v1/sweep", body).await;
    assert_eq!(status, StatusCode::OK);
    let rows = parse::<SweepResponse>(&bytes).rows;
    assert_eq!(rows.len(), 3);
    assert!(rows[0].metrics.recall >= rows[2].metrics.recall);

    let body = serde_json::json!({ "manifest": manifest, "grid": "" }).to_string();
    let (status, bytes) = call(&state, "POST", "/v1/sweep", body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::InvalidConfig);
}

#[tokio::test]
async fn evaluate_reports_manifest_and_io_problems() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = load_manifest(&write_suite(&standard_suite(), dir.path()).unwrap()).unwrap();
    let state = AppState::default();

    let mut dup = manifest.clone();
    dup.push(dup[0].clone());
    let (status, bytes) = call(&state, "POST", "/v1/evaluate", serde_json::json!({ "manifest": dup }).to_string()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::Manifest);

    let replay: Vec<_> = manifest[1..]
        .iter()
        .map(|e| serde_json::json!({"clip_id": e.clip_id, "predicted": "FALL"}))
        .collect();
    let body = serde_json::json!({ "manifest": manifest, "replay": replay }).to_string();
    let (_, bytes) = call(&state, "POST", "/v1/evaluate", body).await;
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::Manifest);

    manifest[0].stream_path = dir.path().join("missing.jsonl");
    let (_, bytes) = call(&state, "POST", "/v1/evaluate", serde_json::json!({ "manifest": manifest }).to_string()).await;
    assert_eq!(parse::<ErrorBody>(&bytes).code, ErrorCode::Io);
}
