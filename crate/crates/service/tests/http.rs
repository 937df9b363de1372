use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kgacc::cost::{CostParams, Requirement};
use kgacc::kg::KnowledgeGraph;
use kgacc::labels::{gen_rem, LabelSource};
use kgacc::orchestrator::{run_static, DesignSpec, OracleAnnotator, SessionConfig};
use kgacc::synth::graph_from_sizes;
use kgacc_service::{router, AppState, Board, ManualClock, DEFAULT_LEASE};
use serde_json::{json, Value};
use tower::ServiceExt;

const SIZES: [usize; 14] = [5, 1, 2, 7, 3, 1, 4, 9, 2, 1, 6, 3, 2, 4];

fn setup() -> (Router, Arc<ManualClock>, KnowledgeGraph, LabelSource) {
    let g = graph_from_sizes(&SIZES);
    assert_eq!(g.triple_count(), 50);
    let ls = gen_rem(&g, 0.15, 11).unwrap();
    let mut board = Board::new(DEFAULT_LEASE);
    board.add_graph("toy", Arc::new(g.clone()));
    let clock = Arc::new(ManualClock::default());
    (router(AppState::new(board, clock.clone())), clock, g, ls)
}

async fn call(app: &Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create(app: &Router, body: Value) -> String {
    let (st, v) = call(app, "POST", "/sessions", None, Some(body)).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

fn labels_for(task: &Value, ls: &LabelSource) -> Value {
    let l: Vec<bool> =
        task["items"].as_array().unwrap().iter().map(|i| ls.get(i["position"].as_u64().unwrap() as usize)).collect();
    json!({ "labels": l })
}

#[tokio::test]
async fn http_annotation_matches_the_oracle_backend() {
    let (app, _, g, ls) = setup();
    let body = json!({"graph": "toy", "kind": "twcs", "m": 3, "epsilon": 0.1, "alpha": 0.05, "seed": 42});
    let sid = create(&app, body).await;
    let (st, before) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(before["mu_hat"].is_null());
    assert_eq!(before["status"], "awaiting_annotations");

    let mut tasks = 0;
    loop {
        let (st, t) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), Some("ann"), None).await;
        if st == StatusCode::NO_CONTENT {
            break;
        }
        assert_eq!(st, StatusCode::OK);
        let uri = format!("/tasks/{}/labels", t["task_id"].as_str().unwrap());
        let (st, out) = call(&app, "POST", &uri, Some("ann"), Some(labels_for(&t, &ls))).await;
        assert_eq!(st, StatusCode::OK, "{out}");
        tasks += 1;
    }
    assert!(tasks > 0);

    let (_, view) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;
    assert_eq!(view["status"], "satisfied");
    let cfg = SessionConfig::new(
        DesignSpec { kind: kgacc::sampling::DesignKind::Twcs, m: Some(3), strata: None }.resolve(&g).unwrap(),
        Requirement::new(0.1, 0.05).unwrap(),
        CostParams::default(),
        42,
    );
    assert_eq!(serde_json::to_value(&cfg).unwrap(), view["config"]);
    let (est, report, _) = run_static(&g.population(), cfg, &mut OracleAnnotator::new(&ls)).unwrap();
    assert_eq!(view["mu_hat"].as_f64().unwrap(), est.mu_hat);
    assert_eq!(view["moe"].as_f64().unwrap(), est.moe);
    assert_eq!(view["n_units"].as_u64().unwrap() as usize, est.n_units);
    assert_eq!(view["cost_hours"].as_f64().unwrap(), report.hours);
    assert_eq!(view["progress"]["tasks_submitted"].as_u64().unwrap(), tasks);
    assert_eq!(view["progress"]["tasks_open"].as_u64().unwrap(), 0);
}

#[tokio::test]
async fn stratified_sessions_run_to_completion() {
    let (app, _, _, ls) = setup();
    let body = json!({"graph": "toy", "kind": "stratified_twcs", "m": 2, "strata": 2, "epsilon": 0.15, "seed": 5});
    let sid = create(&app, body).await;
    while let (StatusCode::OK, t) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), Some("a"), None).await {
        let uri = format!("/tasks/{}/labels", t["task_id"].as_str().unwrap());
        assert_eq!(call(&app, "POST", &uri, Some("a"), Some(labels_for(&t, &ls))).await.0, StatusCode::OK);
    }
    let (_, view) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;
    assert_eq!(view["status"], "satisfied");
    assert!(view["stopping_moe"].as_f64().unwrap() <= 0.15);
}

#[tokio::test]
async fn resubmission_is_a_no_op() {
    let (app, _, _, ls) = setup();
    let sid = create(&app, json!({"graph": "toy", "kind": "twcs", "m": 2, "epsilon": 0.1, "seed": 1})).await;
    let (_, t) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), Some("a"), None).await;
    let tid = t["task_id"].as_str().unwrap().to_string();
    let uri = format!("/tasks/{tid}/labels");
    let good = labels_for(&t, &ls);
    let (st, first) = call(&app, "POST", &uri, Some("a"), Some(good.clone())).await;
    assert_eq!((st, first["duplicate"].as_bool()), (StatusCode::OK, Some(false)));
    let (_, est1) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;

    let flipped: Vec<bool> = good["labels"].as_array().unwrap().iter().map(|b| !b.as_bool().unwrap()).collect();
    let (st, second) = call(&app, "POST", &uri, Some("b"), Some(json!({ "labels": flipped }))).await;
    assert_eq!((st, second["duplicate"].as_bool()), (StatusCode::OK, Some(true)));
    let (_, est2) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;
    assert_eq!(est1, est2);
    let (_, stored) = call(&app, "GET", &format!("/tasks/{tid}"), None, None).await;
    let kept: Vec<Value> = stored["items"].as_array().unwrap().iter().map(|i| i["label"].clone()).collect();
    assert_eq!(Value::from(kept), good["labels"]);
}

#[tokio::test]
async fn error_statuses() {
    let (app, _, _, _) = setup();
    let (st, _) = call(&app, "POST", "/sessions", None, Some(json!({"graph": "nope", "kind": "srs"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/sessions", None, Some(json!({"graph": "toy", "kind": "twcs"}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) =
        call(&app, "POST", "/sessions", None, Some(json!({"graph": "toy", "kind": "srs", "epsilon": 2.0}))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
    let (st, _) = call(&app, "GET", "/sessions/s9999/estimate", None, None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", "/sessions/s9999/tasks/next", Some("a"), None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "POST", "/tasks/t999999/labels", Some("a"), Some(json!({"labels": []}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);

    let sid = create(&app, json!({"graph": "toy", "kind": "twcs", "m": 2, "seed": 9})).await;
    let (st, v) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), None, None).await;
    assert_eq!(st, StatusCode::UNAUTHORIZED, "{v}");
    let (_, t) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), Some("a"), None).await;
    let uri = format!("/tasks/{}/labels", t["task_id"].as_str().unwrap());
    let n = t["items"].as_array().unwrap().len();
    let (st, _) = call(&app, "POST", &uri, None, Some(json!({ "labels": vec![true; n] }))).await;
    assert_eq!(st, StatusCode::UNAUTHORIZED);
    let (st, _) = call(&app, "POST", &uri, Some("b"), Some(json!({ "labels": vec![true; n] }))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    let (st, _) = call(&app, "POST", &uri, Some("a"), Some(json!({ "labels": vec![true; n + 1] }))).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);

    // a task nobody leased yet cannot be submitted
    let (_, t2) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), Some("a"), None).await;
    assert_eq!((t["task_id"].as_str(), t2["task_id"].as_str()), (Some("t000001"), Some("t000002")));
    let (st, v) = call(&app, "GET", "/tasks/t000003", None, None).await;
    assert_eq!((st, v["status"].as_str()), (StatusCode::OK, Some("open")));
    let n = v["items"].as_array().unwrap().len();
    let (st, _) =
        call(&app, "POST", "/tasks/t000003/labels", Some("a"), Some(json!({ "labels": vec![true; n] }))).await;
    assert_eq!(st, StatusCode::CONFLICT);
}

#[tokio::test]
async fn expired_leases_return_to_the_queue() {
    let (app, clock, _, ls) = setup();
    let sid = create(&app, json!({"graph": "toy", "kind": "twcs", "m": 3, "seed": 7})).await;
    let next = format!("/sessions/{sid}/tasks/next");
    let (_, t) = call(&app, "GET", &next, Some("slow"), None).await;
    let tid = t["task_id"].as_str().unwrap().to_string();

    clock.advance(DEFAULT_LEASE - Duration::from_secs(1));
    let (_, other) = call(&app, "GET", &next, Some("fast"), None).await;
    assert_ne!(other["task_id"].as_str().unwrap(), tid);

    clock.advance(Duration::from_secs(1));
    let uri = format!("/tasks/{tid}/labels");
    let (st, _) = call(&app, "POST", &uri, Some("slow"), Some(labels_for(&t, &ls))).await;
    assert_eq!(st, StatusCode::CONFLICT);

    let (_, again) = call(&app, "GET", &next, Some("fast"), None).await;
    assert_eq!(again["task_id"].as_str().unwrap(), tid);
    assert_eq!(again["lease"]["annotator"], "fast");
    let (st, _) = call(&app, "POST", &uri, Some("fast"), Some(labels_for(&t, &ls))).await;
    assert_eq!(st, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_clients_never_share_a_task() {
    let (app, _, _, _) = setup();
    let sid = create(&app, json!({"graph": "toy", "kind": "twcs", "m": 2, "seed": 3, "batch_size": 12})).await;
    let (_, view) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;
    let total = view["progress"]["tasks_total"].as_u64().unwrap() as usize;

    let mut handles = Vec::new();
    for c in 0..6 {
        let app = app.clone();
        let next = format!("/sessions/{sid}/tasks/next");
        handles.push(tokio::spawn(async move {
            let token = format!("client{c}");
            let mut got = Vec::new();
            loop {
                let (st, t) = call(&app, "GET", &next, Some(&token), None).await;
                if st == StatusCode::NO_CONTENT {
                    return got;
                }
                assert_eq!(t["lease"]["annotator"].as_str().unwrap(), token);
                got.push(t["task_id"].as_str().unwrap().to_string());
            }
        }));
    }
    let mut all = Vec::new();
    for h in handles {
        all.extend(h.await.unwrap());
    }
    let unique: BTreeSet<_> = all.iter().cloned().collect();
    assert_eq!(all.len(), unique.len());
    assert_eq!(unique.len(), total);
}

#[tokio::test]
async fn a_five_triple_entity_is_one_task() {
    let g = graph_from_sizes(&[5]);
    let mut board = Board::new(DEFAULT_LEASE);
    board.add_graph("one", Arc::new(g));
    let app = router(AppState::new(board, Arc::new(ManualClock::default())));
    let sid = create(&app, json!({"graph": "one", "kind": "twcs", "m": 5, "batch_size": 1})).await;
    let (_, view) = call(&app, "GET", &format!("/sessions/{sid}/estimate"), None, None).await;
    assert_eq!(view["progress"]["tasks_total"], 1);
    let (_, t) = call(&app, "GET", &format!("/sessions/{sid}/tasks/next"), Some("a"), None).await;
    let items = t["items"].as_array().unwrap();
    assert_eq!(items.len(), 5);
    assert!(items.iter().all(|i| i["subject"] == t["entity_id"] && i["label"].is_null()));
    assert!(t["context"].as_array().unwrap().is_empty());
    assert!(t["hint"].as_str().unwrap().contains(t["entity_id"].as_str().unwrap()));
}

#[tokio::test]
async fn graphs_are_listed() {
    let (app, _, _, _) = setup();
    let (st, v) = call(&app, "GET", "/graphs", None, None).await;
    assert_eq!((st, v), (StatusCode::OK, json!(["toy"])));
}
