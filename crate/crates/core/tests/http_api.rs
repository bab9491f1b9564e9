use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use http_body_util::BodyExt;
use prefclm::model::{RunConfig, TeacherKind};
use prefclm::pbrl::{CurvePoint, Phase, CURVE_HEADER};
use prefclm::service::{router, RunStatus, Service};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Api {
    svc: Arc<Service>,
}

impl Api {
    fn new() -> Self {
        Self {
            svc: Arc::new(Service::default()),
        }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>, accept: Option<&str>) -> (StatusCode, String, String) {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(a) = accept {
            req = req.header(header::ACCEPT, a);
        }
        let req = match body {
            Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let resp = router(self.svc.clone()).oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp
            .headers()
            .get(header::CONTENT_TYPE)
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, ctype, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let (s, _, b) = self.call(Method::GET, uri, None, None).await;
        (s, serde_json::from_str(&b).unwrap())
    }

    async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        let (s, _, b) = self.call(Method::POST, uri, Some(body), None).await;
        (s, serde_json::from_str(&b).unwrap())
    }

    async fn start(&self, cfg: Value) -> u64 {
        let (s, v) = self.post("/runs", cfg).await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["run_id"].as_u64().unwrap()
    }

    async fn status(&self, id: u64) -> RunStatus {
        let (s, v) = self.get(&format!("/runs/{id}/status")).await;
        assert_eq!(s, StatusCode::OK);
        serde_json::from_value(v).unwrap()
    }

    /// Polls until `done` holds, failing after 60 s.
    async fn until(&self, id: u64, what: &str, done: impl Fn(&RunStatus) -> bool) -> RunStatus {
        let start = Instant::now();
        loop {
            let s = self.status(id).await;
            if done(&s) {
                return s;
            }
            assert!(start.elapsed() < Duration::from_secs(60), "timed out waiting for {what}: {s:?}");
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

fn quick(teacher: TeacherKind, steps: u64) -> Value {
    serde_json::to_value(RunConfig {
        teacher_kind: teacher,
        total_env_steps: steps,
        warmup_steps: 1_000,
        query_interval: 500,
        reward_epochs: 5,
        ..RunConfig::default()
    })
    .unwrap()
}

#[tokio::test]
async fn start_list_status_curve() {
    let api = Api::new();
    let id = api.start(quick(TeacherKind::Oracle, 2_000)).await;
    let (s, list) = api.get("/runs").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(list, json!([id]));
    let st = api.until(id, "done", |s| s.phase == Phase::Done).await;
    assert_eq!(st.env_steps, 2_000);
    assert_eq!(st.curve_samples, 4);

    let (s, ctype, csv) = api.call(Method::GET, &format!("/runs/{id}/curve"), None, Some("text/csv")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(ctype.starts_with("text/csv"));
    assert_eq!(csv.lines().next(), Some(CURVE_HEADER));
    assert_eq!(csv.lines().count(), 5);

    let (s, ctype, body) = api.call(Method::GET, &format!("/runs/{id}/curve"), None, Some("application/json")).await;
    assert_eq!(s, StatusCode::OK);
    assert!(ctype.starts_with("application/json"));
    let points: Vec<CurvePoint> = serde_json::from_str(&body).unwrap();
    assert_eq!(points.len(), 4);
    assert_eq!(points[3].env_steps, 2_000);
}

#[tokio::test]
async fn error_statuses() {
    let api = Api::new();
    assert_eq!(api.get("/runs/42/status").await.0, StatusCode::NOT_FOUND);
    assert_eq!(api.get("/runs/42/curve").await.0, StatusCode::NOT_FOUND);
    assert_eq!(api.get("/runs/42/queries/pending").await.0, StatusCode::NOT_FOUND);

    // Invalid field values name the field.
    let mut bad = quick(TeacherKind::Oracle, 2_000);
    bad["phi"] = json!(1.5);
    let (s, v) = api.post("/runs", bad).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["fields"].as_array().unwrap().iter().any(|f| f["field"] == "phi"));

    let (s, _) = api.post("/runs", json!("not a config")).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    let mut bad_ep = quick(TeacherKind::CrowdDst, 2_000);
    bad_ep["llm_endpoints"] = json!([{"base_url": "", "model_name": "m"}]);
    let (s, v) = api.post("/runs", bad_ep).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");

    let id = api.start(quick(TeacherKind::Oracle, 2_000)).await;
    assert_eq!(api.get(&format!("/runs/{id}/trajectories/999999")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(api.get(&format!("/runs/{id}/feedback/3")).await.0, StatusCode::NOT_FOUND);
    let (s, _) = api.post(&format!("/runs/{id}/queries/5/preference"), json!({"value": 0.3})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = api.post(&format!("/runs/{id}/queries/5/preference"), json!({"value": "left"})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, _) = api.post(&format!("/runs/{id}/queries/5/preference"), json!({"value": 1})).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, v) = api.post(&format!("/runs/{id}/feedback"), json!({"text": ""})).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["fields"][0]["field"], "text");
    // Oracle runs have nothing to refine.
    let (s, _) = api.post(&format!("/runs/{id}/feedback"), json!({"text": "go faster"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
    api.until(id, "done", |s| s.phase == Phase::Done).await;
}

#[tokio::test]
async fn human_pending_then_answer() {
    let api = Api::new();
    let id = api.start(quick(TeacherKind::Human, 500_000)).await;
    api.until(id, "pending queries", |s| s.pending_queries > 0).await;

    let (s, pending) = api.get(&format!("/runs/{id}/queries/pending")).await;
    assert_eq!(s, StatusCode::OK);
    let pending = pending.as_array().unwrap().clone();
    // The loop keeps stepping, so later rounds may already have added more.
    assert!(pending.len() >= 10 && pending.len() % 10 == 0 && pending.len() <= 200);
    let first = &pending[0];
    let qid = first["query_id"].as_u64().unwrap();
    assert_eq!(first["left"]["grid"], json!([8, 8]));
    assert_eq!(first["left"]["cells"].as_array().unwrap().len(), 10);

    // Both segments can be fetched for rendering.
    let sid = first["right"]["segment_id"].as_u64().unwrap();
    let (s, traj) = api.get(&format!("/runs/{id}/trajectories/{sid}")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(traj, first["right"]);

    let uri = format!("/runs/{id}/queries/{qid}/preference");
    let (s, ack) = api.post(&uri, json!({"value": 0.5})).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ack["accepted"], true);
    // The card disappears right away, and a second answer is refused.
    let (_, now) = api.get(&format!("/runs/{id}/queries/pending")).await;
    assert!(now.as_array().unwrap().iter().all(|p| p["query_id"] != qid));
    let (s, _) = api.post(&uri, json!({"value": 1})).await;
    assert_eq!(s, StatusCode::CONFLICT);

    // The loop applies the label at its next boundary.
    let start = Instant::now();
    while !api.svc.command_log(id).unwrap().iter().any(|l| l.contains(&format!("query={qid}"))) {
        assert!(start.elapsed() < Duration::from_secs(60));
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    let log = api.svc.command_log(id).unwrap();
    assert!(log.iter().any(|l| l.contains(&format!("label query={qid} value=0.5 ok"))), "{log:?}");

    api.svc.stop(id).unwrap();
    let st = api.until(id, "stop", |s| s.phase == Phase::Done).await;
    assert!(st.env_steps < 500_000);
    // Finished runs accept no more answers.
    let other = pending[1]["query_id"].as_u64().unwrap();
    let (s, _) = api.post(&format!("/runs/{id}/queries/{other}/preference"), json!({"value": 0})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn feedback_ticket_reports_the_new_version() {
    let api = Api::new();
    let id = api.start(quick(TeacherKind::CrowdDst, 500_000)).await;
    api.until(id, "training", |s| s.phase == Phase::Training).await;

    let (s, t) = api.post(&format!("/runs/{id}/feedback"), json!({"text": "walk slower"})).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    assert_eq!(t["status"], "queued");
    let ticket = t["ticket"].as_u64().unwrap();

    let start = Instant::now();
    let done = loop {
        let (s, v) = api.get(&format!("/runs/{id}/feedback/{ticket}")).await;
        assert_eq!(s, StatusCode::OK);
        if v["status"] == "succeeded" || v["status"] == "failed" {
            break v;
        }
        assert!(start.elapsed() < Duration::from_secs(60));
        tokio::time::sleep(Duration::from_millis(20)).await;
    };
    assert_eq!(done["status"], "succeeded", "{done}");
    assert_eq!(done["functions_version"], 1);
    let st = api.status(id).await;
    assert_eq!(st.functions_version, 1);

    api.svc.stop(id).unwrap();
    api.until(id, "stop", |s| s.phase == Phase::Done).await;
    let (s, _) = api.post(&format!("/runs/{id}/feedback"), json!({"text": "again"})).await;
    assert_eq!(s, StatusCode::CONFLICT);
}

#[tokio::test]
async fn finished_runs_reload_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let svc = Arc::new(Service::new(Some(dir.path().to_path_buf())));
    let id = svc.start_run(serde_json::from_value(quick(TeacherKind::Oracle, 2_000)).unwrap()).unwrap();
    let before = svc.wait(id, Duration::from_secs(60)).unwrap();
    assert_eq!(before.phase, Phase::Done);
    let curve = svc.curve(id).unwrap();

    let api = Api {
        svc: Arc::new(Service::with_reload(dir.path().to_path_buf()).unwrap()),
    };
    let st = api.status(id).await;
    assert!(!st.live);
    assert_eq!(st.env_steps, 2_000);
    let (_, v) = api.get(&format!("/runs/{id}/curve")).await;
    assert_eq!(serde_json::from_value::<Vec<CurvePoint>>(v).unwrap(), curve);
    // New runs do not reuse the reloaded id.
    let next = api.start(quick(TeacherKind::Oracle, 1_000)).await;
    assert_ne!(next, id);
    api.until(next, "done", |s| s.phase == Phase::Done).await;
}
