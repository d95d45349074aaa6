#![allow(dead_code)]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use sensorlab_service::{router, AppState, Gateway, ServiceConfig};
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

pub struct TestApp {
    pub state: AppState,
    pub router: Router,
    pub dir: TempDir,
}

impl TestApp {
    pub fn new() -> Self {
        Self::with(|_| {}, Gateway::default())
    }

    pub fn with(tweak: impl FnOnce(&mut ServiceConfig), gateway: Gateway) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let mut config = ServiceConfig::new(Some(dir.path().join("lab.db")), dir.path().join("photos"));
        tweak(&mut config);
        let state = AppState::open(config, gateway).unwrap();
        TestApp { router: router(state.clone()), state, dir }
    }

    pub async fn raw(&self, req: Request<Body>) -> (StatusCode, Vec<u8>, String) {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let ctype = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string())
            .unwrap_or_default();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes, ctype)
    }

    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let (status, bytes, _) = self.raw(req).await;
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap_or(Value::Null) };
        (status, value)
    }

    pub async fn get(&self, path: &str, token: &str) -> (StatusCode, Value) {
        self.call(Method::GET, path, Some(token), None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, path, Some(token), Some(body)).await
    }

    /// Registers and returns the session token.
    pub async fn register(&self, username: &str, role: &str, class_code: Option<&str>) -> String {
        let (status, body) = self
            .call(
                Method::POST,
                "/auth/register",
                None,
                Some(json!({"username": username, "password": "hunter22", "role": role, "class_code": class_code})),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        body["token"].as_str().unwrap().to_string()
    }

    /// A teacher with one class and a student in it: (teacher, class id, join code, student).
    pub async fn classroom(&self, suffix: &str) -> (String, u64, String, String) {
        let teacher = self.register(&format!("teacher{suffix}"), "teacher", None).await;
        let (status, class) = self.post("/classes", &teacher, json!({"name": format!("Year 8{suffix}")})).await;
        assert_eq!(status, StatusCode::CREATED, "{class}");
        let code = class["join_code"].as_str().unwrap().to_string();
        let student = self.register(&format!("student{suffix}"), "student", Some(&code)).await;
        (teacher, class["id"].as_u64().unwrap(), code, student)
    }

    pub fn event_count(&self) -> usize {
        self.state.export_log().unwrap().len()
    }
}

pub fn heart_rate(bpm: f64) -> Value {
    json!({"sensor_type": "heart_rate", "timestamp_ms": 1000, "values": [(bpm * 100.0).round() as i64]})
}

pub fn datapoint(label: &str, bpm: f64) -> Value {
    json!({"measurement": heart_rate(bpm), "label": label})
}
