//! The HTTP API driven in-process, plus byte-equality with the CLI.

use std::path::PathBuf;
use std::process::Command;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value as Json};
use tower::ServiceExt;

use cfx_cli::server::router;
use cfx_cli::store::ModelStore;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

struct Service {
    app: Router,
    _dir: tempfile::TempDir,
}

impl Service {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let app = router(ModelStore::open(dir.path()).unwrap(), None);
        Service { app, _dir: dir }
    }

    async fn call(&self, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Vec<u8>) {
        let request = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
    }

    async fn json(&self, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Json) {
        let (status, bytes) = self.call(method, uri, body).await;
        (status, serde_json::from_slice(&bytes).unwrap_or(Json::Null))
    }

    async fn upload(&self, fixture_name: &str) -> String {
        let (status, meta) = self.json("POST", "/v1/models", std::fs::read(fixture(fixture_name)).unwrap()).await;
        assert_eq!(status, StatusCode::CREATED, "{meta}");
        meta["id"].as_str().unwrap().to_owned()
    }
}

#[tokio::test]
async fn health() {
    let s = Service::new();
    assert_eq!(s.json("GET", "/v1/health", Body::empty()).await, (StatusCode::OK, json!({"status": "ok"})));
}

#[tokio::test]
async fn model_upload_list_and_fetch() {
    let s = Service::new();
    let id = s.upload("fig1.model.json").await;
    assert_eq!(id.len(), 64);
    assert_eq!(s.upload("fig1.model.json").await, id, "ids are stable across re-uploads");
    let (status, list) = s.json("GET", "/v1/models", Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(list["models"].as_array().unwrap().len(), 1);
    assert_eq!(list["models"][0]["type"], "decision_tree");
    let (status, artifact) = s.call("GET", &format!("/v1/models/{id}"), Body::empty()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(artifact, std::fs::read(fixture("fig1.model.json")).unwrap());
    assert_eq!(s.call("GET", &format!("/v1/models/{}", "0".repeat(64)), Body::empty()).await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.call("POST", "/v1/models", "{\"schema\":\"cfx-model/1\"}").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn predict_fig1() {
    let s = Service::new();
    let id = s.upload("fig1.model.json").await;
    let (status, out) = s.json("POST", &format!("/v1/models/{id}/predict"), r#"{"instance":{"X1":5,"X2":30}}"#).await;
    assert_eq!((status, out), (StatusCode::OK, json!({"class": 1})));
    let (status, _) = s.json("POST", &format!("/v1/models/{id}/predict"), r#"{"instance":{"X1":5}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn counterfactual_and_error_statuses() {
    let s = Service::new();
    let id = s.upload("fig1.model.json").await;
    let uri = format!("/v1/models/{id}/counterfactual");
    let (status, out) = s.json("POST", &uri, r#"{"instance":{"X1":5,"X2":30},"weights":"uniform"}"#).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["conditions"][1], json!({"feature": "X2", "op": "gt", "value": 50.0}));

    // conditions that pin the factual class
    let body = r#"{"instance":{"X1":5,"X2":30},"conditions":[{"feature":"X1","op":"le","value":10},{"feature":"X2","op":"le","value":50}]}"#;
    let (status, err) = s.json("POST", &uri, body).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"]["class"], "infeasible");

    for bad in [r#"{"instance":{"X1":5}}"#, r#"{"instance":{"X1":5,"X2":30},"colour":1}"#, "not json", r#"{"instance":{"X1":5,"X2":30},"weights":"mad"}"#] {
        assert_eq!(s.json("POST", &uri, bad).await.0, StatusCode::BAD_REQUEST, "{bad}");
    }
    let body = r#"{"instance":{"X1":5,"X2":30},"weights":"mad","dataset":"0000000000000000000000000000000000000000000000000000000000000000"}"#;
    assert_eq!(s.json("POST", &uri, body).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn cap_exceeded_is_413() {
    let dir = tempfile::tempdir().unwrap();
    let s = Service { app: router(ModelStore::open(dir.path()).unwrap(), Some(std::time::Duration::ZERO)), _dir: dir };
    let id = s.upload("votes.model.json").await;
    let body = json!({ "instance": serde_json::from_slice::<Json>(&std::fs::read(fixture("votes.instance.json")).unwrap()).unwrap() });
    let (status, err) = s.json("POST", &format!("/v1/models/{id}/counterfactual"), body.to_string()).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE, "{err}");
    assert_eq!(err["error"]["class"], "cap_exceeded");
}

#[tokio::test]
async fn robustness_and_prime_implicants() {
    let s = Service::new();
    let id = s.upload("fig1.model.json").await;
    let (status, out) = s.json("POST", &format!("/v1/models/{id}/robustness"), r#"{"instance":{"X1":5,"X2":30}}"#).await;
    assert_eq!((status, out["robustness"].clone()), (StatusCode::OK, json!(1)));
    let (status, out) =
        s.json("POST", &format!("/v1/models/{id}/prime-implicants"), r#"{"instance":{"X1":5,"X2":30},"keep":["X2"]}"#).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert!(out["prime_implicant"]["implicant"].as_array().unwrap().contains(&json!("X2")));
}

#[tokio::test]
async fn datasets_feed_mad_weights_through_the_model_link() {
    let s = Service::new();
    let csv = std::fs::read(fixture("fig1.data.csv")).unwrap();
    let (status, d) = s.json("POST", "/v1/datasets", csv.clone()).await;
    assert_eq!(status, StatusCode::CREATED);
    let dataset = d["id"].as_str().unwrap().to_owned();
    assert_eq!(dataset, cfx_cli::store::content_id(&csv));

    let artifact = std::fs::read(fixture("fig1.model.json")).unwrap();
    let (status, meta) = s.json("POST", &format!("/v1/models?dataset={dataset}"), artifact).await;
    assert_eq!((status, meta["dataset"].as_str()), (StatusCode::CREATED, Some(dataset.as_str())));
    let id = meta["id"].as_str().unwrap();

    let uri = format!("/v1/models/{id}/counterfactual");
    let (status, linked) = s.json("POST", &uri, r#"{"instance":{"X1":5,"X2":30},"weights":"mad"}"#).await;
    assert_eq!(status, StatusCode::OK, "{linked}");
    assert_eq!(linked["request"]["dataset"], dataset.as_str());
    let explicit = format!(r#"{{"instance":{{"X1":5,"X2":30}},"weights":"mad","dataset":"{dataset}"}}"#);
    let (_, named) = s.json("POST", &uri, explicit).await;
    assert_eq!(linked, named);
}

/// Runs the CLI, then posts the request it echoed and compares bytes.
async fn same_bytes(s: &Service, id: &str, cli: &[&str], route: &str) {
    let out = Command::new(env!("CARGO_BIN_EXE_cfx")).args(cli).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let file: Json = serde_json::from_slice(&out.stdout).unwrap();
    let (status, body) = s.call("POST", &format!("/v1/models/{id}/{route}"), file["request"].to_string()).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(String::from_utf8(body).unwrap(), String::from_utf8(out.stdout).unwrap());
}

#[tokio::test]
async fn cli_and_http_bodies_are_byte_identical() {
    let s = Service::new();
    let fig1 = s.upload("fig1.model.json").await;
    let (m, i) = (fixture("fig1.model.json"), fixture("fig1.instance.json"));
    let (m, i) = (m.to_str().unwrap(), i.to_str().unwrap());
    let csv = fixture("fig1.data.csv");
    let (status, _) = s.json("POST", "/v1/datasets", std::fs::read(&csv).unwrap()).await;
    assert_eq!(status, StatusCode::CREATED);

    same_bytes(&s, &fig1, &["explain", "--model", m, "--instance", i], "counterfactual").await;
    same_bytes(&s, &fig1, &["diverse", "--model", m, "--instance", i, "--k", "4", "--fix", "X1:..20"], "counterfactual").await;
    same_bytes(&s, &fig1, &["explain", "--model", m, "--instance", i, "--scheme", "mad", "--dataset", csv.to_str().unwrap()], "counterfactual").await;
    same_bytes(&s, &fig1, &["robustness", "--model", m, "--instance", i], "robustness").await;

    let votes = s.upload("votes.model.json").await;
    let (m, i) = (fixture("votes.model.json"), fixture("votes.instance.json"));
    let (m, i) = (m.to_str().unwrap(), i.to_str().unwrap());
    same_bytes(&s, &votes, &["pi", "--model", m, "--instance", i, "--keep", "vote4"], "prime-implicants").await;
    same_bytes(&s, &votes, &["explain", "--model", m, "--instance", i, "--target", "0", "--polarity", "1"], "counterfactual").await;
}

#[tokio::test]
async fn concurrent_requests() {
    let s = Service::new();
    let id = s.upload("forest3.model.json").await;
    let uri = format!("/v1/models/{id}/counterfactual");
    let body = r#"{"instance":{"X1":3,"X2":1,"X3":2}}"#;
    let first = s.call("POST", &uri, body).await;
    let all = futures_join(&s, &uri, body, 8).await;
    assert!(all.iter().all(|r| *r == first));
}

async fn futures_join(s: &Service, uri: &str, body: &'static str, n: usize) -> Vec<(StatusCode, Vec<u8>)> {
    let mut handles = Vec::new();
    for _ in 0..n {
        let app = s.app.clone();
        let uri = uri.to_owned();
        handles.push(tokio::spawn(async move {
            let request = Request::builder().method("POST").uri(uri).body(Body::from(body)).unwrap();
            let response = app.oneshot(request).await.unwrap();
            let status = response.status();
            (status, response.into_body().collect().await.unwrap().to_bytes().to_vec())
        }));
    }
    let mut out = Vec::new();
    for h in handles {
        out.push(h.await.unwrap());
    }
    out
}
