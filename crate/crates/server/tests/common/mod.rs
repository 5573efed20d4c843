//! An ephemeral service on a random port plus a client that checks every
//! response against `openapi.json`.

#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, TimeZone, Utc};
use nutrilog_core::gateway::{Gateway, MockProvider, ModelProvider, RetryPolicy};
use nutrilog_core::persistence::{MediaStore, MemoryObjectStore, Store};
use nutrilog_core::pipeline::{Pipeline, PipelineConfig};
use nutrilog_core::vector_store::VectorStore;
use nutrilog_server::{router, AppState, OPENAPI};
use reqwest::Method;
use serde_json::{json, Value};

pub const DIM: usize = 16;

pub fn fixed_now() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 5, 12, 30, 0).unwrap()
}

/// `(method, path template, status)` triples seen so far.
pub type Coverage = Arc<Mutex<BTreeSet<(String, String, u16)>>>;

pub struct Contract {
    doc: Value,
}

impl Contract {
    pub fn load() -> Self {
        Contract {
            doc: serde_json::from_str(OPENAPI).expect("openapi.json parses"),
        }
    }

    pub fn doc(&self) -> &Value {
        &self.doc
    }

    /// Finds the documented template matching a concrete path.
    pub fn template_for(&self, path: &str) -> Option<String> {
        let path = path.split('?').next().unwrap();
        let segs: Vec<&str> = path.trim_matches('/').split('/').collect();
        let mut best: Option<(usize, String)> = None;
        for template in self.doc["paths"].as_object().unwrap().keys() {
            let t: Vec<&str> = template.trim_matches('/').split('/').collect();
            if t.len() != segs.len() {
                continue;
            }
            let mut literal = 0;
            let ok = t.iter().zip(&segs).all(|(a, b)| {
                if a.starts_with('{') {
                    true
                } else {
                    literal += 1;
                    a == b
                }
            });
            if ok && best.as_ref().is_none_or(|(l, _)| literal > *l) {
                best = Some((literal, template.clone()));
            }
        }
        best.map(|(_, t)| t)
    }

    /// Validates a response body; panics with the violations otherwise.
    pub fn check(&self, method: &str, path: &str, status: u16, body: &Value) -> String {
        let template = self
            .template_for(path)
            .unwrap_or_else(|| panic!("{path} is not in the contract"));
        let op = &self.doc["paths"][&template][method.to_ascii_lowercase()];
        assert!(op.is_object(), "{method} {template} is not in the contract");
        let response = &op["responses"][status.to_string()];
        assert!(
            response.is_object(),
            "{method} {template} does not document status {status}; body {body}"
        );
        if let Some(schema) = response.pointer("/content/application~1json/schema") {
            let mut root = schema.clone();
            root.as_object_mut()
                .unwrap()
                .insert("components".into(), self.doc["components"].clone());
            let validator = jsonschema::options()
                .should_validate_formats(true)
                .build(&root)
                .expect("schema compiles");
            let errors: Vec<String> = validator.iter_errors(body).map(|e| format!("{} at {}", e, e.instance_path)).collect();
            assert!(
                errors.is_empty(),
                "{method} {path} -> {status} violates the contract: {errors:?}\nbody: {body}"
            );
        }
        template
    }
}

pub struct Server {
    pub base: String,
    pub state: AppState,
    pub http: reqwest::Client,
    pub contract: Arc<Contract>,
    pub coverage: Coverage,
    task: tokio::task::JoinHandle<()>,
}

impl Drop for Server {
    fn drop(&mut self) {
        self.task.abort();
    }
}

pub struct Options {
    pub config: PipelineConfig,
    pub media_cap: usize,
    pub provider: Arc<dyn ModelProvider>,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            config: PipelineConfig::default(),
            media_cap: 4096,
            provider: Arc::new(MockProvider::new(DIM)),
        }
    }
}

pub async fn spawn() -> Server {
    spawn_with(Options::default()).await
}

pub async fn spawn_with(opts: Options) -> Server {
    let store = Arc::new(Store::open_migrated(None).unwrap());
    let media = MediaStore::new(Arc::new(MemoryObjectStore::new()), opts.media_cap);
    let gateway = Gateway::new(opts.provider).with_retry(RetryPolicy::none());
    let vectors = Arc::new(VectorStore::new(DIM).unwrap());
    let pipeline = Pipeline::new(store, media, gateway, vectors, opts.config).with_clock(Arc::new(fixed_now));
    let state = AppState::new(pipeline, opts.media_cap);
    let app = router(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let task = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Server {
        base,
        state,
        http: reqwest::Client::new(),
        contract: Arc::new(Contract::load()),
        coverage: Arc::default(),
        task,
    }
}

pub struct Reply {
    pub status: u16,
    pub body: Value,
}

impl Reply {
    pub fn code(&self) -> &str {
        self.body["error"]["code"].as_str().unwrap_or("")
    }
}

pub enum Payload {
    None,
    Json(Value),
    Raw(&'static str, Vec<u8>),
    Form(reqwest::multipart::Form),
}

impl Server {
    pub async fn call(&self, token: Option<&str>, method: Method, path: &str, payload: Payload) -> Reply {
        let mut req = self.http.request(method.clone(), format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        req = match payload {
            Payload::None => req,
            Payload::Json(v) => req.json(&v),
            Payload::Raw(ct, bytes) => req.header("content-type", ct).body(bytes),
            Payload::Form(f) => req.multipart(f),
        };
        let resp = req.send().await.unwrap();
        let status = resp.status().as_u16();
        let text = resp.text().await.unwrap();
        let body: Value = serde_json::from_str(&text).unwrap_or_else(|_| panic!("{method} {path}: non-JSON body {text}"));
        let template = self.contract.check(method.as_str(), path, status, &body);
        let schema_ref = self.contract.doc()["paths"][&template][method.as_str().to_ascii_lowercase()]["responses"]
            [status.to_string()]
        .pointer("/content/application~1json/schema/$ref")
        .and_then(Value::as_str)
        .map(str::to_string);
        if schema_ref.as_deref() == Some("#/components/schemas/Error") {
            assert!(
                body["error"]["code"].is_string() && body["error"]["message"].is_string(),
                "{method} {path}: error body without code {body}"
            );
        }
        self.coverage
            .lock()
            .unwrap()
            .insert((method.as_str().to_ascii_lowercase(), template, status));
        Reply { status, body }
    }

    pub async fn get(&self, token: &str, path: &str) -> Reply {
        self.call(Some(token), Method::GET, path, Payload::None).await
    }

    pub async fn post(&self, token: &str, path: &str, body: Value) -> Reply {
        self.call(Some(token), Method::POST, path, Payload::Json(body)).await
    }

    pub async fn post_empty(&self, token: &str, path: &str) -> Reply {
        self.call(Some(token), Method::POST, path, Payload::None).await
    }

    pub async fn patch(&self, token: &str, path: &str, body: Value) -> Reply {
        self.call(Some(token), Method::PATCH, path, Payload::Json(body)).await
    }

    pub async fn delete(&self, token: &str, path: &str) -> Reply {
        self.call(Some(token), Method::DELETE, path, Payload::None).await
    }

    /// Creates a user; returns `(user_id, token)`.
    pub async fn user(&self, profile: Value) -> (String, String) {
        let r = self.call(None, Method::POST, "/users", Payload::Json(profile)).await;
        assert_eq!(r.status, 201, "{}", r.body);
        (
            r.body["user_id"].as_str().unwrap().to_string(),
            r.body["token"].as_str().unwrap().to_string(),
        )
    }

    pub async fn text_log(&self, token: &str, text: &str) -> Reply {
        self.post(token, "/logs", json!({"modality": "text", "text": text})).await
    }

    /// Runs a text log through to a stored log, answering any questions
    /// with their first option or `"all of it"`.
    pub async fn logged(&self, token: &str, text: &str) -> Value {
        let mut draft = self.text_log(token, text).await;
        assert_eq!(draft.status, 200, "{}", draft.body);
        let id = draft.body["draft_id"].as_str().unwrap().to_string();
        while draft.body["state"] == "awaiting_answer" {
            let q = &draft.body["pending_question"];
            let answer = q["options"]
                .as_array()
                .and_then(|o| o.first())
                .and_then(Value::as_str)
                .unwrap_or("all of it")
                .to_string();
            draft = self.post(token, &format!("/logs/{id}/answer"), json!({ "answer": answer })).await;
            assert_eq!(draft.status, 200, "{}", draft.body);
        }
        let done = self.post_empty(token, &format!("/logs/{id}/finalize")).await;
        assert_eq!(done.status, 201, "{}", done.body);
        done.body["log"].clone()
    }
}
