//! A scripted OpenAI-compatible chat-completion server for tests and demos.
//! Answers `POST .../chat/completions` under any prefix.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use pds_core::agents::inference::{ScriptStep, AGENT_HEADER};
use pds_core::agents::{InferenceError, Script, ScriptedInference};
use serde_json::{json, Value};

/// One request as the stub saw it.
#[derive(Debug, Clone)]
pub struct StubCall {
    pub path: String,
    pub agent: String,
    pub authorization: Option<String>,
    pub body: Value,
}

#[derive(Clone)]
struct Stub {
    script: Arc<ScriptedInference>,
    calls: Arc<Mutex<Vec<StubCall>>>,
    /// How long `!timeout` entries stall before answering.
    stall: Duration,
}

pub fn completion(model: &str, content: &str) -> Value {
    json!({
        "id": "stub-completion",
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": content },
            "finish_reason": "stop",
        }],
    })
}

async fn handle(
    State(stub): State<Stub>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: String,
) -> Response {
    if method != Method::POST || !uri.path().ends_with("/chat/completions") {
        return StatusCode::NOT_FOUND.into_response();
    }
    let Ok(body) = serde_json::from_str::<Value>(&body) else {
        return (StatusCode::BAD_REQUEST, "body is not JSON").into_response();
    };
    let header = |name: &str| {
        headers
            .get(name)
            .and_then(|v| v.to_str().ok())
            .map(str::to_string)
    };
    let agent = header(AGENT_HEADER).unwrap_or_default();
    let model = body["model"].as_str().unwrap_or_default().to_string();
    stub.calls.lock().expect("calls lock").push(StubCall {
        path: uri.path().to_string(),
        agent: agent.clone(),
        authorization: header("authorization"),
        body,
    });
    let step = stub.script.next_step(&agent, &model);
    match step {
        ScriptStep::Reply(text) => Json(completion(&model, &text)).into_response(),
        ScriptStep::Fail(InferenceError::Http(code)) => {
            let status = StatusCode::from_u16(code).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
            (status, Json(json!({ "error": { "message": "scripted failure" } }))).into_response()
        }
        ScriptStep::Fail(InferenceError::Malformed(_)) => {
            Json(json!({ "choices": [] })).into_response()
        }
        ScriptStep::Fail(_) => {
            tokio::time::sleep(stub.stall).await;
            Json(completion(&model, "DECISION: none")).into_response()
        }
        ScriptStep::Hang(d) => {
            tokio::time::sleep(d).await;
            Json(completion(&model, "DECISION: none")).into_response()
        }
    }
}

pub struct StubServer {
    pub addr: SocketAddr,
    calls: Arc<Mutex<Vec<StubCall>>>,
}

impl StubServer {
    pub fn router(script: Script, stall: Duration) -> (Router, Arc<Mutex<Vec<StubCall>>>) {
        let calls = Arc::new(Mutex::new(Vec::new()));
        let stub = Stub {
            script: Arc::new(ScriptedInference::new(script)),
            calls: calls.clone(),
            stall,
        };
        (Router::new().fallback(handle).with_state(stub), calls)
    }

    /// Serves on `addr` until the process exits.
    pub async fn serve(addr: SocketAddr, script: Script) -> std::io::Result<()> {
        let (router, _) = Self::router(script, Duration::from_secs(90));
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!(addr = %listener.local_addr()?, "stub inference listening");
        axum::serve(listener, router).await
    }

    /// Starts on an ephemeral local port in a background thread.
    pub fn spawn(script: Script, stall: Duration) -> std::io::Result<Self> {
        let (router, calls) = Self::router(script, stall);
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        std::thread::Builder::new()
            .name("stub-inference".into())
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_current_thread()
                    .enable_all()
                    .build()
                    .expect("stub runtime");
                rt.block_on(async move {
                    let listener =
                        tokio::net::TcpListener::from_std(listener).expect("stub listener");
                    let _ = axum::serve(listener, router).await;
                });
            })?;
        Ok(Self { addr, calls })
    }

    /// Base URL for agent endpoint settings.
    pub fn endpoint(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn calls(&self) -> Vec<StubCall> {
        self.calls.lock().expect("calls lock").clone()
    }
}
