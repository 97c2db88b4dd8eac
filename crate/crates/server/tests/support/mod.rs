//! Drives the router in process: every request goes through the full axum
//! stack (extractors, session middleware, error mapping) without a socket.

#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use pds_core::testing::{Fixture, Parts, PASSWORD};
use pds_server::api::{self, AppState};
use pds_server::events::EventHub;
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn rt() -> &'static tokio::runtime::Runtime {
    static RT: OnceLock<tokio::runtime::Runtime> = OnceLock::new();
    RT.get_or_init(|| {
        tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()
            .expect("runtime")
    })
}

/// RFC 6238 SHA-1, 6 digits, 30 s, computed by an independent crate.
pub fn totp_oracle(secret_base32: &str, unix: u64) -> String {
    let secret = data_encoding::BASE32_NOPAD
        .decode(secret_base32.trim_end_matches('=').as_bytes())
        .expect("base32 secret");
    totp_lite::totp_custom::<totp_lite::Sha1>(30, 6, &secret, unix)
}

#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub bytes: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| {
            panic!(
                "{} body is not JSON ({e}): {}",
                self.status,
                String::from_utf8_lossy(&self.bytes)
            )
        })
    }

    /// The `code` of an error body.
    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_string()
    }

    #[track_caller]
    pub fn expect(self, status: u16) -> Self {
        assert_eq!(
            self.status.as_u16(),
            status,
            "body: {}",
            String::from_utf8_lossy(&self.bytes)
        );
        self
    }
}

pub struct Harness {
    pub fx: Fixture,
    pub hub: Arc<EventHub>,
    pub app: Router,
}

impl Harness {
    pub fn new() -> Self {
        Self::with(Parts::default())
    }

    pub fn with(mut parts: Parts) -> Self {
        let hub = Arc::new(EventHub::default());
        parts.sink = Some(hub.clone());
        let fx = Fixture::with_parts(parts);
        let app = api::router(AppState::new(fx.platform.clone(), hub.clone()));
        Self { fx, hub, app }
    }

    pub fn request(&self, req: Request<Body>) -> Reply {
        let app = self.app.clone();
        rt().block_on(async move {
            let res = app.oneshot(req).await.expect("router is infallible");
            let status = res.status();
            let headers = res.headers().clone();
            let bytes = res
                .into_body()
                .collect()
                .await
                .expect("body")
                .to_bytes()
                .to_vec();
            Reply {
                status,
                headers,
                bytes,
            }
        })
    }

    pub fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(v) => req
                .header("content-type", "application/json")
                .body(Body::from(v.to_string())),
            None => req.body(Body::empty()),
        };
        self.request(req.expect("request"))
    }

    pub fn get(&self, path: &str, token: &str) -> Reply {
        self.call("GET", path, Some(token), None)
    }

    pub fn post(&self, path: &str, token: &str, body: Value) -> Reply {
        self.call("POST", path, Some(token), Some(body))
    }

    pub fn put(&self, path: &str, token: &str) -> Reply {
        self.call("PUT", path, Some(token), None)
    }

    pub fn delete(&self, path: &str, token: &str) -> Reply {
        self.call("DELETE", path, Some(token), None)
    }

    /// Password login over HTTP: a first-factor token.
    pub fn login(&self, handle: &str) -> String {
        let r = self
            .call(
                "POST",
                "/auth/login",
                None,
                Some(json!({ "login": handle, "password": PASSWORD })),
            )
            .expect(200);
        r.json()["token"].as_str().expect("token").to_string()
    }

    /// Full sign-in over HTTP, enrolling a device with the oracle's codes.
    pub fn sign_in(&self, handle: &str) -> String {
        let first = self.login(handle);
        let enrolled = self
            .post("/auth/2fa/enroll", &first, json!({ "label": "phone" }))
            .expect(201)
            .json();
        let now = self.fx.clock.now().timestamp() as u64;
        let code = totp_oracle(enrolled["secret"].as_str().expect("secret"), now);
        let session = self
            .post(
                "/auth/2fa/verify",
                &first,
                json!({ "code": code, "device_id": enrolled["device_id"] }),
            )
            .expect(200)
            .json();
        session["token"].as_str().expect("token").to_string()
    }

    /// A post created over HTTP; returns its id.
    pub fn post_body(&self, token: &str, exp: impl std::fmt::Display, body: &str) -> u64 {
        self.post(
            &format!("/api/experiments/{exp}/posts"),
            token,
            json!({ "body": body }),
        )
        .expect(201)
        .json()["id"]
            .as_u64()
            .expect("post id")
    }
}

/// Concrete path for a table entry: every `{param}` becomes `1`.
pub fn concrete(path: &str) -> String {
    path.split('/')
        .map(|seg| if seg.starts_with('{') { "1" } else { seg })
        .collect::<Vec<_>>()
        .join("/")
}
