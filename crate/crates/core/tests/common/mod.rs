#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use serde_json::Value;

pub struct Recorded {
    pub method: String,
    pub path: String,
    pub body: Value,
}

/// Minimal HTTP server on an ephemeral port answering every request with
/// `handler(method, path, json_body) -> (status, json_body)`.
pub struct MockServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    server: Arc<tiny_http::Server>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(&str, &str, &Value) -> (u16, String) + Send + Sync + 'static,
    {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let url = format!("http://{}", server.server_addr().to_ip().expect("ip listener"));
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let handler = Arc::new(handler);
        let handle = {
            let (server, hits, requests) = (server.clone(), hits.clone(), requests.clone());
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let mut raw = String::new();
                    req.as_reader().read_to_string(&mut raw).unwrap();
                    let body: Value = serde_json::from_str(&raw).unwrap_or(Value::Null);
                    let method = req.method().to_string();
                    let path = req.url().to_string();
                    let handler = handler.clone();
                    let (status, out) = handler(&method, &path, &body);
                    requests.lock().unwrap().push(Recorded { method, path, body });
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let resp = tiny_http::Response::from_string(out).with_status_code(status).with_header(header);
                    let _ = req.respond(resp);
                }
            })
        };
        MockServer { url, hits, requests, server, handle: Some(handle) }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
