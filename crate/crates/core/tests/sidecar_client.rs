//! Sidecar client against an in-process mock of the HTTP interface.

mod common;

use std::sync::Arc;

use chunkspace::embedding::{Embedder, RemoteEmbedder};
use chunkspace::sidecar::{InputType, SidecarClient, SidecarConfig, SidecarError, SidecarTokenizer};
use chunkspace::tokenizer::Tokenizer;
use common::MockServer;
use serde_json::{json, Value};

const MODEL: &str = "mock-encoder";
const WINDOW: usize = 8;
const DIMS: usize = 4;

/// Whitespace-delimited words with byte offsets.
fn words(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, text.len()));
    }
    out
}

fn token_vector(word: &str) -> Vec<f32> {
    vec![word.len() as f32, word.as_bytes()[0] as f32, 1.0, 0.0]
}

fn sidecar(method: &str, path: &str, body: &Value) -> (u16, String) {
    let model_ok = body["model"].as_str() == Some(MODEL);
    match (method, path) {
        ("GET", "/v1/models") => {
            (200, json!({"models": [{"name": MODEL, "window": WINDOW, "dims": DIMS}]}).to_string())
        }
        (_, _) if !model_ok => (404, json!({"error": "unknown model"}).to_string()),
        ("POST", "/v1/token_embeddings") => {
            let text = body["text"].as_str().unwrap();
            let spans = words(text);
            if spans.len() > WINDOW {
                return (413, json!({"error": "over window"}).to_string());
            }
            let tokens: Vec<&str> = spans.iter().map(|&(s, e)| &text[s..e]).collect();
            let vectors: Vec<Vec<f32>> = tokens.iter().map(|t| token_vector(t)).collect();
            let offsets: Vec<[usize; 2]> = spans.iter().map(|&(s, e)| [s, e]).collect();
            (
                200,
                json!({"model": MODEL, "tokens": tokens, "offsets": offsets, "vectors": vectors, "dims": DIMS})
                    .to_string(),
            )
        }
        ("POST", "/v1/embeddings") => {
            let texts = body["texts"].as_array().unwrap();
            let mut vectors = Vec::new();
            let mut errors = Vec::new();
            for t in texts {
                let t = t.as_str().unwrap();
                if t.trim().is_empty() {
                    vectors.push(Value::Null);
                    errors.push(json!({"status": 400, "message": "empty text"}));
                    continue;
                }
                // first component carries the trailing number so order is observable
                let n: f32 = t.rsplit(' ').next().unwrap().parse().unwrap_or(-1.0);
                let prefix = if body["input_type"] == "query" { 1.0 } else { 0.0 };
                vectors.push(json!([n, prefix, 1.0, 0.0]));
                errors.push(Value::Null);
            }
            (200, json!({"vectors": vectors, "errors": errors}).to_string())
        }
        _ => (500, "{}".into()),
    }
}

fn client(url: &str, model: &str) -> Arc<SidecarClient> {
    Arc::new(SidecarClient::new(SidecarConfig::new(url, model)).unwrap())
}

#[test]
fn lists_models() {
    let srv = MockServer::start(sidecar);
    let models = client(&srv.url, MODEL).models().unwrap();
    assert_eq!(models.len(), 1);
    assert_eq!((models[0].window, models[0].dims), (WINDOW, DIMS));
}

#[test]
fn token_embeddings_roundtrip_offsets() {
    let srv = MockServer::start(sidecar);
    let text = "hello  wörld again";
    let resp = client(&srv.url, MODEL).token_embeddings(text).unwrap();
    assert_eq!(resp.tokens, vec!["hello", "wörld", "again"]);
    for (tok, [s, e]) in resp.tokens.iter().zip(&resp.offsets) {
        assert_eq!(&text[*s..*e], tok);
    }
    assert!(resp.vectors.iter().all(|v| v.len() == DIMS));
}

#[test]
fn over_window_and_unknown_model_errors() {
    let srv = MockServer::start(sidecar);
    let long = (0..WINDOW + 1).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    assert!(matches!(client(&srv.url, MODEL).token_embeddings(&long), Err(SidecarError::OverWindow)));
    let exact = (0..WINDOW).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
    assert_eq!(client(&srv.url, MODEL).token_embeddings(&exact).unwrap().tokens.len(), WINDOW);
    assert!(
        matches!(client(&srv.url, "nope").token_embeddings("hi"), Err(SidecarError::UnknownModel(m)) if m == "nope")
    );
}

#[test]
fn per_item_batch_errors() {
    let srv = MockServer::start(sidecar);
    let err = client(&srv.url, MODEL).embeddings(&["a 1", " ", "b 2"], Some(InputType::Passage)).unwrap_err();
    assert!(matches!(err, SidecarError::Item { index: 1, status: 400, .. }), "{err:?}");
}

#[test]
fn long_text_is_tokenized_by_halving() {
    let srv = MockServer::start(sidecar);
    let text = (0..37).map(|i| format!("tok{i}")).collect::<Vec<_>>().join(" \n ");
    let tok = SidecarTokenizer(client(&srv.url, MODEL));
    let map = tok.tokenize(&text).unwrap();
    let expected: Vec<(usize, usize)> = words(&text);
    let got: Vec<(usize, usize)> = map.spans().map(|s| (s.start, s.end)).collect();
    assert_eq!(got, expected);
    assert!(srv.hits() > 4, "expected recursive requests, saw {}", srv.hits());
    assert_eq!(tok.scheme(), "remote:mock-encoder");
}

#[test]
fn remote_embedder_keeps_input_order_across_batches() {
    let srv = MockServer::start(sidecar);
    let emb = RemoteEmbedder::connect(client(&srv.url, MODEL)).unwrap();
    assert_eq!(emb.dims(), DIMS);
    assert_eq!(emb.context_window(), WINDOW);
    let texts: Vec<String> = (0..75).map(|i| format!("chunk {i}")).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let vecs = emb.embed_chunks(&refs).unwrap();
    // vectors come back normalized; the index survives as a ratio
    let decoded: Vec<f32> = vecs.iter().map(|v| (v.values[0] / v.values[2]).round()).collect();
    assert_eq!(decoded, (0..75).map(|i| i as f32).collect::<Vec<_>>());
    assert!(vecs.iter().all(|v| v.values[1] == 0.0));
    let q = emb.embed_query("query 5").unwrap();
    assert_eq!(((q.values[0] / q.values[2]).round(), q.values[1] / q.values[2]), (5.0, 1.0));
    let requests = srv.requests.lock().unwrap();
    let batch_sizes: Vec<usize> = requests
        .iter()
        .filter(|r| r.path == "/v1/embeddings")
        .map(|r| r.body["texts"].as_array().unwrap().len())
        .collect();
    assert!(batch_sizes.iter().all(|&n| n <= 32));
    assert_eq!(batch_sizes.iter().sum::<usize>(), 76);
}

#[test]
fn remote_token_embeddings_feed_late_chunking() {
    let srv = MockServer::start(sidecar);
    let emb = RemoteEmbedder::connect(client(&srv.url, MODEL)).unwrap();
    let te = emb.embed_tokens("alpha beta gamma").unwrap();
    assert_eq!(te.vectors.len(), 3);
    assert_eq!(te.token_map.len(), 3);
    assert!(RemoteEmbedder::connect(client(&srv.url, "absent")).is_err());
}

#[test]
fn unreachable_sidecar_is_transport_error() {
    let url = {
        let srv = MockServer::start(sidecar);
        srv.url.clone()
    };
    assert!(matches!(client(&url, MODEL).models(), Err(SidecarError::Transport(_))));
}
