use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use regforge::backends::{
    complete_text, embed, generate_image, BackendConfig, EmbedInput, GenRequest, HttpEmbedBackend, HttpImageBackend,
    HttpTextBackend, ModelTag, RetryPolicy,
};
use regforge::Error;
use serde_json::{json, Value};

#[derive(Debug)]
struct Seen {
    path: String,
    headers: Vec<(String, String)>,
    body: Value,
}

/// Serves canned `(status, body)` replies in order, one per connection, and
/// records every request.
fn mock(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or_default().to_string();
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                let h = h.trim_end();
                if h.is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                if k == "content-length" {
                    length = v.parse().unwrap();
                }
                headers.push((k, v));
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                path,
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        base_delay: Duration::from_millis(1),
    }
}

fn config() -> BackendConfig {
    BackendConfig {
        token: Some("Bearer secret".into()),
        timeout_secs: 5,
        ..BackendConfig::default()
    }
}

#[test]
fn image_client_retries_server_errors_and_decodes_payload() {
    let payload = b"\x89PNG fake bytes".to_vec();
    let (url, seen) = mock(vec![
        (503, "{}".into()),
        (200, json!({ "image_b64": B64.encode(&payload) }).to_string()),
    ]);
    let backend = HttpImageBackend::with_url(&url, &config());
    let mut req = GenRequest::new("a backpack on a rock", 42);
    req.width = 512;
    let bytes = generate_image(&backend, &req, &fast_retry()).unwrap();
    assert_eq!(bytes, payload);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(seen[1].path, "/generate");
    assert_eq!(seen[1].body["prompt"], "a backpack on a rock");
    assert_eq!(seen[1].body["seed"], 42);
    assert_eq!(seen[1].body["width"], 512);
    assert!(seen[1].body["steps"].as_u64().unwrap() > 0);
    assert!(seen[1]
        .headers
        .contains(&("authorization".to_string(), "Bearer secret".to_string())));
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = mock(vec![(400, "{\"error\":\"bad prompt\"}".into()), (200, "{}".into())]);
    let backend = HttpTextBackend::with_url(&url, &config());
    let err = complete_text(&backend, "give me words", &fast_retry()).unwrap_err();
    assert!(matches!(err, Error::Protocol(ref m) if m.contains("400")), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn retries_are_bounded() {
    let (url, seen) = mock(vec![(500, "{}".into()), (502, "{}".into()), (503, "{}".into())]);
    let backend = HttpTextBackend::with_url(&url, &config());
    let err = complete_text(&backend, "give me words", &fast_retry()).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn text_client_round_trip() {
    let (url, seen) = mock(vec![(200, json!({ "text": "1. round\n2. square" }).to_string())]);
    let backend = HttpTextBackend::with_url(&url, &BackendConfig::default());
    assert_eq!(complete_text(&backend, "give me words", &fast_retry()).unwrap(), "1. round\n2. square");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/complete");
    assert_eq!(seen[0].body, json!({ "prompt": "give me words" }));
    assert!(!seen[0].headers.iter().any(|(k, _)| k == "authorization"));
}

#[test]
fn embed_client_sends_images_as_base64_and_normalizes() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("x.png");
    std::fs::write(&image, b"image bytes").unwrap();
    let (url, seen) = mock(vec![
        (200, json!({ "vector": [3.0, 4.0] }).to_string()),
        (200, json!({ "vector": [0.0, 2.0] }).to_string()),
        (200, json!({ "vector": [0.0, 0.0] }).to_string()),
        (200, "not json".into()),
    ]);
    let backend = HttpEmbedBackend::with_url(&url, &config());
    let v = embed(&backend, EmbedInput::Image(&image), ModelTag::Dino, &fast_retry()).unwrap();
    assert_eq!(v.values, vec![0.6, 0.8]);
    let t = embed(&backend, EmbedInput::Text("a dog"), ModelTag::ClipText, &fast_retry()).unwrap();
    assert_eq!(t.values, vec![0.0, 1.0]);
    assert!(embed(&backend, EmbedInput::Text("zero"), ModelTag::ClipText, &fast_retry()).is_err());
    let err = embed(&backend, EmbedInput::Text("junk"), ModelTag::ClipText, &fast_retry()).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");

    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/embed");
    assert_eq!(seen[0].body["kind"], "image");
    assert_eq!(seen[0].body["model_tag"], "dino");
    assert_eq!(seen[0].body["payload_b64"], B64.encode(b"image bytes"));
    assert_eq!(seen[1].body, json!({ "kind": "text", "model_tag": "clip_text", "text": "a dog" }));
}

#[test]
fn missing_endpoint_is_a_configuration_error() {
    assert!(HttpImageBackend::new(&BackendConfig::default()).is_err());
    let mut cfg = BackendConfig::default();
    cfg.apply_vars(|k| (k == "REGFORGE_GEN_URL").then(|| "http://127.0.0.1:9".to_string()));
    assert_eq!(cfg.gen_url.as_deref(), Some("http://127.0.0.1:9"));
    assert!(HttpImageBackend::new(&cfg).is_ok());
}

#[test]
fn unreachable_server_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = HttpTextBackend::with_url(&format!("http://127.0.0.1:{port}"), &config());
    let err = complete_text(&backend, "hello", &RetryPolicy { attempts: 1, ..fast_retry() }).unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err}");
}
