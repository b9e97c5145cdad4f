use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use kbqa_core::{HttpLlmClient, LlmClient, LlmConfig, LlmError};

enum Behaviour {
    /// Replies with the prompt it received.
    Echo,
    Status(u16),
    Sleep(Duration),
    Garbage,
}

/// A one-thread HTTP server that answers every request per `behaviour`.
fn mock(behaviour: Behaviour) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            counter.fetch_add(1, Ordering::SeqCst);
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            let (status, payload) = match &behaviour {
                Behaviour::Echo => {
                    let request: serde_json::Value = serde_json::from_slice(&body).unwrap();
                    assert!(request["model"].is_string());
                    let content = request["messages"][0]["content"].clone();
                    (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string())
                }
                Behaviour::Status(code) => (*code, "{}".to_string()),
                Behaviour::Sleep(d) => {
                    thread::sleep(*d);
                    (200, r#"{"choices":[{"message":{"content":"late"}}]}"#.to_string())
                }
                Behaviour::Garbage => (200, "not json".to_string()),
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    (url, hits)
}

fn client(url: &str, timeout_ms: u64, retries: u32) -> HttpLlmClient {
    HttpLlmClient::new(LlmConfig {
        timeout_ms,
        retries,
        ..LlmConfig::new(url)
    })
}

#[test]
fn echo_server_round_trip() {
    let (url, _) = mock(Behaviour::Echo);
    assert_eq!(client(&url, 5000, 0).complete("hello there").unwrap(), "hello there");
}

#[test]
fn non_success_status_is_unavailable_after_retries() {
    let (url, hits) = mock(Behaviour::Status(500));
    let err = client(&url, 5000, 2).complete("x").unwrap_err();
    assert!(matches!(err, LlmError::Unavailable(_)));
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn slow_server_times_out() {
    let (url, _) = mock(Behaviour::Sleep(Duration::from_secs(3)));
    let started = std::time::Instant::now();
    let err = client(&url, 300, 0).complete("x").unwrap_err();
    assert!(matches!(err, LlmError::Unavailable(_)));
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn malformed_body_and_unreachable_endpoint() {
    let (url, _) = mock(Behaviour::Garbage);
    assert!(client(&url, 5000, 0).complete("x").is_err());
    let closed = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", closed.local_addr().unwrap());
    drop(closed);
    assert!(matches!(client(&url, 2000, 0).complete("x"), Err(LlmError::Unavailable(_))));
}
