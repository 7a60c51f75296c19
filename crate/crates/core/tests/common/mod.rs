//! A minimal in-process HTTP server that answers chat-completion requests
//! from a script, recording every request it receives.

#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};

pub type Handler = dyn Fn(&Value, usize) -> (u16, String) + Send + Sync;

#[derive(Debug, Clone)]
pub struct Recorded {
    pub body: Value,
    pub authorization: Option<String>,
}

pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    pub active: Arc<AtomicUsize>,
    pub peak: Arc<AtomicUsize>,
}

impl StubServer {
    /// Serves until the process exits; `handler` gets the request body and
    /// its zero-based arrival index.
    pub fn start(handler: impl Fn(&Value, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests: Arc<Mutex<Vec<Recorded>>> = Arc::default();
        let active: Arc<AtomicUsize> = Arc::default();
        let peak: Arc<AtomicUsize> = Arc::default();
        let handler: Arc<Handler> = Arc::new(handler);
        let (req2, act2, peak2) = (requests.clone(), active.clone(), peak.clone());
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (h, r, a, p) = (handler.clone(), req2.clone(), act2.clone(), peak2.clone());
                thread::spawn(move || serve(stream, &*h, &r, &a, &p));
            }
        });
        Self { url, requests, active, peak }
    }

    pub fn bodies(&self) -> Vec<Value> {
        self.requests.lock().unwrap().iter().map(|r| r.body.clone()).collect()
    }

    pub fn count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

fn serve(
    stream: TcpStream,
    handler: &Handler,
    requests: &Mutex<Vec<Recorded>>,
    active: &AtomicUsize,
    peak: &AtomicUsize,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            match k.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = v.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let now = active.fetch_add(1, Ordering::SeqCst) + 1;
    peak.fetch_max(now, Ordering::SeqCst);
    let index = {
        let mut r = requests.lock().unwrap();
        r.push(Recorded { body: body.clone(), authorization });
        r.len() - 1
    };
    let (status, payload) = handler(&body, index);
    active.fetch_sub(1, Ordering::SeqCst);
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.flush();
}

/// A completion with one choice per reply text.
pub fn completion(replies: &[&str]) -> String {
    let choices: Vec<Value> = replies
        .iter()
        .enumerate()
        .map(|(i, r)| json!({"index": i, "message": {"role": "assistant", "content": r}, "finish_reason": "stop"}))
        .collect();
    json!({"id": "stub", "object": "chat.completion", "choices": choices}).to_string()
}

/// A one-token completion whose first token carries `top` log-probabilities.
pub fn logprob_completion(token: &str, top: &[(&str, f64)]) -> String {
    let top: Vec<Value> = top.iter().map(|(t, p)| json!({"token": t, "logprob": p.ln(), "bytes": []})).collect();
    json!({
        "id": "stub",
        "object": "chat.completion",
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": token},
            "logprobs": {"content": [{"token": token, "logprob": top.first().map(|t| t["logprob"].clone()).unwrap_or(json!(0.0)), "top_logprobs": top}]},
            "finish_reason": "length"
        }]
    })
    .to_string()
}

/// Text of the last user message in a request body.
pub fn user_text(body: &Value) -> String {
    body["messages"]
        .as_array()
        .and_then(|m| m.iter().rev().find(|x| x["role"] == "user"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string()
}

pub fn system_text(body: &Value) -> String {
    body["messages"]
        .as_array()
        .and_then(|m| m.iter().find(|x| x["role"] == "system"))
        .and_then(|m| m["content"].as_str())
        .unwrap_or_default()
        .to_string()
}
