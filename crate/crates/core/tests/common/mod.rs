#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

type Responder = Arc<dyn Fn(usize, &str) -> (u16, String) + Send + Sync>;

/// Minimal HTTP/1.1 server that records request bodies and answers every
/// request with a fixed status and body.
pub struct StubServer {
    pub url: String,
    pub bodies: Arc<Mutex<Vec<String>>>,
}

impl StubServer {
    pub fn start(status: u16, response_body: String) -> Self {
        Self::start_with(move |_, _| (status, response_body.clone()))
    }

    /// `respond` gets the zero-based request number and the request body.
    pub fn start_with(respond: impl Fn(usize, &str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let respond: Responder = Arc::new(respond);
        let shared = bodies.clone();
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let bodies = shared.clone();
                let respond = respond.clone();
                thread::spawn(move || serve(stream, bodies, respond));
            }
        });
        Self {
            url: format!("http://{addr}/v1/chat/completions"),
            bodies,
        }
    }

    pub fn bodies(&self) -> Vec<String> {
        self.bodies.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, bodies: Arc<Mutex<Vec<String>>>, respond: Responder) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut stream = stream;
    loop {
        let mut content_length = 0usize;
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
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
                if k.eq_ignore_ascii_case("content-length") {
                    content_length = v.trim().parse().unwrap_or(0);
                }
            }
        }
        let mut body = vec![0u8; content_length];
        if reader.read_exact(&mut body).is_err() {
            return;
        }
        let body = String::from_utf8_lossy(&body).into_owned();
        let n = {
            let mut b = bodies.lock().unwrap();
            b.push(body.clone());
            b.len() - 1
        };
        let (status, payload) = respond(n, &body);
        let resp = format!(
            "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{payload}",
            payload.len()
        );
        if stream.write_all(resp.as_bytes()).is_err() {
            return;
        }
    }
}

/// A chat-completion response whose assistant content is `content`.
pub fn completion(content: &str) -> String {
    serde_json::json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}
