//! A one-route HTTP server standing in for a chat-completion endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

#[derive(Clone)]
pub enum Reply {
    Content(String),
    Raw(u16, String),
    Stall(Duration),
}

pub struct MockLlm {
    pub url: String,
    pub requests: Arc<Mutex<Vec<serde_json::Value>>>,
}

pub fn serve(reply: Reply) -> MockLlm {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let reply = reply.clone();
            let log = log.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let l = line.trim_end().to_ascii_lowercase();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                if let Ok(v) = serde_json::from_slice(&body) {
                    log.lock().unwrap().push(v);
                }
                let (status, text) = match reply {
                    Reply::Content(c) => {
                        (200, serde_json::json!({"choices": [{"message": {"role": "assistant", "content": c}}]}).to_string())
                    }
                    Reply::Raw(s, t) => (s, t),
                    Reply::Stall(d) => {
                        std::thread::sleep(d);
                        (200, "{}".to_string())
                    }
                };
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
            });
        }
    });
    MockLlm { url, requests }
}
