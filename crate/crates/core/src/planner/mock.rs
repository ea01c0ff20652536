//! Local chat-completion server that replays recorded replies, for running
//! the planner without network access or credentials.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One scripted response. `content` is wrapped in a chat-completion body
/// unless `raw_body` is given, which is sent verbatim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockReply {
    #[serde(default = "ok_status")]
    pub status: u16,
    #[serde(default)]
    pub content: Option<String>,
    #[serde(default)]
    pub raw_body: Option<String>,
    #[serde(default)]
    pub delay_ms: u64,
}

fn ok_status() -> u16 {
    200
}

impl MockReply {
    pub fn ok(content: impl Into<String>) -> Self {
        Self { status: 200, content: Some(content.into()), raw_body: None, delay_ms: 0 }
    }

    pub fn status(status: u16) -> Self {
        Self { status, content: None, raw_body: Some("{\"error\":\"mock\"}".into()), delay_ms: 0 }
    }

    pub fn raw(body: impl Into<String>) -> Self {
        Self { status: 200, content: None, raw_body: Some(body.into()), delay_ms: 0 }
    }

    pub fn delayed(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    fn body(&self) -> String {
        match (&self.raw_body, &self.content) {
            (Some(raw), _) => raw.clone(),
            (None, content) => serde_json::json!({
                "choices": [{"index": 0, "message": {"role": "assistant", "content": content.clone().unwrap_or_default()}}]
            })
            .to_string(),
        }
    }
}

/// Replies are served in order; the last one repeats once the list runs out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    pub replies: Vec<MockReply>,
}

impl MockFixture {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let fixture: Self = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        if fixture.replies.is_empty() {
            return Err(Error::Parse(format!("{}: fixture has no replies", path.display())));
        }
        Ok(fixture)
    }
}

pub struct MockLlmServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<String>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockLlmServer {
    pub fn start(fixture: MockFixture) -> Result<Self> {
        if fixture.replies.is_empty() {
            return Err(Error::Argument("mock fixture has no replies".into()));
        }
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (requests, bodies, stop) = (requests.clone(), bodies.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let Some(body) = read_request(&stream) else { continue };
                    let i = requests.fetch_add(1, Ordering::SeqCst);
                    bodies.lock().push(body);
                    let reply = &fixture.replies[i.min(fixture.replies.len() - 1)];
                    if reply.delay_ms > 0 {
                        std::thread::sleep(Duration::from_millis(reply.delay_ms));
                    }
                    // the client may have given up already
                    let _ = write_response(stream, reply);
                }
            })
        };
        Ok(Self { addr, requests, bodies, stop, handle: Some(handle) })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}/v1/chat/completions", self.addr)
    }

    /// Requests received so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn request_bodies(&self) -> Vec<String> {
        self.bodies.lock().clone()
    }
}

impl Drop for MockLlmServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn read_request(stream: &TcpStream) -> Option<String> {
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    let mut reader = BufReader::new(stream);
    let mut content_length = 0usize;
    let mut first = true;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).ok()? == 0 {
            return None;
        }
        let line = line.trim_end();
        if first {
            first = false;
            if !line.starts_with("POST ") {
                return None;
            }
            continue;
        }
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().ok()?;
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).ok()?;
    String::from_utf8(body).ok()
}

fn write_response(mut stream: TcpStream, reply: &MockReply) -> std::io::Result<()> {
    let body = reply.body();
    let reason = if (200..300).contains(&reply.status) { "OK" } else { "Error" };
    write!(
        stream,
        "HTTP/1.1 {} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        reply.status,
        body.len()
    )?;
    stream.flush()
}
