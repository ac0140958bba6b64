//! Minimal blocking HTTP server that plays an external service in tests.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

#[derive(Debug, Clone)]
pub enum StubBehavior {
    /// `{"text": ...}`; `{intent}` and `{lang}` in the template are substituted.
    Reply(String),
    /// Sleeps, then replies.
    Delay(Duration, String),
    /// 200 with a body that is not the expected JSON shape.
    Malformed,
    Status(u16),
}

/// Runs until dropped.
pub struct StubService {
    addr: SocketAddr,
    requests: Arc<Mutex<Vec<String>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubService {
    pub fn start(behavior: StubBehavior) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let (reqs, flag) = (requests.clone(), stop.clone());
        let handle = thread::spawn(move || {
            for stream in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                if let Ok(stream) = stream {
                    let (b, r) = (behavior.clone(), reqs.clone());
                    thread::spawn(move || {
                        let _ = serve(stream, &b, &r);
                    });
                }
            }
        });
        Ok(Self { addr, requests, stop, handle: Some(handle) })
    }

    pub fn url(&self) -> String {
        format!("http://{}/service", self.addr)
    }

    /// Request targets (path + query) received so far.
    pub fn requests(&self) -> Vec<String> {
        self.requests.lock().unwrap().clone()
    }
}

impl Drop for StubService {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn query_param(target: &str, key: &str) -> String {
    target
        .split_once('?')
        .map(|(_, q)| q)
        .unwrap_or("")
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == key)
        .map(|(_, v)| v.to_string())
        .unwrap_or_default()
}

fn serve(stream: TcpStream, behavior: &StubBehavior, requests: &Mutex<Vec<String>>) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 || line == "\r\n" || line == "\n" {
            break;
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    requests.lock().unwrap().push(target.clone());

    let render = |template: &str| {
        let text = template.replace("{intent}", &query_param(&target, "intent")).replace("{lang}", &query_param(&target, "lang"));
        (200, serde_json::json!({ "text": text }).to_string())
    };
    let (status, body) = match behavior {
        StubBehavior::Reply(t) => render(t),
        StubBehavior::Delay(d, t) => {
            thread::sleep(*d);
            render(t)
        }
        StubBehavior::Malformed => (200, "{\"txet\": 42".to_string()),
        StubBehavior::Status(code) => (*code, "{}".to_string()),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    stream.flush()
}
