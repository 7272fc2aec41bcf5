//! Loopback transports: newline-delimited JSON over TCP (requests,
//! responses and pushed events) and an HTTP shim for plain request/response.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::Value;

use super::protocol::{handle, handle_line, request_path};
use super::Host;

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    /// TCP port for NDJSON; 0 picks a free port.
    pub port: u16,
    pub http_port: Option<u16>,
    /// Poll open documents for out-of-band changes at this interval.
    pub watch_interval: Option<Duration>,
}

type Job = (Value, Sender<String>);

/// Serializes requests per document path in arrival order.
struct Router {
    host: Arc<Host>,
    workers: Mutex<HashMap<String, Sender<Job>>>,
}

impl Router {
    fn route(self: &Arc<Self>, request: Value, reply: Sender<String>) {
        let Some(path) = request_path(&request).map(str::to_string) else {
            let host = self.host.clone();
            thread::spawn(move || {
                let _ = reply.send(handle(&host, request).to_string());
            });
            return;
        };
        let mut workers = self.workers.lock().unwrap();
        let worker = workers.entry(path).or_insert_with(|| {
            let (tx, rx) = mpsc::channel::<Job>();
            let host = self.host.clone();
            thread::spawn(move || {
                for (request, reply) in rx {
                    let _ = reply.send(handle(&host, request).to_string());
                }
            });
            tx
        });
        let _ = worker.send((request, reply));
    }
}

pub struct Server {
    addr: SocketAddr,
    http_addr: Option<SocketAddr>,
    stop: Arc<AtomicBool>,
    http: Option<Arc<tiny_http::Server>>,
    threads: Vec<JoinHandle<()>>,
}

impl Server {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn http_addr(&self) -> Option<SocketAddr> {
        self.http_addr
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(http) = &self.http {
            for _ in 0..self.threads.len() {
                http.unblock();
            }
        }
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

fn serve_connection(stream: TcpStream, router: Arc<Router>) {
    let Ok(write_half) = stream.try_clone() else {
        return;
    };
    let (tx, rx) = mpsc::channel::<String>();
    let writer = thread::spawn(move || {
        let mut out = std::io::BufWriter::new(write_half);
        for line in rx {
            if writeln!(out, "{line}").and_then(|_| out.flush()).is_err() {
                break;
            }
        }
    });

    let (ev_tx, ev_rx) = mpsc::channel();
    let sub = router.host.subscribe(ev_tx);
    let bridge_tx = tx.clone();
    let bridge = thread::spawn(move || {
        for ev in ev_rx {
            let line = serde_json::to_string(&ev).expect("events serialize");
            if bridge_tx.send(line).is_err() {
                break;
            }
        }
    });

    for line in BufReader::new(stream).lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Value>(&line) {
            Ok(request) => router.route(request, tx.clone()),
            Err(_) => {
                let _ = tx.send(handle_line(&router.host, &line).to_string());
            }
        }
    }
    router.host.unsubscribe(sub);
    drop(tx);
    let _ = bridge.join();
    let _ = writer.join();
}

fn serve_http(server: Arc<tiny_http::Server>, host: Arc<Host>, stop: Arc<AtomicBool>) {
    while !stop.load(Ordering::SeqCst) {
        let Ok(mut request) = server.recv() else { break };
        let json_header =
            tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
        let response = match (request.method(), request.url()) {
            (tiny_http::Method::Post, "/rpc") => {
                let mut body = String::new();
                let reply = match request.as_reader().read_to_string(&mut body) {
                    Ok(_) => handle_line(&host, &body),
                    Err(e) => serde_json::json!({"requestId": null, "ok": false,
                        "error": {"code": "io", "message": e.to_string()}}),
                };
                tiny_http::Response::from_string(reply.to_string()).with_header(json_header)
            }
            (tiny_http::Method::Get, "/health") => {
                tiny_http::Response::from_string("{\"ok\":true}").with_header(json_header)
            }
            _ => tiny_http::Response::from_string("not found").with_status_code(404),
        };
        let _ = request.respond(response);
    }
}

/// Binds the loopback listeners and starts serving in background threads.
pub fn start(host: Arc<Host>, options: &ServeOptions) -> std::io::Result<Server> {
    let listener = TcpListener::bind(("127.0.0.1", options.port))?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let router = Arc::new(Router {
        host: host.clone(),
        workers: Mutex::new(HashMap::new()),
    });
    let mut threads = Vec::new();

    let accept_stop = stop.clone();
    threads.push(thread::spawn(move || {
        for stream in listener.incoming() {
            if accept_stop.load(Ordering::SeqCst) {
                break;
            }
            if let Ok(stream) = stream {
                let router = router.clone();
                thread::spawn(move || serve_connection(stream, router));
            }
        }
    }));

    let mut http = None;
    let mut http_addr = None;
    if let Some(port) = options.http_port {
        let server = tiny_http::Server::http(("127.0.0.1", port))
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        http_addr = server.server_addr().to_ip();
        let server = Arc::new(server);
        for _ in 0..4 {
            let (server, host, stop) = (server.clone(), host.clone(), stop.clone());
            threads.push(thread::spawn(move || serve_http(server, host, stop)));
        }
        http = Some(server);
    }

    if let Some(interval) = options.watch_interval {
        let (host, stop) = (host.clone(), stop.clone());
        thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                thread::sleep(interval);
                host.poll_external_changes();
            }
        });
    }

    Ok(Server {
        addr,
        http_addr,
        stop,
        http,
        threads,
    })
}
