//! TCP synthesis service.
//!
//! One listener serves three transports, told apart by the first bytes of a
//! connection: length-prefixed JSON (first byte `0x00`), a WebSocket session
//! (`GET /session` upgrade) and plain HTTP (`GET /health`, `POST /frame`).

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use anyhow::{Context, Result};
use tungstenite::{Message, WebSocket};

use crate::protocol::{read_message, write_message, ClientMessage, PoseRequest, ServerMessage, MAX_REQUEST_BYTES};
use crate::render::Renderer;
use crate::session::{Outgoing, Session};

pub struct Server {
    listener: TcpListener,
    renderer: Arc<Renderer>,
    http_sequence: Arc<AtomicU64>,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, renderer: Renderer) -> Result<Self> {
        let listener = TcpListener::bind(addr).context("binding the service socket")?;
        Ok(Self {
            listener,
            renderer: Arc::new(renderer),
            http_sequence: Arc::new(AtomicU64::new(0)),
        })
    }

    pub fn local_addr(&self) -> io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts connections forever, one thread per connection.
    pub fn run(self) -> Result<()> {
        for stream in self.listener.incoming() {
            let stream = match stream {
                Ok(s) => s,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    continue;
                }
            };
            let renderer = Arc::clone(&self.renderer);
            let seq = Arc::clone(&self.http_sequence);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = serve_connection(stream, renderer, seq) {
                    log::debug!("connection {peer:?} ended: {e:#}");
                }
            });
        }
        Ok(())
    }
}

fn serve_connection(stream: TcpStream, renderer: Arc<Renderer>, seq: Arc<AtomicU64>) -> Result<()> {
    stream.set_nodelay(true)?;
    let head = peek_head(&stream, 12)?;
    if head.is_empty() {
        return Ok(());
    }
    if head[0] == 0 {
        serve_framed(stream, renderer)
    } else if head.starts_with(b"GET /session") {
        let ws = tungstenite::accept(stream).map_err(|e| anyhow::anyhow!("websocket handshake: {e}"))?;
        serve_websocket(ws, renderer)
    } else {
        serve_http(stream, &renderer, &seq)
    }
}

/// Peeks until `want` bytes are buffered, the peer stops sending, or the
/// stream ends.
fn peek_head(stream: &TcpStream, want: usize) -> io::Result<Vec<u8>> {
    let mut buf = vec![0u8; want];
    let mut n = stream.peek(&mut buf)?;
    for _ in 0..200 {
        if n == 0 || n >= want || buf[..n].contains(&b'\n') {
            break;
        }
        thread::sleep(Duration::from_millis(1));
        n = stream.peek(&mut buf)?;
    }
    buf.truncate(n);
    Ok(buf)
}

fn encode(msg: &ServerMessage) -> Vec<u8> {
    serde_json::to_vec(msg).expect("server messages serialize")
}

fn serve_framed(stream: TcpStream, renderer: Arc<Renderer>) -> Result<()> {
    let (tx, rx) = mpsc::channel();
    let mut reader = stream.try_clone()?;
    let reader_renderer = Arc::clone(&renderer);
    let reader_thread = thread::spawn(move || {
        let session = Session::start(Arc::clone(&reader_renderer), tx);
        loop {
            match read_message(&mut reader, MAX_REQUEST_BYTES) {
                Ok(Some(raw)) => session.handle(&reader_renderer, &raw),
                Ok(None) => break,
                Err(e) => {
                    log::debug!("framed read: {e}");
                    break;
                }
            }
        }
        session.finish();
    });
    let mut writer = stream;
    let mut result = Ok(());
    for out in rx {
        let sent = match out {
            Outgoing::Message(m) => write_message(&mut writer, &encode(&m)),
            Outgoing::Frame(h, png) => write_message(&mut writer, &encode(&ServerMessage::Frame(h)))
                .and_then(|_| write_message(&mut writer, &png)),
        };
        if let Err(e) = sent {
            result = Err(e.into());
            let _ = writer.shutdown(std::net::Shutdown::Both);
            break;
        }
    }
    let _ = reader_thread.join();
    result
}

fn serve_websocket(mut ws: WebSocket<TcpStream>, renderer: Arc<Renderer>) -> Result<()> {
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(2)))?;
    let (tx, rx) = mpsc::channel();
    let session = Session::start(Arc::clone(&renderer), tx);
    let result = loop {
        while let Ok(out) = rx.try_recv() {
            match out {
                Outgoing::Message(m) => ws.send(Message::text(String::from_utf8(encode(&m))?))?,
                Outgoing::Frame(h, png) => {
                    ws.send(Message::text(String::from_utf8(encode(&ServerMessage::Frame(h)))?))?;
                    ws.send(Message::binary(png))?;
                }
            }
        }
        match ws.read() {
            Ok(Message::Text(t)) => session.handle(&renderer, t.as_bytes()),
            Ok(Message::Binary(_)) => session.reject("requests must be text messages"),
            Ok(Message::Close(_)) => break Ok(()),
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => break Ok(()),
            Err(e) => break Err(e.into()),
        }
    };
    session.finish();
    result
}

struct HttpRequest {
    method: String,
    path: String,
    body: Vec<u8>,
}

fn read_http_request(stream: &TcpStream) -> Result<HttpRequest> {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut length = 0usize;
    let mut header_bytes = 0usize;
    loop {
        let mut h = String::new();
        let n = reader.read_line(&mut h)?;
        header_bytes += n;
        anyhow::ensure!(header_bytes <= 64 * 1024, "request headers too large");
        let h = h.trim_end();
        if n == 0 || h.is_empty() {
            break;
        }
        if let Some((name, value)) = h.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().context("invalid content-length")?;
            }
        }
    }
    anyhow::ensure!(length <= MAX_REQUEST_BYTES, "request body too large");
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;
    Ok(HttpRequest { method, path, body })
}

fn respond(
    mut stream: &TcpStream,
    status: &str,
    content_type: &str,
    extra: &[(&str, String)],
    body: &[u8],
) -> io::Result<()> {
    let mut head = format!(
        "HTTP/1.1 {status}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n",
        body.len()
    );
    for (k, v) in extra {
        head.push_str(&format!("{k}: {v}\r\n"));
    }
    head.push_str("\r\n");
    stream.write_all(head.as_bytes())?;
    stream.write_all(body)?;
    stream.flush()
}

fn json_error(stream: &TcpStream, status: &str, message: String) -> io::Result<()> {
    let body = encode(&ServerMessage::Error {
        request_id: None,
        message,
    });
    respond(stream, status, "application/json", &[], &body)
}

fn serve_http(stream: TcpStream, renderer: &Renderer, seq: &AtomicU64) -> Result<()> {
    let req = match read_http_request(&stream) {
        Ok(r) => r,
        Err(e) => {
            json_error(&stream, "400 Bad Request", format!("{e:#}"))?;
            return Ok(());
        }
    };
    match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/health") => {
            let body = serde_json::to_vec(&renderer.health())?;
            respond(&stream, "200 OK", "application/json", &[], &body)?;
        }
        ("POST", "/frame") => {
            let parsed = serde_json::from_slice::<PoseRequest>(&req.body).or_else(|e| {
                match serde_json::from_slice::<ClientMessage>(&req.body) {
                    Ok(ClientMessage::Pose(p)) => Ok(p),
                    _ => Err(e),
                }
            });
            let pose = match parsed {
                Ok(p) => p,
                Err(e) => {
                    json_error(&stream, "400 Bad Request", format!("malformed request: {e}"))?;
                    return Ok(());
                }
            };
            match renderer.render(&pose) {
                Ok(r) => {
                    let n = seq.fetch_add(1, Ordering::SeqCst) + 1;
                    let headers = [
                        ("X-Sequence", n.to_string()),
                        ("X-Latency-Ms", format!("{:.3}", r.latency_ms)),
                        ("X-Hole-Fraction", format!("{:.6}", r.hole_fraction)),
                    ];
                    respond(&stream, "200 OK", "image/png", &headers, &r.png)?;
                }
                Err(e) => json_error(&stream, "422 Unprocessable Entity", format!("{e:#}"))?,
            }
        }
        (_, "/health" | "/frame" | "/session") => {
            json_error(&stream, "405 Method Not Allowed", format!("{} not allowed on {}", req.method, req.path))?
        }
        _ => json_error(&stream, "404 Not Found", format!("no route {}", req.path))?,
    }
    Ok(())
}
