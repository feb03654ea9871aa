//! Serves any [`Provider`] over the sidecar protocol.
//!
//! [`handle`] maps one request to one response and is transport-free.
//! [`LocalServer`] is a small threaded HTTP/1.1 listener on loopback, used
//! for protocol tests and for running the pipeline against a local sidecar
//! stand-in.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::wire::{self, ErrorBody};
use crate::{Capability, GatewayError, Provider};

/// Largest request body accepted.
pub const MAX_BODY: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub method: String,
    pub path: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Response {
    pub fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Self {
            status,
            body: serde_json::to_vec(value).expect("serialisable body"),
        }
    }

    pub fn error(status: u16, message: impl Into<String>) -> Self {
        Self::json(status, &ErrorBody { error: message.into() })
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, GatewayError> {
    serde_json::from_slice(body).map_err(|e| GatewayError::BadRequest(format!("invalid JSON body: {e}")))
}

fn bad_input(e: GatewayError) -> GatewayError {
    match e {
        GatewayError::Malformed(m) => GatewayError::BadRequest(m),
        other => other,
    }
}

fn error_response(e: GatewayError) -> Response {
    match e {
        GatewayError::NoFace { index } => Response::error(wire::NO_FACE_STATUS, wire::no_face_message(index)),
        GatewayError::BadRequest(m) => Response::error(400, m),
        GatewayError::Unsupported(c) => Response::error(404, format!("capability {c} not provided")),
        GatewayError::NotFound(m) => Response::error(404, format!("artifact not found: {m}")),
        other => Response::error(500, other.to_string()),
    }
}

/// Dispatches one protocol request to `provider`.
pub fn handle(provider: &dyn Provider, req: &Request) -> Response {
    let caps = provider.capabilities();
    if req.method == "GET" && req.path == wire::HEALTH {
        return Response::json(
            200,
            &wire::Health {
                status: "ok".into(),
                capabilities: caps.iter().copied().collect(),
            },
        );
    }
    let capability = match Capability::ALL.into_iter().find(|c| wire::endpoint(*c) == req.path) {
        Some(c) => c,
        None => return Response::error(404, format!("unknown endpoint {}", req.path)),
    };
    if req.method != "POST" {
        return Response::error(405, format!("{} requires POST", req.path));
    }
    if !caps.contains(&capability) {
        return error_response(GatewayError::Unsupported(capability));
    }
    let result = (|| -> Result<Response, GatewayError> {
        fn ok<T: Serialize>(v: &T) -> Result<Response, GatewayError> {
            Ok(Response::json(200, v))
        }
        match capability {
            Capability::SampleLatent => {
                let r: wire::SampleRequest = parse(&req.body)?;
                let latents = provider.sample_latents(r.count, r.seed)?;
                ok(&wire::encode_latents(&latents)?)
            }
            Capability::DecodeLatent => {
                let r: wire::Latents = parse(&req.body)?;
                let latents = wire::decode_latents(&r).map_err(bad_input)?;
                ok(&wire::encode_images(&provider.decode_latents(&latents)?)?)
            }
            Capability::EmbedFace => {
                let images = wire::decode_images(&parse(&req.body)?).map_err(bad_input)?;
                ok(&wire::encode_embeddings(&provider.embed_faces(&images)?)?)
            }
            Capability::EstimatePose => {
                let images = wire::decode_images(&parse(&req.body)?).map_err(bad_input)?;
                ok(&wire::Poses {
                    poses: provider.estimate_poses(&images)?,
                })
            }
            Capability::DetectLandmarks => {
                let images = wire::decode_images(&parse(&req.body)?).map_err(bad_input)?;
                ok(&wire::Landmarks {
                    landmarks: provider.detect_landmarks(&images)?,
                })
            }
            Capability::LabelGender => {
                let images = wire::decode_images(&parse(&req.body)?).map_err(bad_input)?;
                ok(&wire::Genders {
                    genders: provider.label_genders(&images)?,
                })
            }
        }
    })();
    result.unwrap_or_else(error_response)
}

pub type Handler = Arc<dyn Fn(&Request) -> Response + Send + Sync>;

/// Loopback HTTP server; stops when dropped.
pub struct LocalServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl LocalServer {
    pub fn serve(provider: Arc<dyn Provider>) -> std::io::Result<Self> {
        Self::with_handler(Arc::new(move |req: &Request| handle(provider.as_ref(), req)))
    }

    pub fn with_handler(handler: Handler) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", handler)
    }

    pub fn bind(addr: &str, handler: Handler) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let handler = handler.clone();
                std::thread::spawn(move || {
                    if let Err(e) = serve_connection(stream, handler.as_ref()) {
                        tracing::debug!("connection error: {e}");
                    }
                });
            }
        });
        Ok(Self {
            addr,
            stop,
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the accept loop ends (never, unless stopped elsewhere).
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for LocalServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Wake the blocking accept.
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve_connection(stream: TcpStream, handler: &(dyn Fn(&Request) -> Response + Send + Sync)) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let mut parts = line.split_whitespace();
        let (Some(method), Some(target)) = (parts.next(), parts.next()) else {
            return write_response(&mut writer, &Response::error(400, "malformed request line"), true);
        };
        let (method, path) = (method.to_string(), target.split('?').next().unwrap_or("").to_string());
        let mut length = 0usize;
        let mut close = false;
        loop {
            let mut header = String::new();
            if reader.read_line(&mut header)? == 0 {
                return Ok(());
            }
            let header = header.trim_end();
            if header.is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                let (name, value) = (name.trim().to_ascii_lowercase(), value.trim());
                if name == "content-length" {
                    length = match value.parse() {
                        Ok(n) => n,
                        Err(_) => {
                            return write_response(&mut writer, &Response::error(400, "bad content-length"), true)
                        }
                    };
                } else if name == "connection" && value.eq_ignore_ascii_case("close") {
                    close = true;
                }
            }
        }
        if length > MAX_BODY {
            return write_response(&mut writer, &Response::error(413, "request body too large"), true);
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body)?;
        let response = handler(&Request { method, path, body });
        write_response(&mut writer, &response, close)?;
        if close {
            return Ok(());
        }
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        413 => "Payload Too Large",
        422 => "Unprocessable Entity",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}

fn write_response(w: &mut TcpStream, r: &Response, close: bool) -> std::io::Result<()> {
    let head = format!(
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: {}\r\n\r\n",
        r.status,
        reason(r.status),
        r.body.len(),
        if close { "close" } else { "keep-alive" }
    );
    w.write_all(head.as_bytes())?;
    w.write_all(&r.body)?;
    w.flush()
}
