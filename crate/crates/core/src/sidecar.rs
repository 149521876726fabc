//! Client for an external embedding service.
//!
//! Every record on the wire is a frame: a u32 big-endian byte length followed
//! by that many bytes of UTF-8 JSON. On connect the server sends one
//! handshake frame
//!
//! ```text
//! {"model": "<id>", "dim": 768, "pooling": "mean", "protocol": 1}
//! ```
//!
//! after which the client sends `{"request_id": "<id>", "text": "<text>"}`
//! frames and the server answers each in order with either
//! `{"request_id": "<id>", "vector": [..dim numbers..], "truncated": <bool>}`
//! or `{"request_id": "<id>", "error": "<message>"}`.

use std::io::{self, Read, Write};
use std::net::TcpStream;
#[cfg(unix)]
use std::os::unix::net::UnixStream;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::encoder::TextEncoder;
use crate::error::{Error, Result, SidecarError};

pub const PROTOCOL_VERSION: u32 = 1;
/// Frames above this size are treated as protocol violations.
pub const MAX_FRAME: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub model: String,
    pub dim: usize,
    pub pooling: String,
    pub protocol: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub request_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncated: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, value: &T) -> Result<(), SidecarError> {
    let body = serde_json::to_vec(value).map_err(|e| SidecarError::Protocol(e.to_string()))?;
    if body.len() > MAX_FRAME {
        return Err(SidecarError::Protocol(format!("frame of {} bytes is too large", body.len())));
    }
    w.write_all(&(body.len() as u32).to_be_bytes())
        .and_then(|_| w.write_all(&body))
        .and_then(|_| w.flush())
        .map_err(SidecarError::Transport)
}

pub fn read_frame<R: Read, T: for<'de> Deserialize<'de>>(r: &mut R) -> Result<T, SidecarError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len).map_err(SidecarError::Transport)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(SidecarError::Protocol(format!("frame of {len} bytes is too large")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).map_err(SidecarError::Transport)?;
    let text = std::str::from_utf8(&body).map_err(|_| SidecarError::Protocol("frame is not UTF-8".into()))?;
    serde_json::from_str(text).map_err(|e| SidecarError::Protocol(format!("bad record: {e}")))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    #[cfg(unix)]
    Unix(std::path::PathBuf),
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    /// `tcp://host:port` or `unix:/path/to/socket`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) {
                return Ok(Endpoint::Tcp(addr.to_string()));
            }
        }
        #[cfg(unix)]
        if let Some(path) = s.strip_prefix("unix:") {
            let path = path.trim_start_matches("//");
            if !path.is_empty() {
                return Ok(Endpoint::Unix(path.into()));
            }
        }
        Err(Error::config(
            "sidecar-endpoint",
            format!("`{s}` is not tcp://host:port or unix:/path"),
        ))
    }
}

enum Stream {
    Tcp(TcpStream),
    #[cfg(unix)]
    Unix(UnixStream),
}

impl Stream {
    fn open(endpoint: &Endpoint, timeout: Duration) -> io::Result<Self> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let s = TcpStream::connect(addr)?;
                s.set_read_timeout(Some(timeout))?;
                s.set_write_timeout(Some(timeout))?;
                s.set_nodelay(true)?;
                Ok(Stream::Tcp(s))
            }
            #[cfg(unix)]
            Endpoint::Unix(path) => {
                let s = UnixStream::connect(path)?;
                s.set_read_timeout(Some(timeout))?;
                s.set_write_timeout(Some(timeout))?;
                Ok(Stream::Unix(s))
            }
        }
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            #[cfg(unix)]
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            #[cfg(unix)]
            Stream::Unix(s) => s.flush(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientOptions {
    pub timeout: Duration,
    /// Extra attempts after a transport failure, each on a fresh connection.
    pub retries: u32,
}

impl Default for ClientOptions {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            retries: 2,
        }
    }
}

struct Connection {
    stream: Stream,
    next_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f64>,
    pub truncated: bool,
}

pub struct SidecarClient {
    endpoint: Endpoint,
    options: ClientOptions,
    handshake: Handshake,
    conn: Mutex<Option<Connection>>,
}

impl std::fmt::Debug for SidecarClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SidecarClient")
            .field("endpoint", &self.endpoint)
            .field("handshake", &self.handshake)
            .finish()
    }
}

fn open(endpoint: &Endpoint, options: &ClientOptions) -> Result<(Connection, Handshake), SidecarError> {
    let mut stream = Stream::open(endpoint, options.timeout).map_err(SidecarError::Transport)?;
    let hs: Handshake = read_frame(&mut stream)?;
    if hs.protocol != PROTOCOL_VERSION {
        return Err(SidecarError::Protocol(format!(
            "peer speaks protocol {} (expected {PROTOCOL_VERSION})",
            hs.protocol
        )));
    }
    if hs.dim == 0 {
        return Err(SidecarError::Protocol("peer advertises dimension 0".into()));
    }
    Ok((Connection { stream, next_id: 0 }, hs))
}

impl SidecarClient {
    pub fn connect(endpoint: Endpoint, options: ClientOptions) -> Result<Self, SidecarError> {
        let mut last = None;
        for _ in 0..=options.retries {
            match open(&endpoint, &options) {
                Ok((conn, handshake)) => {
                    return Ok(Self {
                        endpoint,
                        options,
                        handshake,
                        conn: Mutex::new(Some(conn)),
                    })
                }
                Err(SidecarError::Transport(e)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(SidecarError::Transport(last.unwrap()))
    }

    pub fn handshake(&self) -> &Handshake {
        &self.handshake
    }

    /// Sends one request. A transport failure drops the connection and the
    /// request is re-sent on a new one, up to `retries` times; error records
    /// and protocol violations are returned at once.
    pub fn embed(&self, text: &str) -> Result<Embedding, SidecarError> {
        let mut guard = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        let mut last = None;
        for _ in 0..=self.options.retries {
            if guard.is_none() {
                match open(&self.endpoint, &self.options) {
                    Ok((conn, hs)) if hs == self.handshake => *guard = Some(conn),
                    Ok(_) => return Err(SidecarError::Protocol("peer changed its handshake on reconnect".into())),
                    Err(SidecarError::Transport(e)) => {
                        last = Some(e);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
            let conn = guard.as_mut().unwrap();
            match self.exchange(conn, text) {
                Err(SidecarError::Transport(e)) => {
                    *guard = None;
                    last = Some(e);
                }
                Err(e @ SidecarError::Protocol(_)) => {
                    *guard = None;
                    return Err(e);
                }
                other => return other,
            }
        }
        Err(SidecarError::Transport(last.unwrap()))
    }

    fn exchange(&self, conn: &mut Connection, text: &str) -> Result<Embedding, SidecarError> {
        conn.next_id += 1;
        let request_id = format!("r{}", conn.next_id);
        write_frame(
            &mut conn.stream,
            &EmbedRequest {
                request_id: request_id.clone(),
                text: text.to_string(),
            },
        )?;
        let resp: EmbedResponse = read_frame(&mut conn.stream)?;
        if resp.request_id != request_id {
            return Err(SidecarError::Protocol(format!(
                "response for `{}` while waiting for `{request_id}`",
                resp.request_id
            )));
        }
        if let Some(message) = resp.error {
            return Err(SidecarError::Encoder { request_id, message });
        }
        let vector = resp
            .vector
            .ok_or_else(|| SidecarError::Protocol("response has neither vector nor error".into()))?;
        if vector.len() != self.handshake.dim {
            return Err(SidecarError::Protocol(format!(
                "vector of length {} (handshake says {})",
                vector.len(),
                self.handshake.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(SidecarError::Protocol("non-finite vector entry".into()));
        }
        Ok(Embedding {
            vector,
            truncated: resp.truncated.unwrap_or(false),
        })
    }
}

impl TextEncoder for SidecarClient {
    fn id(&self) -> String {
        format!(
            "sidecar-{}-{}-d{}",
            self.handshake.model, self.handshake.pooling, self.handshake.dim
        )
    }

    fn dim(&self) -> usize {
        self.handshake.dim
    }

    fn encode(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.embed(text)?.vector)
    }
}
