//! External-scorer wire protocol.
//!
//! Newline-delimited JSON over the scorer's stdio or a local TCP socket.
//! Request: `{"id":N,"slide":"...","x":...,"y":...,"side":...}`; response:
//! `{"id":N,"p":0.0-1.0}`. Responses may arrive out of order and are matched
//! by id; unmatched responses are parked until their request asks for them.
//! Each request has a configurable timeout (default 30 s).

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Tile;
use crate::inference::TileScorer;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    id: u64,
    slide: &'a str,
    x: u32,
    y: u32,
    side: u32,
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    id: u64,
    p: f64,
}

/// Where the external scorer lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtoAddr {
    /// Connect to a TCP listener, e.g. `127.0.0.1:9000`.
    Tcp(String),
    /// Spawn a subprocess and talk over its stdio.
    Stdio(Vec<String>),
}

impl ProtoAddr {
    /// Parses the CLI form: `HOST:PORT` or `stdio:CMD ARG...`.
    pub fn parse(addr: &str) -> Result<ProtoAddr> {
        if let Some(cmd) = addr.strip_prefix("stdio:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::invalid("stdio scorer needs a command"));
            }
            return Ok(ProtoAddr::Stdio(argv));
        }
        if addr.contains(':') {
            return Ok(ProtoAddr::Tcp(addr.to_string()));
        }
        Err(Error::invalid(format!(
            "classifier address `{addr}` is neither HOST:PORT nor stdio:CMD"
        )))
    }
}

struct Connection {
    writer: Box<dyn Write + Send>,
    /// Lines produced by the reader thread.
    incoming: Receiver<std::io::Result<String>>,
    /// Responses that arrived before their request asked for them.
    parked: HashMap<u64, f64>,
    next_id: u64,
    child: Option<Child>,
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// Protocol client; one connection, requests serialized by an internal lock.
pub struct ProtoScorer {
    conn: Mutex<Connection>,
    timeout: Duration,
}

impl ProtoScorer {
    pub fn connect(addr: &ProtoAddr, timeout: Duration) -> Result<ProtoScorer> {
        let conn = match addr {
            ProtoAddr::Tcp(hostport) => {
                let stream = std::net::TcpStream::connect(hostport).map_err(|e| {
                    Error::Classifier {
                        x: 0,
                        y: 0,
                        reason: format!("connect {hostport}: {e}"),
                    }
                })?;
                stream.set_nodelay(true).ok();
                let reader = stream.try_clone()?;
                Connection {
                    writer: Box::new(stream),
                    incoming: spawn_reader(reader),
                    parked: HashMap::new(),
                    next_id: 1,
                    child: None,
                }
            }
            ProtoAddr::Stdio(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .spawn()
                    .map_err(|e| Error::Classifier {
                        x: 0,
                        y: 0,
                        reason: format!("spawn {}: {e}", argv[0]),
                    })?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Connection {
                    writer: Box::new(stdin),
                    incoming: spawn_reader(stdout),
                    parked: HashMap::new(),
                    next_id: 1,
                    child: Some(child),
                }
            }
        };
        Ok(ProtoScorer {
            conn: Mutex::new(conn),
            timeout,
        })
    }

    fn request(&self, slide_id: &str, tile: &Tile) -> Result<f64> {
        let mut conn = self.conn.lock().expect("proto connection poisoned");
        let id = conn.next_id;
        conn.next_id += 1;

        let classifier_err = |reason: String| Error::Classifier {
            x: tile.x,
            y: tile.y,
            reason,
        };

        let line = serde_json::to_string(&ScoreRequest {
            id,
            slide: slide_id,
            x: tile.x,
            y: tile.y,
            side: tile.side,
        })?;
        conn.writer
            .write_all(line.as_bytes())
            .and_then(|_| conn.writer.write_all(b"\n"))
            .and_then(|_| conn.writer.flush())
            .map_err(|e| classifier_err(format!("send: {e}")))?;

        let deadline = Instant::now() + self.timeout;
        loop {
            if let Some(p) = conn.parked.remove(&id) {
                return Ok(p);
            }
            let remaining = deadline
                .checked_duration_since(Instant::now())
                .ok_or_else(|| classifier_err(format!("timeout after {:?}", self.timeout)))?;
            let line = match conn.incoming.recv_timeout(remaining) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(classifier_err(format!("read: {e}"))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(classifier_err(format!("timeout after {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(classifier_err("scorer closed the connection".into()))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: ScoreResponse = serde_json::from_str(&line)
                .map_err(|e| classifier_err(format!("malformed response `{line}`: {e}")))?;
            if resp.id == id {
                return Ok(resp.p);
            }
            conn.parked.insert(resp.id, resp.p);
        }
    }
}

impl TileScorer for ProtoScorer {
    fn score(&self, slide_id: &str, tile: &Tile) -> Result<f64> {
        self.request(slide_id, tile)
    }
}

fn spawn_reader<R: Read + Send + 'static>(reader: R) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let buf = BufReader::new(reader);
        for line in buf.lines() {
            let is_err = line.is_err();
            if tx.send(line).is_err() || is_err {
                break;
            }
        }
    });
    rx
}
