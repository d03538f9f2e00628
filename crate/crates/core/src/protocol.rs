//! Newline-delimited JSON protocol spoken with an external model bridge.
//!
//! ```text
//! request  {"op":"embed","id":1,"texts":["..."]}
//! response {"id":1,"dim":768,"vectors":[[...]]}
//! request  {"op":"score","id":2,"pairs":[["source","target"]]}
//! response {"id":2,"scores":[0.73]}
//! error    {"id":2,"error":"message"}
//! ```
//!
//! The client side is [`BridgeClient`]; [`serve`] is a reference server
//! backed by the deterministic mock embedder and the lexical baseline
//! scorer, used for protocol tests and local runs without a model.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use serde_json::{json, Value};

use crate::embedprovider::{mock_embed, Lexicon};
use crate::error::{excerpt, Error, Result};
use crate::scorer::lexical_baseline_score;

/// Where a bridge process can be reached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port` of a listening bridge.
    Tcp(String),
    /// Program and arguments of a child process speaking over stdio.
    Command(Vec<String>),
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    /// `tcp://host:port`, `host:port`, or `cmd:<program> [args...]`.
    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(Error::Config("empty bridge command".into()));
            }
            return Ok(Endpoint::Command(argv));
        }
        let addr = s.strip_prefix("tcp://").unwrap_or(s);
        if addr.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) {
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(Error::Config(format!(
                "bad bridge endpoint `{s}` (expected tcp://host:port or cmd:<program>)"
            )))
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "tcp://{addr}"),
            Endpoint::Command(argv) => write!(f, "cmd:{}", argv.join(" ")),
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Request<'a> {
    Embed { id: u64, texts: &'a [String] },
    Score { id: u64, pairs: &'a [(String, String)] },
}

trait Transport: Send {
    fn round_trip(&mut self, line: &str) -> Result<String>;
}

fn read_reply(reader: &mut impl BufRead) -> Result<String> {
    let mut reply = String::new();
    let n = reader
        .read_line(&mut reply)
        .map_err(|e| Error::Provider(format!("bridge read failed: {e}")))?;
    if n == 0 {
        return Err(Error::Provider("bridge closed the connection".into()));
    }
    Ok(reply)
}

struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Transport for TcpTransport {
    fn round_trip(&mut self, line: &str) -> Result<String> {
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.write_all(b"\n"))
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::Provider(format!("bridge write failed: {e}")))?;
        read_reply(&mut self.reader)
    }
}

struct ChildTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Transport for ChildTransport {
    fn round_trip(&mut self, line: &str) -> Result<String> {
        self.stdin
            .write_all(line.as_bytes())
            .and_then(|_| self.stdin.write_all(b"\n"))
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Provider(format!("bridge write failed: {e}")))?;
        read_reply(&mut self.stdout)
    }
}

impl Drop for ChildTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A connection to a bridge. Requests are serialized through a mutex; one
/// request is in flight at a time.
pub struct BridgeClient {
    conn: Mutex<Box<dyn Transport>>,
    next_id: AtomicU64,
}

impl std::fmt::Debug for BridgeClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeClient").finish_non_exhaustive()
    }
}

impl BridgeClient {
    pub fn connect(endpoint: &Endpoint) -> Result<Arc<BridgeClient>> {
        let transport: Box<dyn Transport> = match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr)
                    .map_err(|e| Error::Provider(format!("cannot reach bridge at {addr}: {e}")))?;
                Box::new(TcpTransport {
                    reader: BufReader::new(stream.try_clone()?),
                    writer: stream,
                })
            }
            Endpoint::Command(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| {
                        Error::Provider(format!("cannot start bridge `{}`: {e}", argv.join(" ")))
                    })?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
                Box::new(ChildTransport {
                    child,
                    stdin,
                    stdout,
                })
            }
        };
        Ok(Arc::new(BridgeClient {
            conn: Mutex::new(transport),
            next_id: AtomicU64::new(1),
        }))
    }

    fn call(&self, request: &Request<'_>, id: u64) -> Result<Value> {
        let line = serde_json::to_string(request).expect("request serializes");
        let reply = {
            let mut conn = self
                .conn
                .lock()
                .map_err(|_| Error::Provider("bridge connection poisoned".into()))?;
            conn.round_trip(&line)?
        };
        let reply = reply.trim_end();
        let value: Value = serde_json::from_str(reply)
            .map_err(|_| Error::Protocol(format!("reply is not JSON: {}", excerpt(reply))))?;
        if value.get("id").and_then(Value::as_u64) != Some(id) {
            return Err(Error::Protocol(format!(
                "reply does not echo request id {id}: {}",
                excerpt(reply)
            )));
        }
        if let Some(msg) = value.get("error") {
            return Err(Error::Provider(format!(
                "bridge error: {}",
                msg.as_str().map_or_else(|| msg.to_string(), str::to_string)
            )));
        }
        Ok(value)
    }

    /// Raw (possibly unnormalized) vectors for `texts`, plus the reported
    /// dimension.
    pub fn embed(&self, texts: &[String]) -> Result<(usize, Vec<Vec<f32>>)> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let value = self.call(&Request::Embed { id, texts }, id)?;
        let bad = |what: &str| Error::Protocol(format!("{what}: {}", excerpt(&value.to_string())));
        let dim = value
            .get("dim")
            .and_then(Value::as_u64)
            .ok_or_else(|| bad("embed reply lacks `dim`"))? as usize;
        let vectors = value
            .get("vectors")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("embed reply lacks `vectors`"))?;
        if vectors.len() != texts.len() {
            return Err(bad(&format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        let mut out = Vec::with_capacity(vectors.len());
        for v in vectors {
            let row = v
                .as_array()
                .ok_or_else(|| bad("vector is not an array"))?
                .iter()
                .map(|x| x.as_f64().map(|f| f as f32))
                .collect::<Option<Vec<f32>>>()
                .ok_or_else(|| bad("vector holds a non-number"))?;
            if row.len() != dim {
                return Err(bad(&format!("vector of length {} under dim {dim}", row.len())));
            }
            out.push(row);
        }
        Ok((dim, out))
    }

    /// Scores for `pairs` exactly as returned; range checks are the
    /// caller's job.
    pub fn score(&self, pairs: &[(String, String)]) -> Result<Vec<f64>> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let value = self.call(&Request::Score { id, pairs }, id)?;
        let bad = |what: &str| Error::Protocol(format!("{what}: {}", excerpt(&value.to_string())));
        let scores = value
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("score reply lacks `scores`"))?
            .iter()
            .map(Value::as_f64)
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| bad("score is not a number"))?;
        if scores.len() != pairs.len() {
            return Err(bad(&format!(
                "expected {} scores, got {}",
                pairs.len(),
                scores.len()
            )));
        }
        Ok(scores)
    }
}

/// Model-free backend for the reference server.
#[derive(Debug, Clone)]
pub struct MockBackend {
    pub dim: usize,
    pub seed: u64,
    pub lexicon: Option<Arc<Lexicon>>,
}

impl MockBackend {
    fn handle(&self, line: &str) -> Value {
        let parsed: Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(_) => return json!({"id": 0, "error": "request is not JSON"}),
        };
        let id = parsed.get("id").and_then(Value::as_u64).unwrap_or(0);
        let fail = |msg: String| json!({"id": id, "error": msg});
        match parsed.get("op").and_then(Value::as_str) {
            Some("embed") => {
                let Some(texts) = parsed.get("texts").and_then(Value::as_array) else {
                    return fail("embed request lacks `texts`".into());
                };
                let mut vectors = Vec::with_capacity(texts.len());
                for t in texts {
                    let Some(t) = t.as_str() else {
                        return fail("text is not a string".into());
                    };
                    match mock_embed(t, self.dim, self.seed, self.lexicon.as_deref()) {
                        // deliberately unnormalized on the wire
                        Ok(v) => vectors.push(v.into_iter().map(|x| x * 3.0).collect::<Vec<_>>()),
                        Err(e) => return fail(e.to_string()),
                    }
                }
                json!({"id": id, "dim": self.dim, "vectors": vectors})
            }
            Some("score") => {
                let Some(pairs) = parsed.get("pairs").and_then(Value::as_array) else {
                    return fail("score request lacks `pairs`".into());
                };
                let empty = Lexicon::default();
                let lexicon = self.lexicon.as_deref().unwrap_or(&empty);
                let mut scores = Vec::with_capacity(pairs.len());
                for p in pairs {
                    match p.as_array().map(|a| (a.first(), a.get(1), a.len())) {
                        Some((Some(Value::String(s)), Some(Value::String(t)), 2)) => {
                            scores.push(lexical_baseline_score(s, t, lexicon))
                        }
                        _ => return fail("pair is not [source, target]".into()),
                    }
                }
                json!({"id": id, "scores": scores})
            }
            Some(other) => fail(format!("unknown op `{other}`")),
            None => fail("request lacks `op`".into()),
        }
    }
}

/// Answer protocol requests line by line until end of input.
pub fn serve(backend: &MockBackend, input: impl BufRead, mut output: impl Write) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = backend.handle(&line);
        serde_json::to_writer(&mut output, &reply).expect("reply serializes");
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

/// Accept TCP connections forever, one thread per connection.
pub fn serve_tcp(backend: MockBackend, listener: TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let backend = backend.clone();
        std::thread::spawn(move || {
            if let Ok(read_half) = stream.try_clone() {
                let _ = serve(&backend, BufReader::new(read_half), stream);
            }
        });
    }
    Ok(())
}
