//! JSON request/response transports for external judges: line-delimited messages
//! over a child process pipe, or HTTP POST. Both are wrapped with an in-flight
//! bound and a retry policy.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransportError {
    #[error("cannot start judge process: {0}")]
    Spawn(String),
    #[error("pipe error: {0}")]
    Io(String),
    #[error("judge process closed its output")]
    Closed,
    #[error("http error: {0}")]
    Http(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: usize, last: Box<TransportError> },
}

pub trait JsonTransport: Send + Sync {
    fn call(&self, request: &Value) -> Result<Value, TransportError>;
}

impl JsonTransport for Box<dyn JsonTransport> {
    fn call(&self, request: &Value) -> Result<Value, TransportError> {
        self.as_ref().call(request)
    }
}

/// Sends one JSON line per request to a long-lived child process and reads one JSON
/// line back. A broken pipe drops the child; the next call starts a new one.
pub struct ProcessTransport {
    command: Vec<String>,
    state: Mutex<Option<Pipe>>,
}

struct Pipe {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTransport {
    pub fn new(command: Vec<String>) -> Result<Self, TransportError> {
        if command.is_empty() {
            return Err(TransportError::Spawn("empty command".into()));
        }
        Ok(Self {
            command,
            state: Mutex::new(None),
        })
    }

    fn spawn(&self) -> Result<Pipe, TransportError> {
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| TransportError::Spawn(format!("{}: {e}", self.command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Pipe { child, stdin, stdout })
    }
}

impl JsonTransport for ProcessTransport {
    fn call(&self, request: &Value) -> Result<Value, TransportError> {
        let mut guard = self.state.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let pipe = guard.as_mut().expect("spawned");
        let result = (|| {
            let mut line = serde_json::to_string(request).expect("request serializes");
            line.push('\n');
            pipe.stdin
                .write_all(line.as_bytes())
                .and_then(|_| pipe.stdin.flush())
                .map_err(|e| TransportError::Io(e.to_string()))?;
            let mut reply = String::new();
            let n = pipe
                .stdout
                .read_line(&mut reply)
                .map_err(|e| TransportError::Io(e.to_string()))?;
            if n == 0 {
                return Err(TransportError::Closed);
            }
            serde_json::from_str(&reply).map_err(|e| TransportError::Protocol(e.to_string()))
        })();
        if matches!(result, Err(TransportError::Io(_) | TransportError::Closed)) {
            if let Some(mut dead) = guard.take() {
                let _ = dead.child.kill();
                let _ = dead.child.wait();
            }
        }
        result
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        if let Some(mut pipe) = self.state.get_mut().ok().and_then(Option::take) {
            drop(pipe.stdin);
            let _ = pipe.child.wait();
        }
    }
}

/// POSTs the request as a JSON body and parses the JSON response body.
pub struct HttpTransport {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            agent,
        }
    }
}

impl JsonTransport for HttpTransport {
    fn call(&self, request: &Value) -> Result<Value, TransportError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .send_json(request)
            .map_err(|e| TransportError::Http(e.to_string()))?;
        resp.body_mut()
            .read_json::<Value>()
            .map_err(|e| TransportError::Protocol(e.to_string()))
    }
}

/// Caps the number of concurrent calls into `inner`.
pub struct Bounded<T> {
    inner: T,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<T> Bounded<T> {
    pub fn new(inner: T, limit: usize) -> Self {
        Self {
            inner,
            limit: limit.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn run<R>(&self, f: impl FnOnce(&T) -> R) -> R {
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap_or_else(|p| p.into_inner());
            }
            *n += 1;
        }
        struct Release<'a>(&'a Mutex<usize>, &'a Condvar);
        impl Drop for Release<'_> {
            fn drop(&mut self) {
                *self.0.lock().unwrap_or_else(|p| p.into_inner()) -= 1;
                self.1.notify_one();
            }
        }
        let _release = Release(&self.in_flight, &self.freed);
        f(&self.inner)
    }
}

impl<T: JsonTransport> JsonTransport for Bounded<T> {
    fn call(&self, request: &Value) -> Result<Value, TransportError> {
        self.run(|t| t.call(request))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff_ms: 50,
        }
    }
}

impl RetryPolicy {
    pub fn run<R>(&self, mut f: impl FnMut() -> Result<R, TransportError>) -> Result<R, TransportError> {
        let attempts = self.attempts.max(1);
        let mut last = None;
        for i in 0..attempts {
            match f() {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("transport attempt {} of {attempts} failed: {e}", i + 1);
                    last = Some(e);
                    if i + 1 < attempts && self.backoff_ms > 0 {
                        std::thread::sleep(Duration::from_millis(self.backoff_ms << i));
                    }
                }
            }
        }
        Err(TransportError::Exhausted {
            attempts,
            last: Box::new(last.expect("at least one attempt")),
        })
    }
}

/// Transport selection as it appears in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransportConfig {
    /// In-process mock answering from simulator ground truth.
    #[default]
    Mock,
    Process { command: Vec<String> },
    Http {
        endpoint: String,
        #[serde(default = "default_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_timeout_ms() -> u64 {
    30_000
}

impl TransportConfig {
    /// Builds the remote transport, or `None` for the mock.
    pub fn connect(&self) -> Result<Option<Box<dyn JsonTransport>>, TransportError> {
        Ok(match self {
            TransportConfig::Mock => None,
            TransportConfig::Process { command } => Some(Box::new(ProcessTransport::new(command.clone())?)),
            TransportConfig::Http { endpoint, timeout_ms } => Some(Box::new(HttpTransport::new(
                endpoint.clone(),
                Duration::from_millis(*timeout_ms),
            ))),
        })
    }
}

/// Typed call through any transport.
pub fn call_typed<Req: Serialize, Resp: DeserializeOwned>(
    transport: &dyn JsonTransport,
    request: &Req,
) -> Result<Resp, TransportError> {
    let value = serde_json::to_value(request).expect("request serializes");
    let reply = transport.call(&value)?;
    serde_json::from_value(reply).map_err(|e| TransportError::Protocol(e.to_string()))
}

/// Answers line-delimited requests from `input` until EOF; the server side of
/// [`ProcessTransport`].
pub fn serve_lines<Req: DeserializeOwned, Resp: Serialize>(
    input: impl BufRead,
    mut output: impl Write,
    mut handler: impl FnMut(Req) -> Resp,
) -> std::io::Result<usize> {
    let mut served = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let req: Req = serde_json::from_str(&line).map_err(std::io::Error::other)?;
        serde_json::to_writer(&mut output, &handler(req)).map_err(std::io::Error::other)?;
        output.write_all(b"\n")?;
        output.flush()?;
        served += 1;
    }
    Ok(served)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    struct Flaky(AtomicUsize);

    impl JsonTransport for Flaky {
        fn call(&self, request: &Value) -> Result<Value, TransportError> {
            if self.0.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(TransportError::Closed)
            } else {
                Ok(request.clone())
            }
        }
    }

    #[test]
    fn retry_recovers_and_exhausts() {
        let policy = RetryPolicy {
            attempts: 3,
            backoff_ms: 0,
        };
        let t = Flaky(AtomicUsize::new(0));
        assert_eq!(policy.run(|| t.call(&Value::from(1))), Ok(Value::from(1)));
        let t = Flaky(AtomicUsize::new(0));
        let short = RetryPolicy {
            attempts: 2,
            backoff_ms: 0,
        };
        assert!(matches!(
            short.run(|| t.call(&Value::Null)),
            Err(TransportError::Exhausted { attempts: 2, .. })
        ));
    }

    #[test]
    fn bounded_never_exceeds_its_limit() {
        let peak = Arc::new(AtomicUsize::new(0));
        let now = Arc::new(AtomicUsize::new(0));
        let b = Arc::new(Bounded::new((), 2));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (b, peak, now) = (b.clone(), peak.clone(), now.clone());
                std::thread::spawn(move || {
                    b.run(|_| {
                        let n = now.fetch_add(1, Ordering::SeqCst) + 1;
                        peak.fetch_max(n, Ordering::SeqCst);
                        std::thread::sleep(Duration::from_millis(10));
                        now.fetch_sub(1, Ordering::SeqCst);
                    })
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn serve_lines_round_trips() {
        let input = b"{\"a\":1}\n\n{\"a\":2}\n";
        let mut out = Vec::new();
        let n = serve_lines(&input[..], &mut out, |v: Value| v["a"].as_i64().unwrap() * 10).unwrap();
        assert_eq!(n, 2);
        assert_eq!(String::from_utf8(out).unwrap(), "10\n20\n");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = TransportConfig::Process {
            command: vec!["judge".into(), "--fast".into()],
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<TransportConfig>(&text).unwrap(), cfg);
    }
}
