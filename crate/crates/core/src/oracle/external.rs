//! Black-box oracle backed by an external process.
//!
//! Wire protocol (version 1), one request per line on the child's stdin:
//!
//! ```text
//! EVAL <sample key as decimal u64> <x_1> ... <x_d>\n
//! ```
//!
//! and one reply line on its stdout holding a single decimal value. The same
//! sample key is sent for both points of a two-point pair; the program is
//! responsible for reusing its noise realization. Coordinates are written with
//! 17 significant digits.
//!
//! Each worker thread gets its own child process (requests to one process are
//! serialized). A timed-out process is killed and respawned on the next
//! request.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::Duration;

use super::{Oracle, OracleError, SampleKey};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ExternalOracleSpec {
    /// Program invocation, run through `sh -c`.
    pub command: String,
    pub timeout: Duration,
    pub protocol_version: u32,
    pub dim: usize,
}

impl ExternalOracleSpec {
    pub fn new(command: impl Into<String>, dim: usize) -> Self {
        Self {
            command: command.into(),
            timeout: Duration::from_secs(10),
            protocol_version: PROTOCOL_VERSION,
            dim,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

struct Session {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<std::io::Result<String>>,
}

impl Session {
    fn spawn(command: &str) -> Result<Self, OracleError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Io(format!("cannot spawn {command:?}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, replies) = mpsc::channel();
        std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        Ok(Self { child, stdin, replies })
    }

    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct ExternalOracle {
    spec: ExternalOracleSpec,
    sessions: Vec<Mutex<Option<Session>>>,
}

impl ExternalOracle {
    /// One process slot per worker; processes start lazily.
    pub fn new(spec: ExternalOracleSpec, workers: usize) -> Result<Self, OracleError> {
        if spec.protocol_version != PROTOCOL_VERSION {
            return Err(OracleError::UnsupportedProtocol(spec.protocol_version));
        }
        if spec.command.trim().is_empty() {
            return Err(OracleError::InvalidSpec("command is empty".into()));
        }
        if spec.dim == 0 {
            return Err(OracleError::InvalidSpec("dimension must be positive".into()));
        }
        if spec.timeout.is_zero() {
            return Err(OracleError::InvalidSpec("timeout must be positive".into()));
        }
        let sessions = (0..workers.max(1)).map(|_| Mutex::new(None)).collect();
        Ok(Self { spec, sessions })
    }

    pub fn spec(&self) -> &ExternalOracleSpec {
        &self.spec
    }

    fn request_line(key: SampleKey, x: &[f64]) -> String {
        use std::fmt::Write as _;
        let mut line = format!("EVAL {key}");
        for v in x {
            let _ = write!(line, " {v:.16e}");
        }
        line.push('\n');
        line
    }

    fn parse_reply(key: SampleKey, reply: &str) -> Result<f64, OracleError> {
        let trimmed = reply.trim();
        let value: f64 = trimmed.parse().map_err(|_| OracleError::Malformed {
            key,
            reply: trimmed.to_string(),
        })?;
        if !value.is_finite() {
            return Err(OracleError::NonFinite { key, value });
        }
        Ok(value)
    }
}

impl Oracle for ExternalOracle {
    fn dim(&self) -> usize {
        self.spec.dim
    }

    fn evaluate(&self, x: &[f64], key: SampleKey) -> Result<f64, OracleError> {
        if x.len() != self.spec.dim {
            return Err(OracleError::DimensionMismatch {
                expected: self.spec.dim,
                got: x.len(),
            });
        }
        let slot = rayon::current_thread_index().unwrap_or(0) % self.sessions.len();
        let mut guard = self.sessions[slot].lock().unwrap_or_else(|e| e.into_inner());
        if guard.is_none() {
            *guard = Some(Session::spawn(&self.spec.command)?);
        }
        let session = guard.as_mut().expect("session present");

        let line = Self::request_line(key, x);
        if session.stdin.write_all(line.as_bytes()).and_then(|_| session.stdin.flush()).is_err() {
            if let Some(a) = guard.take() { Session::kill(a) }
            return Err(OracleError::Exited { key });
        }
        match session.replies.recv_timeout(self.spec.timeout) {
            Ok(Ok(reply)) => Self::parse_reply(key, &reply),
            Ok(Err(e)) => {
                if let Some(a) = guard.take() { Session::kill(a) }
                Err(OracleError::Io(e.to_string()))
            }
            Err(RecvTimeoutError::Timeout) => {
                if let Some(a) = guard.take() { Session::kill(a) }
                Err(OracleError::Timeout {
                    key,
                    after: self.spec.timeout,
                })
            }
            Err(RecvTimeoutError::Disconnected) => {
                if let Some(a) = guard.take() { Session::kill(a) }
                Err(OracleError::Exited { key })
            }
        }
    }
}
