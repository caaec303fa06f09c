//! Adapter for an external simulator speaking a line protocol on stdio.
//!
//! ```text
//! -> HELLO <D>            <- READY
//! -> EVAL v1 v2 ... vD    <- FAIL | PASS
//! -> QUIT
//! ```
//!
//! Reply lines are numbered from 1 (the `READY` line), and every error names
//! the line it was waiting for.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use crate::error::SimulationError;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

struct Session {
    child: Child,
    stdin: ChildStdin,
    replies: Receiver<std::io::Result<String>>,
    line: usize,
    failed: Option<SimulationError>,
}

impl Session {
    fn send(&mut self, msg: &str) -> Result<(), SimulationError> {
        let line = self.line + 1;
        self.stdin
            .write_all(msg.as_bytes())
            .and_then(|_| self.stdin.flush())
            .map_err(|_| SimulationError::Exited { line })
    }

    fn receive(&mut self, timeout: Duration) -> Result<String, SimulationError> {
        self.line += 1;
        let line = self.line;
        match self.replies.recv_timeout(timeout) {
            Ok(Ok(reply)) => Ok(reply),
            Ok(Err(e)) => Err(SimulationError::Io(e.to_string())),
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                Err(SimulationError::Timeout { line, timeout })
            }
            Err(RecvTimeoutError::Disconnected) => Err(SimulationError::Exited { line }),
        }
    }

    fn exchange(&mut self, msg: &str, timeout: Duration) -> Result<String, SimulationError> {
        self.send(msg)?;
        self.receive(timeout)
    }
}

/// A running simulator process. Calls are serialized through a mutex; after
/// the first error the session is poisoned and every later call repeats it.
pub struct ExternalSimulator {
    command: String,
    dim: usize,
    timeout: Duration,
    session: Mutex<Session>,
}

impl std::fmt::Debug for ExternalSimulator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalSimulator")
            .field("command", &self.command)
            .field("dim", &self.dim)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl ExternalSimulator {
    /// Launches `command args...` and performs the `HELLO`/`READY` handshake.
    pub fn spawn(command: &str, args: &[String], dim: usize, timeout: Duration) -> Result<Self, SimulationError> {
        let mut child = Command::new(command)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| SimulationError::Spawn {
                command: command.to_string(),
                message: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let mut session = Session {
            child,
            stdin,
            replies: rx,
            line: 0,
            failed: None,
        };
        let reply = session
            .exchange(&format!("HELLO {dim}\n"), timeout)
            .map_err(|e| SimulationError::Handshake(e.to_string()))?;
        if reply.trim() != "READY" {
            let _ = session.child.kill();
            return Err(SimulationError::Handshake(format!("expected READY, got {reply:?}")));
        }
        Ok(Self {
            command: command.to_string(),
            dim,
            timeout,
            session: Mutex::new(session),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<bool, SimulationError> {
        if x.len() != self.dim {
            return Err(SimulationError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        let mut session = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(err) = &session.failed {
            return Err(err.clone());
        }
        let mut request = String::from("EVAL");
        for v in x {
            request.push(' ');
            request.push_str(&v.to_string());
        }
        request.push('\n');
        let result = session.exchange(&request, self.timeout).and_then(|reply| {
            match reply.trim() {
                "FAIL" => Ok(true),
                "PASS" => Ok(false),
                _ => Err(SimulationError::Protocol {
                    line: session.line,
                    reply,
                }),
            }
        });
        if let Err(e) = &result {
            session.failed = Some(e.clone());
        }
        result
    }
}

impl Drop for ExternalSimulator {
    fn drop(&mut self) {
        let session = self.session.get_mut().unwrap_or_else(|p| p.into_inner());
        let _ = session.send("QUIT\n");
        for _ in 0..50 {
            if let Ok(Some(_)) = session.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(2));
        }
        let _ = session.child.kill();
        let _ = session.child.wait();
    }
}
