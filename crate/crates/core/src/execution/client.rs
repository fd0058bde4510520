use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::protocol::{ErrorKind, Handshake, KernelOp, KernelRequest, KernelResponse, WireOptions};
use super::format::OutputLimits;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("timed out waiting for the kernel")]
    Timeout,
    #[error("kernel connection closed")]
    Closed,
    #[error("failed to start kernel: {0}")]
    Spawn(String),
    #[error("kernel i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A bidirectional line channel to a kernel.
pub trait KernelTransport: Send {
    /// Start (or restart) the kernel. The handshake is read by the client.
    fn start(&mut self) -> Result<(), TransportError>;
    fn send_line(&mut self, line: &str) -> Result<(), TransportError>;
    fn recv_line(&mut self, timeout: Duration) -> Result<String, TransportError>;
    /// Kill the kernel without a graceful shutdown.
    fn kill(&mut self);
}

impl<T: KernelTransport + ?Sized> KernelTransport for Box<T> {
    fn start(&mut self) -> Result<(), TransportError> {
        (**self).start()
    }
    fn send_line(&mut self, line: &str) -> Result<(), TransportError> {
        (**self).send_line(line)
    }
    fn recv_line(&mut self, timeout: Duration) -> Result<String, TransportError> {
        (**self).recv_line(timeout)
    }
    fn kill(&mut self) {
        (**self).kill()
    }
}

/// Kernel running as a child process speaking NDJSON over stdin/stdout.
/// The child's stderr is passed through for diagnostics.
pub struct ProcessKernel {
    command: Vec<String>,
    child: Option<Child>,
    stdin: Option<ChildStdin>,
    lines: Option<Receiver<String>>,
}

impl ProcessKernel {
    pub fn new(command: Vec<String>) -> Self {
        ProcessKernel {
            command,
            child: None,
            stdin: None,
            lines: None,
        }
    }
}

impl KernelTransport for ProcessKernel {
    fn start(&mut self) -> Result<(), TransportError> {
        self.kill();
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| TransportError::Spawn("empty kernel command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| TransportError::Spawn(format!("{program}: {e}")))?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        self.stdin = child.stdin.take();
        self.lines = Some(rx);
        self.child = Some(child);
        Ok(())
    }

    fn send_line(&mut self, line: &str) -> Result<(), TransportError> {
        let stdin = self.stdin.as_mut().ok_or(TransportError::Closed)?;
        stdin.write_all(line.as_bytes())?;
        stdin.write_all(b"\n")?;
        stdin.flush()?;
        Ok(())
    }

    fn recv_line(&mut self, timeout: Duration) -> Result<String, TransportError> {
        let rx = self.lines.as_ref().ok_or(TransportError::Closed)?;
        match rx.recv_timeout(timeout) {
            Ok(line) => Ok(line),
            Err(RecvTimeoutError::Timeout) => Err(TransportError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(TransportError::Closed),
        }
    }

    fn kill(&mut self) {
        self.stdin = None;
        self.lines = None;
        if let Some(mut child) = self.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Drop for ProcessKernel {
    fn drop(&mut self) {
        self.kill();
    }
}

/// Options for one code action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionOptions {
    pub lint: bool,
    pub typecheck: bool,
    pub format: bool,
    pub max_stdout_chars: usize,
    pub max_var_chars: usize,
    pub timeout_seconds: u64,
}

impl Default for ExecutionOptions {
    fn default() -> Self {
        let limits = OutputLimits::default();
        ExecutionOptions {
            lint: false,
            typecheck: false,
            format: false,
            max_stdout_chars: limits.max_stdout_chars,
            max_var_chars: limits.max_var_chars,
            timeout_seconds: 60,
        }
    }
}

impl ExecutionOptions {
    pub fn limits(&self) -> OutputLimits {
        OutputLimits {
            max_stdout_chars: self.max_stdout_chars,
            max_var_chars: self.max_var_chars,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionRequest {
    pub code: String,
    pub options: ExecutionOptions,
}

impl ExecutionRequest {
    pub fn new(code: impl Into<String>) -> Self {
        ExecutionRequest {
            code: code.into(),
            options: ExecutionOptions::default(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.code.trim().is_empty() {
            return Err("code is empty".into());
        }
        if self.options.max_stdout_chars == 0 || self.options.max_var_chars == 0 {
            return Err("output limits must be positive".into());
        }
        if self.options.timeout_seconds < 1 {
            return Err("timeout must be at least one second".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableUpdate {
    pub name: String,
    pub value_repr: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionError {
    pub kind: ErrorKind,
    pub message: String,
    /// 1-based line within the submitted code.
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResponse {
    pub stdout: String,
    pub updated_vars: Vec<VariableUpdate>,
    pub deleted_vars: Vec<String>,
    pub error: Option<ExecutionError>,
    pub duration_s: f64,
}

impl ExecutionResponse {
    pub fn from_error(kind: ErrorKind, message: impl Into<String>) -> Self {
        ExecutionResponse {
            stdout: String::new(),
            updated_vars: Vec::new(),
            deleted_vars: Vec::new(),
            error: Some(ExecutionError {
                kind,
                message: message.into(),
                line: None,
            }),
            duration_s: 0.0,
        }
    }

    /// Convert a wire reply, enforcing unique names and in-range error lines.
    fn from_wire(reply: KernelResponse, code_lines: usize) -> Self {
        let mut updated_vars: Vec<VariableUpdate> = Vec::with_capacity(reply.updated_vars.len());
        for var in reply.updated_vars {
            let update = VariableUpdate {
                name: var.name,
                value_repr: var.repr,
                truncated: var.truncated,
            };
            match updated_vars.iter_mut().find(|v| v.name == update.name) {
                Some(existing) => *existing = update,
                None => updated_vars.push(update),
            }
        }
        let error = reply.error.map(|e| ExecutionError {
            kind: e.kind,
            message: e.message,
            line: e.line.filter(|&l| l >= 1 && l <= code_lines),
        });
        let error = match (error, reply.ok) {
            (None, false) => Some(ExecutionError {
                kind: ErrorKind::Protocol,
                message: "kernel reported failure without an error".into(),
                line: None,
            }),
            (e, _) => e,
        };
        ExecutionResponse {
            stdout: reply.stdout,
            updated_vars,
            deleted_vars: reply.deleted_vars,
            error,
            duration_s: reply.duration_s,
        }
    }
}

/// Primary-side end of the kernel protocol. One request in flight at a time.
pub struct KernelClient<T: KernelTransport> {
    transport: T,
    next_id: u64,
    connected: bool,
    startup_timeout: Duration,
}

impl<T: KernelTransport> KernelClient<T> {
    pub fn new(transport: T) -> Self {
        KernelClient {
            transport,
            next_id: 1,
            connected: false,
            startup_timeout: Duration::from_secs(30),
        }
    }

    pub fn with_startup_timeout(mut self, timeout: Duration) -> Self {
        self.startup_timeout = timeout;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn transport_mut(&mut self) -> &mut T {
        &mut self.transport
    }

    /// Start the kernel and wait for its handshake line.
    pub fn connect(&mut self) -> Result<(), String> {
        self.connected = false;
        self.transport.start().map_err(|e| e.to_string())?;
        let line = self
            .transport
            .recv_line(self.startup_timeout)
            .map_err(|e| format!("no handshake from kernel: {e}"))?;
        let hs: Handshake = serde_json::from_str(&line)
            .map_err(|e| format!("malformed handshake `{line}`: {e}"))?;
        if hs != Handshake::current() {
            return Err(format!("unsupported kernel handshake `{line}`"));
        }
        self.connected = true;
        Ok(())
    }

    fn ensure_connected(&mut self) -> Result<(), String> {
        if self.connected {
            Ok(())
        } else {
            self.connect()
        }
    }

    fn fresh_id(&mut self) -> String {
        let id = format!("req-{}", self.next_id);
        self.next_id += 1;
        id
    }

    fn roundtrip(&mut self, req: &KernelRequest, timeout: Duration) -> Result<KernelResponse, TransportError> {
        let line = serde_json::to_string(req).expect("requests serialize");
        self.transport.send_line(&line)?;
        let reply = self.transport.recv_line(timeout)?;
        Ok(serde_json::from_str(&reply).unwrap_or_else(|e| {
            KernelResponse::protocol_error(req.id.clone(), format!("malformed kernel reply: {e}"))
        }))
    }

    /// Run code in the persistent namespace.
    pub fn execute_code(&mut self, req: &ExecutionRequest) -> ExecutionResponse {
        if let Err(msg) = req.validate() {
            return ExecutionResponse::from_error(ErrorKind::Protocol, format!("invalid request: {msg}"));
        }
        if let Err(msg) = self.ensure_connected() {
            return ExecutionResponse::from_error(ErrorKind::Protocol, msg);
        }
        let id = self.fresh_id();
        let wire = KernelRequest {
            id: id.clone(),
            op: KernelOp::Exec,
            code: Some(req.code.clone()),
            options: WireOptions {
                lint: req.options.lint,
                typecheck: req.options.typecheck,
                format: req.options.format,
                max_var_chars: req.options.max_var_chars,
            },
        };
        let timeout = Duration::from_secs(req.options.timeout_seconds);
        let started = Instant::now();
        match self.roundtrip(&wire, timeout) {
            Ok(reply) if reply.id != id => {
                self.connected = false;
                self.transport.kill();
                ExecutionResponse::from_error(
                    ErrorKind::Protocol,
                    format!("kernel reply id `{}` does not match request id `{id}`", reply.id),
                )
            }
            Ok(reply) => ExecutionResponse::from_wire(reply, req.code.lines().count()),
            Err(TransportError::Timeout) => {
                let restarted = self.connect();
                let mut message = format!(
                    "execution exceeded {}s; the kernel was restarted and all variables were lost",
                    req.options.timeout_seconds
                );
                if let Err(e) = restarted {
                    message.push_str(&format!(" (restart failed: {e})"));
                }
                let mut resp = ExecutionResponse::from_error(ErrorKind::Timeout, message);
                resp.duration_s = started.elapsed().as_secs_f64();
                resp
            }
            Err(e) => {
                self.connected = false;
                self.transport.kill();
                ExecutionResponse::from_error(ErrorKind::Protocol, format!("kernel connection failed: {e}"))
            }
        }
    }

    fn simple(&mut self, op: KernelOp) -> Result<(), String> {
        self.ensure_connected()?;
        let id = self.fresh_id();
        let req = KernelRequest {
            id: id.clone(),
            op,
            code: None,
            options: WireOptions::default(),
        };
        let reply = self.roundtrip(&req, self.startup_timeout).map_err(|e| e.to_string())?;
        if reply.id != id || !reply.ok {
            return Err(format!("kernel rejected {op:?}"));
        }
        Ok(())
    }

    /// Clear the kernel namespace.
    pub fn reset(&mut self) -> Result<(), String> {
        self.simple(KernelOp::Reset)
    }

    pub fn shutdown(&mut self) -> Result<(), String> {
        if !self.connected {
            return Ok(());
        }
        let result = self.simple(KernelOp::Shutdown);
        self.connected = false;
        self.transport.kill();
        result
    }
}
