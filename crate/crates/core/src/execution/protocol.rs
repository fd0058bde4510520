//! Line-delimited JSON messages exchanged with the interpreter kernel.
//!
//! The kernel prints `{"ready": true, "protocol": 1}` once at startup, then
//! answers each request line with exactly one response line carrying the same id.

use serde::{Deserialize, Serialize};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelOp {
    Exec,
    Reset,
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireOptions {
    #[serde(default)]
    pub lint: bool,
    #[serde(default)]
    pub typecheck: bool,
    #[serde(default)]
    pub format: bool,
    #[serde(default = "default_max_var_chars")]
    pub max_var_chars: usize,
}

fn default_max_var_chars() -> usize {
    500
}

impl Default for WireOptions {
    fn default() -> Self {
        WireOptions {
            lint: false,
            typecheck: false,
            format: false,
            max_var_chars: default_max_var_chars(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelRequest {
    pub id: String,
    pub op: KernelOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
    #[serde(default)]
    pub options: WireOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorKind {
    Execution,
    Lint,
    Typecheck,
    Protocol,
    Timeout,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Execution => "EXECUTION",
            ErrorKind::Lint => "LINT",
            ErrorKind::Typecheck => "TYPECHECK",
            ErrorKind::Protocol => "PROTOCOL",
            ErrorKind::Timeout => "TIMEOUT",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireVar {
    pub name: String,
    pub repr: String,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(default)]
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelResponse {
    pub id: String,
    pub ok: bool,
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub updated_vars: Vec<WireVar>,
    #[serde(default)]
    pub deleted_vars: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<WireError>,
    #[serde(default)]
    pub duration_s: f64,
}

impl KernelResponse {
    pub fn ok(id: impl Into<String>) -> Self {
        KernelResponse {
            id: id.into(),
            ok: true,
            stdout: String::new(),
            updated_vars: Vec::new(),
            deleted_vars: Vec::new(),
            error: None,
            duration_s: 0.0,
        }
    }

    pub fn protocol_error(id: impl Into<String>, message: impl Into<String>) -> Self {
        KernelResponse {
            ok: false,
            error: Some(WireError {
                kind: ErrorKind::Protocol,
                message: message.into(),
                line: None,
            }),
            ..KernelResponse::ok(id)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Handshake {
    pub ready: bool,
    pub protocol: u32,
}

impl Handshake {
    pub fn current() -> Self {
        Handshake {
            ready: true,
            protocol: PROTOCOL_VERSION,
        }
    }
}
