//! Code execution against a persistent interpreter kernel.

pub mod client;
pub mod fake;
pub mod format;
pub mod protocol;

pub use client::{
    ExecutionError, ExecutionOptions, ExecutionRequest, ExecutionResponse, KernelClient,
    KernelTransport, ProcessKernel, TransportError, VariableUpdate,
};
pub use fake::{FakeInterpreter, FakeKernel, HANG_MARKER};
pub use format::{format_execution_response, truncate_middle, OutputLimits};
pub use protocol::{ErrorKind, KernelOp, KernelRequest, KernelResponse};
