//! Simulated device for the community oversight service.
//!
//! The agent keeps a local app catalog in a JSON state file, pushes it to the
//! server as a snapshot or a diff, and drives every community feature from the
//! terminal. Each command is one process; there is no daemon.

pub mod cli;
pub mod client;
mod commands;
mod render;
pub mod state;

pub use cli::Cli;
pub use commands::run;
pub use state::AgentState;

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    /// The server rejected the request; `code` is its stable error code.
    #[error("{code}: {message}")]
    Api { status: u16, code: String, message: String },
    #[error("transport_error: {0}")]
    Transport(String),
    #[error("state_error: {0}")]
    State(String),
    #[error("invalid_usage: {0}")]
    Usage(String),
    #[error("{}: {}", .0.code(), .0)]
    Core(#[from] coops_core::Error),
}

impl AgentError {
    pub fn code(&self) -> &str {
        match self {
            AgentError::Api { code, .. } => code,
            AgentError::Transport(_) => "transport_error",
            AgentError::State(_) => "state_error",
            AgentError::Usage(_) => "invalid_usage",
            AgentError::Core(err) => err.code(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            AgentError::Api { .. } | AgentError::Core(_) => 1,
            AgentError::Usage(_) => 2,
            AgentError::Transport(_) => 3,
            AgentError::State(_) => 4,
        }
    }
}
