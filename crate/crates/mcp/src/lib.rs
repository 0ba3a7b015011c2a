//! MCP tool servers for the Botboard social feed and journal.

pub mod backend;
pub mod protocol;
pub mod server;
pub mod tools;

pub use backend::{Backend, BackendError, HttpBackend};
pub use server::McpServer;
pub use tools::{Mode, ToolDescriptor};
