//! A client-side MCP session: the JSON-RPC handshake and `tools/call`
//! requests, served either in-process or by a spawned `mcp-server`.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use botboard_mcp::{HttpBackend, McpServer, Mode};
use serde_json::{json, Value};

use crate::runner::RunnerError;

enum Channel {
    InProcess(Box<McpServer>),
    Process {
        child: Child,
        stdin: Option<ChildStdin>,
        stdout: BufReader<ChildStdout>,
    },
}

impl Channel {
    fn exchange(&mut self, line: &str, expect_reply: bool) -> Result<Option<String>, RunnerError> {
        match self {
            Channel::InProcess(server) => Ok(server.handle_line(line)),
            Channel::Process { stdin, stdout, .. } => {
                let pipe = stdin
                    .as_mut()
                    .ok_or_else(|| RunnerError::Tool("tool server closed".into()))?;
                writeln!(pipe, "{line}")
                    .and_then(|_| pipe.flush())
                    .map_err(|e| RunnerError::Tool(format!("tool server write: {e}")))?;
                if !expect_reply {
                    return Ok(None);
                }
                let mut reply = String::new();
                let n = stdout
                    .read_line(&mut reply)
                    .map_err(|e| RunnerError::Tool(format!("tool server read: {e}")))?;
                if n == 0 {
                    return Err(RunnerError::Tool("tool server exited".into()));
                }
                Ok(Some(reply))
            }
        }
    }
}

impl Drop for Channel {
    fn drop(&mut self) {
        if let Channel::Process { child, stdin, .. } = self {
            // EOF on stdin is the server's shutdown signal.
            drop(stdin.take());
            if child.wait().is_err() {
                let _ = child.kill();
            }
        }
    }
}

/// Result of one `tools/call`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolReply {
    pub text: String,
    pub structured: Option<Value>,
    pub is_error: bool,
}

impl ToolReply {
    /// How many items a read or search returned.
    pub fn result_count(&self, tool: &str) -> Option<usize> {
        if self.is_error {
            return None;
        }
        let s = self.structured.as_ref()?;
        let field = match tool {
            "read_posts" => "posts",
            "search_journal" => "hits",
            "list_recent" => "entries",
            "read_entry" => return Some(1),
            _ => return None,
        };
        s.get(field).and_then(Value::as_array).map(Vec::len)
    }
}

pub struct ToolSession {
    channel: Channel,
    next_id: u64,
}

impl ToolSession {
    pub fn in_process(mode: Mode, backend_url: &str, team_key: &str) -> Result<Self, RunnerError> {
        let backend = HttpBackend::new(backend_url, team_key).map_err(|e| RunnerError::Tool(e.to_string()))?;
        Self::start(Channel::InProcess(Box::new(McpServer::new(mode, Box::new(backend)))))
    }

    /// Spawns `command --mode M --backend-url U --team-key K`.
    pub fn spawn(command: &Path, mode: Mode, backend_url: &str, team_key: &str) -> Result<Self, RunnerError> {
        let mut child = Command::new(command)
            .args([
                "--mode",
                mode.as_str(),
                "--backend-url",
                backend_url,
                "--team-key",
                team_key,
            ])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| RunnerError::Tool(format!("cannot start {}: {e}", command.display())))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        Self::start(Channel::Process { child, stdin, stdout })
    }

    fn start(channel: Channel) -> Result<Self, RunnerError> {
        let mut s = Self { channel, next_id: 1 };
        s.request(
            "initialize",
            json!({
                "protocolVersion": botboard_mcp::server::DEFAULT_PROTOCOL_VERSION,
                "capabilities": {},
                "clientInfo": {"name": "botboard-eval", "version": env!("CARGO_PKG_VERSION")}
            }),
        )?;
        let note = json!({"jsonrpc": "2.0", "method": "notifications/initialized"}).to_string();
        s.channel.exchange(&note, false)?;
        Ok(s)
    }

    fn request(&mut self, method: &str, params: Value) -> Result<Value, RunnerError> {
        let id = self.next_id;
        self.next_id += 1;
        let line = json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params}).to_string();
        let reply = self
            .channel
            .exchange(&line, true)?
            .ok_or_else(|| RunnerError::Tool(format!("no reply to {method}")))?;
        let mut reply: Value =
            serde_json::from_str(&reply).map_err(|e| RunnerError::Tool(format!("bad reply to {method}: {e}")))?;
        if let Some(err) = reply.get("error") {
            return Err(RunnerError::Tool(format!("{method} failed: {err}")));
        }
        Ok(reply.get_mut("result").map(Value::take).unwrap_or(Value::Null))
    }

    pub fn list_tools(&mut self) -> Result<Vec<String>, RunnerError> {
        let result = self.request("tools/list", json!({}))?;
        Ok(result["tools"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|t| t["name"].as_str().map(str::to_string))
            .collect())
    }

    pub fn call_tool(&mut self, name: &str, arguments: &Value) -> Result<ToolReply, RunnerError> {
        let result = self.request("tools/call", json!({"name": name, "arguments": arguments}))?;
        let text = result["content"]
            .as_array()
            .into_iter()
            .flatten()
            .filter_map(|c| c["text"].as_str())
            .collect::<Vec<_>>()
            .join("\n");
        Ok(ToolReply {
            text,
            structured: result.get("structuredContent").cloned(),
            is_error: result["isError"].as_bool().unwrap_or(false),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_counts() {
        let reply = |s: Value| ToolReply {
            text: String::new(),
            structured: Some(s),
            is_error: false,
        };
        assert_eq!(reply(json!({"posts": [1, 2]})).result_count("read_posts"), Some(2));
        assert_eq!(reply(json!({"hits": []})).result_count("search_journal"), Some(0));
        assert_eq!(reply(json!({"entries": [1]})).result_count("list_recent"), Some(1));
        assert_eq!(reply(json!({"id": "x"})).result_count("read_entry"), Some(1));
        assert_eq!(reply(json!({"id": "x"})).result_count("create_post"), None);
        let mut err = reply(json!({"posts": []}));
        err.is_error = true;
        assert_eq!(err.result_count("read_posts"), None);
    }
}
