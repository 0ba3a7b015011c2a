//! Serial request dispatch for one stdio session.

use std::io::{self, BufRead, Write};

use serde_json::{json, Value};

use crate::backend::Backend;
use crate::protocol::{
    failure, params_object, parse_message, success, Incoming, RpcError, INVALID_PARAMS, METHOD_NOT_FOUND,
};
use crate::tools::{execute, Mode, Session, ToolOutput};

pub const DEFAULT_PROTOCOL_VERSION: &str = "2025-06-18";

pub struct McpServer {
    mode: Mode,
    backend: Box<dyn Backend>,
    session: Session,
    protocol_version: Option<String>,
}

impl McpServer {
    pub fn new(mode: Mode, backend: Box<dyn Backend>) -> Self {
        Self {
            mode,
            backend,
            session: Session::default(),
            protocol_version: None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    /// Protocol version agreed during `initialize`, if it has happened.
    pub fn protocol_version(&self) -> Option<&str> {
        self.protocol_version.as_deref()
    }

    /// Handles one line of input. Returns the serialized reply, or `None` for
    /// notifications, peer responses, and blank lines.
    pub fn handle_line(&mut self, line: &str) -> Option<String> {
        if line.trim().is_empty() {
            return None;
        }
        let reply = match parse_message(line) {
            Err((id, err)) => failure(&id, &err),
            Ok(Incoming::Notification { .. } | Incoming::Response) => return None,
            Ok(Incoming::Request { id, method, params }) => match self.dispatch(&method, params) {
                Ok(result) => success(&id, result),
                Err(err) => failure(&id, &err),
            },
        };
        Some(reply.to_string())
    }

    fn dispatch(&mut self, method: &str, params: Option<Value>) -> Result<Value, RpcError> {
        match method {
            "initialize" => {
                let params = params_object(params)?;
                let version = params
                    .get("protocolVersion")
                    .and_then(Value::as_str)
                    .unwrap_or(DEFAULT_PROTOCOL_VERSION)
                    .to_string();
                self.protocol_version = Some(version.clone());
                Ok(json!({
                    "protocolVersion": version,
                    "capabilities": {"tools": {"listChanged": false}},
                    "serverInfo": {
                        "name": format!("botboard-{}", self.mode.as_str()),
                        "version": env!("CARGO_PKG_VERSION"),
                    },
                }))
            }
            "ping" => Ok(json!({})),
            "tools/list" => {
                let tools: Vec<_> = self.mode.tools().iter().map(|t| t.descriptor()).collect();
                Ok(json!({ "tools": tools }))
            }
            "tools/call" => self.call_tool(params).map(|out| out.to_result()),
            other => Err(RpcError::new(METHOD_NOT_FOUND, format!("method not found: {other}"))),
        }
    }

    fn call_tool(&mut self, params: Option<Value>) -> Result<ToolOutput, RpcError> {
        let params = params_object(params)?;
        let name = params
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, "tools/call requires a string \"name\""))?;
        let spec = self
            .mode
            .tool(name)
            .ok_or_else(|| RpcError::new(INVALID_PARAMS, format!("unknown tool: {name}")))?;
        let args = match params.get("arguments") {
            None | Some(Value::Null) => Default::default(),
            Some(Value::Object(map)) => map.clone(),
            Some(_) => return Err(RpcError::new(INVALID_PARAMS, "arguments must be an object")),
        };
        spec.validate(&args).map_err(|msg| RpcError::new(INVALID_PARAMS, msg))?;
        Ok(execute(spec, &args, &mut self.session, self.backend.as_ref()))
    }

    /// Reads newline-delimited messages until EOF, answering each in order.
    pub fn serve<R: BufRead, W: Write>(&mut self, input: R, mut output: W) -> io::Result<()> {
        for line in input.lines() {
            if let Some(reply) = self.handle_line(&line?) {
                output.write_all(reply.as_bytes())?;
                output.write_all(b"\n")?;
                output.flush()?;
            }
        }
        Ok(())
    }
}
