//! JSON-RPC 2.0 envelopes, one message per line.

use serde_json::{json, Map, Value};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

#[derive(Debug, Clone, PartialEq)]
pub enum Incoming {
    Request {
        id: Value,
        method: String,
        params: Option<Value>,
    },
    Notification {
        method: String,
    },
    /// A response from the peer; servers without outbound requests ignore it.
    Response,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

/// Classifies one line. On failure returns the error plus whatever id could be
/// recovered, so the reply can still echo it.
pub fn parse_message(line: &str) -> Result<Incoming, (Value, RpcError)> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| (Value::Null, RpcError::new(PARSE_ERROR, format!("parse error: {e}"))))?;
    let Value::Object(obj) = value else {
        return Err((
            Value::Null,
            RpcError::new(INVALID_REQUEST, "message must be a JSON object"),
        ));
    };
    let id = obj.get("id").cloned();
    let echo = id.clone().filter(valid_id).unwrap_or(Value::Null);
    let invalid = |msg: &str| Err((echo.clone(), RpcError::new(INVALID_REQUEST, msg)));

    if obj.get("jsonrpc") != Some(&Value::String("2.0".into())) {
        return invalid("jsonrpc must be \"2.0\"");
    }
    if let Some(id) = &id {
        if !valid_id(id) {
            return invalid("id must be a string, number, or null");
        }
    }
    let Some(method) = obj.get("method") else {
        if id.is_some() && (obj.contains_key("result") || obj.contains_key("error")) {
            return Ok(Incoming::Response);
        }
        return invalid("missing method");
    };
    let Value::String(method) = method else {
        return invalid("method must be a string");
    };
    let params = obj.get("params").cloned();
    if let Some(p) = &params {
        if !(p.is_object() || p.is_array()) {
            return invalid("params must be an object or array");
        }
    }
    match id {
        Some(id) => Ok(Incoming::Request {
            id,
            method: method.clone(),
            params,
        }),
        None => Ok(Incoming::Notification { method: method.clone() }),
    }
}

fn valid_id(id: &Value) -> bool {
    matches!(id, Value::String(_) | Value::Number(_) | Value::Null)
}

pub fn success(id: &Value, result: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "result": result})
}

pub fn failure(id: &Value, err: &RpcError) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "error": {"code": err.code, "message": err.message}})
}

pub fn params_object(params: Option<Value>) -> Result<Map<String, Value>, RpcError> {
    match params {
        None => Ok(Map::new()),
        Some(Value::Object(map)) => Ok(map),
        Some(_) => Err(RpcError::new(INVALID_PARAMS, "params must be an object")),
    }
}
