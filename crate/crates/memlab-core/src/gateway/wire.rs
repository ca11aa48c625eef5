//! OpenAI-compatible wire format.
//!
//! Field names and nesting are a fixed contract:
//! `{"model", "messages": [{"role", "content"}], "temperature", "max_tokens"?}`
//! posted to `{base_url}/v1/chat/completions`.

use serde_json::{json, Value};

use super::{GenerationRequest, MessageRole};

pub const CHAT_COMPLETIONS_PATH: &str = "/v1/chat/completions";

fn role_str(role: MessageRole) -> &'static str {
    match role {
        MessageRole::System => "system",
        MessageRole::User => "user",
        MessageRole::Assistant => "assistant",
    }
}

/// Serializes a request to the exact wire body.
pub fn request_body(req: &GenerationRequest) -> Value {
    let messages: Vec<Value> = req
        .messages
        .iter()
        .map(|m| json!({"role": role_str(m.role), "content": m.content}))
        .collect();
    let mut body = json!({
        "model": req.model_id,
        "messages": messages,
        "temperature": req.temperature,
    });
    if let Some(max) = req.max_output_tokens {
        body["max_tokens"] = json!(max);
    }
    body
}

/// Validates a wire body against a recorded schema fixture of the form
/// `{"required": {field: type}, "optional": {field: type},
///   "message": {"required": {field: type}, "roles": [..]}}`
/// where type is one of "string" | "number" | "integer" | "array".
/// Unknown top-level or message fields are rejected.
pub fn validate_body(body: &Value, schema: &Value) -> Result<(), String> {
    let obj = body.as_object().ok_or("body is not an object")?;
    let required = schema["required"]
        .as_object()
        .ok_or("schema missing required map")?;
    let optional = schema["optional"].as_object().cloned().unwrap_or_default();

    for (field, ty) in required {
        let v = obj
            .get(field)
            .ok_or_else(|| format!("missing required field {field}"))?;
        check_type(v, ty.as_str().unwrap_or(""), field)?;
    }
    for (field, v) in obj {
        if required.contains_key(field) {
            continue;
        }
        match optional.get(field) {
            Some(ty) => check_type(v, ty.as_str().unwrap_or(""), field)?,
            None => return Err(format!("unexpected field {field}")),
        }
    }

    let msg_schema = &schema["message"];
    let msg_required = msg_schema["required"]
        .as_object()
        .ok_or("schema missing message map")?;
    let roles: Vec<&str> = msg_schema["roles"]
        .as_array()
        .map(|a| a.iter().filter_map(Value::as_str).collect())
        .unwrap_or_default();
    let messages = obj["messages"]
        .as_array()
        .ok_or("messages is not an array")?;
    if messages.is_empty() {
        return Err("messages array is empty".into());
    }
    for (i, msg) in messages.iter().enumerate() {
        let m = msg
            .as_object()
            .ok_or_else(|| format!("message {i} is not an object"))?;
        for (field, ty) in msg_required {
            let v = m
                .get(field)
                .ok_or_else(|| format!("message {i} missing {field}"))?;
            check_type(v, ty.as_str().unwrap_or(""), field)?;
        }
        for field in m.keys() {
            if !msg_required.contains_key(field) {
                return Err(format!("message {i} has unexpected field {field}"));
            }
        }
        let role = m["role"].as_str().unwrap_or("");
        if !roles.is_empty() && !roles.contains(&role) {
            return Err(format!("message {i} has invalid role {role}"));
        }
    }
    Ok(())
}

fn check_type(v: &Value, ty: &str, field: &str) -> Result<(), String> {
    let ok = match ty {
        "string" => v.is_string(),
        "number" => v.is_number(),
        "integer" => v.is_u64() || v.is_i64(),
        "array" => v.is_array(),
        other => return Err(format!("schema has unknown type {other} for {field}")),
    };
    if ok {
        Ok(())
    } else {
        Err(format!("field {field} is not a {ty}"))
    }
}

/// The wire schema this crate emits, as a checkable fixture value.
pub fn builtin_schema() -> Value {
    json!({
        "required": {"model": "string", "messages": "array", "temperature": "number"},
        "optional": {"max_tokens": "integer"},
        "message": {
            "required": {"role": "string", "content": "string"},
            "roles": ["system", "user", "assistant"]
        }
    })
}
