//! Request/response envelopes and op dispatch. See `docs/protocol.md`.

use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::model::{Anchor, EditOperation};
use crate::provider::CompletionRequest;
use crate::repo::{AnchorSpec, ReattachMode};

use super::Host;

pub const PROTOCOL_VERSION: u32 = 1;

/// Every op this host understands.
pub const OPS: &[&str] = &[
    "ping",
    "list_annotations",
    "list_proposals",
    "validate_annotations",
    "add_annotation",
    "move_annotation",
    "remove_annotation",
    "get_annotation_data",
    "set_annotation_data",
    "get_document_text",
    "set_document_text",
    "llm_complete",
    "notify_external_change",
    "confirm_proposals",
    "reject_proposals",
    "run_lm_unit_test",
];

struct Params(Map<String, Value>);

impl Params {
    fn str(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Invalid(format!("missing string parameter {key:?}")))
    }

    fn opt_str(&self, key: &str) -> Option<&str> {
        self.0.get(key).and_then(Value::as_str)
    }

    fn usize(&self, key: &str) -> Result<usize> {
        self.0
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Invalid(format!("missing non-negative integer parameter {key:?}")))
    }

    fn uuid(&self, key: &str) -> Result<Uuid> {
        Uuid::parse_str(self.str(key)?).map_err(|e| Error::Invalid(format!("{key}: {e}")))
    }

    fn uuids(&self, key: &str) -> Result<Vec<Uuid>> {
        self.typed(key)
    }

    fn typed<T: DeserializeOwned>(&self, key: &str) -> Result<T> {
        let v = self
            .0
            .get(key)
            .cloned()
            .ok_or_else(|| Error::Invalid(format!("missing parameter {key:?}")))?;
        serde_json::from_value(v).map_err(|e| Error::Invalid(format!("{key}: {e}")))
    }

    fn anchor(&self, path: &str, host: &Host) -> Result<Anchor> {
        if let Some(literal) = self.opt_str("match") {
            let (text, _) = host.get_document_text(path)?;
            return AnchorSpec::Match(literal.to_string()).resolve(&text);
        }
        let (start, end) = (self.usize("start")?, self.usize("end")?);
        if start > end {
            return Err(Error::Invalid(format!("start {start} is after end {end}")));
        }
        Ok(Anchor::new(start, end))
    }

    fn mode(&self) -> Result<ReattachMode> {
        self.opt_str("strategy").map_or(Ok(ReattachMode::Fuzzy), str::parse)
    }
}

fn to_value<T: serde::Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("plain data serializes")
}

fn run_op(host: &Host, op: &str, p: &Params) -> Result<Value> {
    Ok(match op {
        "ping" => json!({"protocolVersion": PROTOCOL_VERSION, "provider": host.has_provider(), "ops": OPS}),
        "list_annotations" => to_value(host.list_annotations(p.str("path")?)?),
        "list_proposals" => to_value(host.list_proposals(p.str("path")?)?),
        "validate_annotations" => to_value(host.validate(p.str("path")?)?),
        "add_annotation" => {
            let path = p.str("path")?;
            let anchor = p.anchor(path, host)?;
            let data = p.0.get("data").cloned().unwrap_or(Value::Null);
            to_value(host.add_annotation(path, anchor, p.str("annotationType")?, data)?)
        }
        "move_annotation" => {
            let path = p.str("path")?;
            let anchor = if p.0.contains_key("match") {
                p.anchor(path, host)?
            } else {
                let (start, end) = (p.usize("newStart")?, p.usize("newEnd")?);
                if start > end {
                    return Err(Error::Invalid(format!("start {start} is after end {end}")));
                }
                Anchor::new(start, end)
            };
            to_value(host.move_annotation(path, p.uuid("tagId")?, anchor)?)
        }
        "remove_annotation" => to_value(host.remove_annotation(p.str("path")?, p.uuid("tagId")?)?),
        "get_annotation_data" => host.get_annotation_data(p.opt_str("path"), p.uuid("tagId")?)?,
        "set_annotation_data" => {
            let data = p.0.get("data").cloned().unwrap_or(Value::Null);
            to_value(host.set_annotation_data(p.opt_str("path"), p.uuid("tagId")?, data)?)
        }
        "get_document_text" => {
            let (text, digest) = host.get_document_text(p.str("path")?)?;
            json!({"text": text, "digest": digest})
        }
        "set_document_text" => {
            let edits: Vec<EditOperation> = p.typed("edits")?;
            to_value(host.set_document_text(p.str("path")?, &edits)?)
        }
        "llm_complete" => {
            let request: CompletionRequest = serde_json::from_value(Value::Object(p.0.clone()))
                .map_err(|e| Error::Invalid(e.to_string()))?;
            json!({"text": host.llm_complete(&request)?})
        }
        "notify_external_change" => to_value(host.notify_external_change(p.str("path")?, p.mode()?)?),
        "confirm_proposals" => to_value(host.confirm_proposals(p.str("path")?, &p.uuids("tagIds")?)?),
        "reject_proposals" => to_value(host.reject_proposals(p.str("path")?, &p.uuids("tagIds")?)?),
        "run_lm_unit_test" => to_value(host.run_lm_unit_test(p.opt_str("path"), p.uuid("tagId")?)?),
        other if other.starts_with("ext.") => {
            return Err(Error::Invalid(format!("extension op {other} is not supported")))
        }
        other => return Err(Error::Invalid(format!("unknown op {other:?}"))),
    })
}

fn error_body(code: &str, message: String) -> Value {
    json!({"code": code, "message": message})
}

/// Handles one decoded request object and returns the response object.
pub fn handle(host: &Host, request: Value) -> Value {
    let Value::Object(mut map) = request else {
        return json!({"requestId": null, "ok": false,
            "error": error_body("invalid", "request must be a JSON object".into())});
    };
    let request_id = map.remove("requestId").unwrap_or(Value::Null);
    let Some(Value::String(op)) = map.remove("op") else {
        return json!({"requestId": request_id, "ok": false,
            "error": error_body("invalid", "missing \"op\"".into())});
    };
    match run_op(host, &op, &Params(map)) {
        Ok(result) => json!({"requestId": request_id, "ok": true, "result": result}),
        Err(e) => json!({"requestId": request_id, "ok": false,
            "error": error_body(e.code(), e.to_string())}),
    }
}

/// Handles one line of NDJSON input.
pub fn handle_line(host: &Host, line: &str) -> Value {
    match serde_json::from_str::<Value>(line) {
        Ok(v) => handle(host, v),
        Err(e) => json!({"requestId": null, "ok": false,
            "error": error_body("parse", e.to_string())}),
    }
}

/// The document path a request is about, if it names one.
pub fn request_path(request: &Value) -> Option<&str> {
    request.get("path").and_then(Value::as_str)
}
