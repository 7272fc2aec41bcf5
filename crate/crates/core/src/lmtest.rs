//! `lm-unit-test` annotations: a yes/no question about the annotated code,
//! answered by a completion provider. A "no" comes with suggested
//! replacement text for the annotated region.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::TagRecord;
use crate::provider::{CompletionProvider, CompletionRequest, ProviderError};

pub const LM_UNIT_TEST_TYPE: &str = "lm-unit-test";

pub(crate) const INSTRUCTIONS_HEAD: &str = "Answer a yes/no question about the annotated code.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmTestResult {
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

pub fn question(tag: &TagRecord) -> Result<String> {
    if tag.annotation_type != LM_UNIT_TEST_TYPE {
        return Err(Error::Precondition(format!(
            "tag {} is {:?}, not {LM_UNIT_TEST_TYPE}",
            tag.id, tag.annotation_type
        )));
    }
    match tag.data.get("question") {
        Some(Value::String(q)) if !q.trim().is_empty() => Ok(q.clone()),
        _ => Err(Error::Precondition(format!(
            "tag {} has no question in its data",
            tag.id
        ))),
    }
}

pub fn build_request(question: &str, tag: &TagRecord, document: &str) -> CompletionRequest {
    let instructions = format!(
        "{INSTRUCTIONS_HEAD} The annotated code is the anchor text of the anchor context; the \
         full document is attached.\nReply with YES or NO alone on the first line. After NO, \
         write on the following lines replacement text for the annotated code that would make \
         the answer YES.\n\nQuestion: {question}\n\nAnnotated code:\n{}",
        tag.context.anchor_text
    );
    CompletionRequest {
        instructions,
        document: document.to_string(),
        anchor_context: tag.context.clone(),
    }
}

/// First line `YES` or `NO` (case-insensitive); after `NO` the rest is the suggestion.
pub fn parse_reply(reply: &str) -> std::result::Result<LmTestResult, String> {
    let (first, rest) = match reply.split_once('\n') {
        Some((first, rest)) => (first, Some(rest)),
        None => (reply, None),
    };
    match first.trim().trim_end_matches('.').to_ascii_uppercase().as_str() {
        "YES" => Ok(LmTestResult {
            pass: true,
            suggestion: None,
        }),
        "NO" => Ok(LmTestResult {
            pass: false,
            suggestion: rest.filter(|s| !s.trim().is_empty()).map(str::to_string),
        }),
        _ => Err(format!("expected YES or NO on the first line, got {first:?}")),
    }
}

/// Runs the test and stores the outcome under `data.lastResult`.
///
/// Provider and reply errors are recorded in `lastResult` as well as returned.
pub fn run(
    tag: &mut TagRecord,
    document: &str,
    provider: Option<&dyn CompletionProvider>,
) -> Result<LmTestResult> {
    let question = question(tag)?;
    let provider = provider.ok_or(ProviderError::Unavailable)?;
    let request = build_request(&question, tag, document);
    let outcome = provider
        .complete(&request)
        .map_err(Error::from)
        .and_then(|reply| parse_reply(&reply).map_err(|m| Error::Provider(ProviderError::BadReply(m))));
    let record = match &outcome {
        Ok(result) => serde_json::to_value(result).expect("plain struct"),
        Err(e) => json!({"error": e.to_string()}),
    };
    if !tag.data.is_object() {
        tag.data = json!({"question": question});
    }
    tag.data["lastResult"] = record;
    outcome
}
