//! Annotation data model shared by every other module.
//!
//! All offsets count Unicode scalar values of the decoded document, never
//! bytes or UTF-16 units.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::error::{Error, Result};

/// Number of scalar values captured on each side of an anchor.
pub const CONTEXT_WINDOW: usize = 64;

/// Current sidecar format version.
pub const FORMAT_VERSION: u32 = 1;

/// Position in a document, counted in Unicode scalar values.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct DocOffset(pub usize);

impl DocOffset {
    pub fn get(self) -> usize {
        self.0
    }
}

impl From<usize> for DocOffset {
    fn from(v: usize) -> Self {
        DocOffset(v)
    }
}

impl fmt::Display for DocOffset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Half-open range `[start, end)` of a document.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub start: DocOffset,
    pub end: DocOffset,
}

impl Anchor {
    pub fn new(start: usize, end: usize) -> Self {
        Anchor {
            start: DocOffset(start),
            end: DocOffset(end),
        }
    }

    pub fn len(&self) -> usize {
        self.end.0.saturating_sub(self.start.0)
    }

    pub fn is_empty(&self) -> bool {
        self.end.0 <= self.start.0
    }

    /// True when the range is ordered and fits in a document of `doc_len` scalars.
    pub fn fits(&self, doc_len: usize) -> bool {
        self.start <= self.end && self.end.0 <= doc_len
    }
}

impl fmt::Display for Anchor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{})", self.start, self.end)
    }
}

/// Lowercase hex SHA-256 of raw bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Identifies the document version a sidecar was written against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRef {
    pub path: String,
    pub digest: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl DocumentRef {
    pub fn new(path: impl Into<String>, text: &str) -> Result<Self> {
        let path = normalize_repo_path(&path.into())?;
        Ok(DocumentRef {
            path,
            digest: digest_bytes(text.as_bytes()),
            extra: BTreeMap::new(),
        })
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        self.digest == digest_bytes(bytes)
    }
}

/// Validates a repo-relative path and returns it with forward slashes.
///
/// Rejects absolute paths, `.`/`..` segments and empty segments.
pub fn normalize_repo_path(path: &str) -> Result<String> {
    let unified = path.replace('\\', "/");
    if unified.is_empty() || unified.starts_with('/') || unified.contains(':') {
        return Err(Error::PathEscape(path.to_string()));
    }
    for seg in unified.split('/') {
        if seg.is_empty() || seg == "." || seg == ".." {
            return Err(Error::PathEscape(path.to_string()));
        }
    }
    Ok(unified)
}

/// Text cached around an anchor when it was last attached.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnchorContext {
    pub anchor_text: String,
    pub prefix: String,
    pub suffix: String,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl AnchorContext {
    /// Captures the anchor text and up to [`CONTEXT_WINDOW`] scalars either side.
    pub fn capture(chars: &[char], anchor: Anchor) -> Self {
        let (s, e) = (anchor.start.0, anchor.end.0);
        let pre = s.saturating_sub(CONTEXT_WINDOW);
        let post = (e + CONTEXT_WINDOW).min(chars.len());
        AnchorContext {
            anchor_text: chars[s..e].iter().collect(),
            prefix: chars[pre..s].iter().collect(),
            suffix: chars[e..post].iter().collect(),
            extra: BTreeMap::new(),
        }
    }

    /// Recaptures the three snippets while keeping unknown fields.
    pub fn refresh(&mut self, chars: &[char], anchor: Anchor) {
        let fresh = Self::capture(chars, anchor);
        self.anchor_text = fresh.anchor_text;
        self.prefix = fresh.prefix;
        self.suffix = fresh.suffix;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TagStatus {
    Attached,
    Orphaned,
    /// A re-anchor proposal is staged and waiting for confirmation.
    Proposed,
}

impl fmt::Display for TagStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TagStatus::Attached => "attached",
            TagStatus::Orphaned => "orphaned",
            TagStatus::Proposed => "proposed",
        })
    }
}

/// One annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TagRecord {
    pub id: Uuid,
    pub anchor: Anchor,
    pub context: AnchorContext,
    pub annotation_type: String,
    #[serde(default)]
    pub data: Value,
    pub status: TagStatus,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl TagRecord {
    /// Creates an attached tag over `anchor` with a fresh v4 id.
    pub fn new(text: &str, anchor: Anchor, annotation_type: &str, data: Value) -> Result<Self> {
        let chars: Vec<char> = text.chars().collect();
        if !anchor.fits(chars.len()) {
            return Err(Error::OutOfBounds {
                anchor,
                len: chars.len(),
            });
        }
        if annotation_type.is_empty() {
            return Err(Error::Invalid("annotation type must not be empty".into()));
        }
        Ok(TagRecord {
            id: Uuid::new_v4(),
            anchor,
            context: AnchorContext::capture(&chars, anchor),
            annotation_type: annotation_type.to_string(),
            data,
            status: TagStatus::Attached,
            extra: BTreeMap::new(),
        })
    }

    /// Lowercase hyphenated form of the id, as stored on disk.
    pub fn id_string(&self) -> String {
        self.id.hyphenated().to_string()
    }
}

/// A single replace-range edit against a known document state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EditOperation {
    pub position: DocOffset,
    pub deleted_length: usize,
    #[serde(default)]
    pub inserted_text: String,
}

impl EditOperation {
    pub fn new(position: usize, deleted_length: usize, inserted_text: impl Into<String>) -> Self {
        EditOperation {
            position: DocOffset(position),
            deleted_length,
            inserted_text: inserted_text.into(),
        }
    }

    pub fn inserted_len(&self) -> usize {
        self.inserted_text.chars().count()
    }

    /// Checks the edit against a document of `doc_len` scalars.
    pub fn check(&self, doc_len: usize) -> Result<()> {
        if self.deleted_length == 0 && self.inserted_text.is_empty() {
            return Err(Error::Precondition("no-op edit".into()));
        }
        let end = self.position.0.checked_add(self.deleted_length);
        if end.is_none_or(|end| end > doc_len) {
            return Err(Error::Precondition(format!(
                "edit at {} deleting {} exceeds document length {}",
                self.position, self.deleted_length, doc_len
            )));
        }
        Ok(())
    }

    /// Applies the edit to `chars` in place.
    pub fn apply_to(&self, chars: &mut Vec<char>) -> Result<()> {
        self.check(chars.len())?;
        let p = self.position.0;
        chars.splice(p..p + self.deleted_length, self.inserted_text.chars());
        Ok(())
    }
}

/// The sidecar document: one per annotated source file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnnotationFile {
    pub format_version: u32,
    pub document: DocumentRef,
    pub annotations: Vec<TagRecord>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl AnnotationFile {
    pub fn new(document: DocumentRef) -> Self {
        AnnotationFile {
            format_version: FORMAT_VERSION,
            document,
            annotations: Vec::new(),
            extra: BTreeMap::new(),
        }
    }

    pub fn find(&self, id: Uuid) -> Option<&TagRecord> {
        self.annotations.iter().find(|t| t.id == id)
    }

    pub fn find_mut(&mut self, id: Uuid) -> Option<&mut TagRecord> {
        self.annotations.iter_mut().find(|t| t.id == id)
    }

    pub fn remove(&mut self, id: Uuid) -> Option<TagRecord> {
        let idx = self.annotations.iter().position(|t| t.id == id)?;
        Some(self.annotations.remove(idx))
    }

    /// Sorts annotations by `(anchor.start, id)`, the on-disk order.
    pub fn sort(&mut self) {
        self.annotations
            .sort_by(|a, b| (a.anchor.start, a.id_string()).cmp(&(b.anchor.start, b.id_string())));
    }

    /// Structural checks that do not need the document text.
    pub fn check_structure(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for tag in &self.annotations {
            if !seen.insert(tag.id) {
                return Err(Error::Invalid(format!("duplicate tag id {}", tag.id)));
            }
            if tag.anchor.start > tag.anchor.end {
                return Err(Error::Invalid(format!(
                    "tag {} has start after end {}",
                    tag.id, tag.anchor
                )));
            }
            if tag.annotation_type.is_empty() {
                return Err(Error::Invalid(format!("tag {} has empty type", tag.id)));
            }
        }
        Ok(())
    }

    pub fn orphan_count(&self) -> usize {
        self.annotations
            .iter()
            .filter(|t| t.status != TagStatus::Attached)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Violation {
    StartAfterEnd,
    AnchorOutOfBounds,
    AnchorTextMismatch,
    BadIdFormat,
    EmptyAnnotationType,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Violation::StartAfterEnd => "start after end",
            Violation::AnchorOutOfBounds => "anchor out of bounds",
            Violation::AnchorTextMismatch => "anchor text mismatch",
            Violation::BadIdFormat => "bad id format",
            Violation::EmptyAnnotationType => "empty annotation type",
        })
    }
}

/// Lists every invariant `record` violates against `document_text`.
///
/// Anchor text is only compared for attached tags.
pub fn validate_tag(record: &TagRecord, document_text: &str) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.get_version_num() != 4 {
        out.push(Violation::BadIdFormat);
    }
    if record.annotation_type.is_empty() {
        out.push(Violation::EmptyAnnotationType);
    }
    let (s, e) = (record.anchor.start.0, record.anchor.end.0);
    if s > e {
        out.push(Violation::StartAfterEnd);
        return out;
    }
    let len = document_text.chars().count();
    if e > len {
        out.push(Violation::AnchorOutOfBounds);
        return out;
    }
    if record.status == TagStatus::Attached {
        let actual: String = document_text.chars().skip(s).take(e - s).collect();
        if actual != record.context.anchor_text {
            out.push(Violation::AnchorTextMismatch);
        }
    }
    out
}

/// Substring of `text` between two scalar offsets.
pub fn slice_chars(text: &str, start: usize, end: usize) -> &str {
    let byte = |n: usize| text.char_indices().nth(n).map_or(text.len(), |(b, _)| b);
    let bs = byte(start);
    let be = bs + text[bs..].char_indices().nth(end - start).map_or(text.len() - bs, |(b, _)| b);
    &text[bs..be]
}
