use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::Sender;
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use serde_json::{json, Value};
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::lmtest::{self, LmTestResult};
use crate::model::{
    digest_bytes, normalize_repo_path, validate_tag, Anchor, AnnotationFile, DocumentRef,
    EditOperation, TagRecord, TagStatus,
};
use crate::provider::{CompletionProvider, CompletionRequest, ProviderError};
use crate::reanchor::{
    self, confirm, is_detached, rebase, ReattachConfig, ReattachProposal, Reattachment,
};
use crate::repo::ReattachMode;
use crate::store::StoreRoot;
use crate::tracking::{apply_edit_batch, AnchorUpdate};

/// A message pushed to subscribers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HostEvent {
    pub event: String,
    pub path: String,
    pub seq: u64,
    pub payload: Value,
}

pub const ANNOTATIONS_CHANGED: &str = "annotationsChanged";
pub const DOCUMENT_CHANGED: &str = "documentChanged";
pub const ORPHAN_DETECTED: &str = "orphanDetected";

struct DocSession {
    text: String,
    digest: String,
    file: AnnotationFile,
    sidecar_exists: bool,
    pending: BTreeMap<Uuid, ReattachProposal>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DetachedTag {
    pub tag_id: Uuid,
    pub proposal: Option<ReattachProposal>,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExternalChange {
    pub state: &'static str,
    pub proposals: Vec<ReattachProposal>,
    pub detached: Vec<DetachedTag>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TextEditResult {
    pub digest: String,
    pub updates: Vec<AnchorUpdate>,
}

/// The state-owning process behind every client.
///
/// Each document has its own lock, so requests on one path are serialized
/// while different paths proceed in parallel. Events for a document are
/// broadcast while its lock is held, which keeps per-document order.
pub struct Host {
    root: StoreRoot,
    config: ReattachConfig,
    provider: Option<Arc<dyn CompletionProvider>>,
    docs: Mutex<HashMap<String, Arc<Mutex<DocSession>>>>,
    subscribers: Mutex<Vec<(u64, Sender<HostEvent>)>>,
    in_flight: Mutex<HashSet<Uuid>>,
    next_id: AtomicU64,
    seq: AtomicU64,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn file_json(file: &AnnotationFile) -> Value {
    let mut sorted = file.clone();
    sorted.sort();
    serde_json::to_value(sorted).expect("plain struct")
}

impl Host {
    pub fn new(
        root: StoreRoot,
        config: ReattachConfig,
        provider: Option<Arc<dyn CompletionProvider>>,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Host {
            root,
            config,
            provider,
            docs: Mutex::new(HashMap::new()),
            subscribers: Mutex::new(Vec::new()),
            in_flight: Mutex::new(HashSet::new()),
            next_id: AtomicU64::new(1),
            seq: AtomicU64::new(1),
        })
    }

    pub fn root(&self) -> &StoreRoot {
        &self.root
    }

    pub fn has_provider(&self) -> bool {
        self.provider.is_some()
    }

    /// Registers an event sink; returns an id for [`Host::unsubscribe`].
    pub fn subscribe(&self, sink: Sender<HostEvent>) -> u64 {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        lock(&self.subscribers).push((id, sink));
        id
    }

    pub fn unsubscribe(&self, id: u64) {
        lock(&self.subscribers).retain(|(sid, _)| *sid != id);
    }

    fn emit(&self, event: &str, path: &str, payload: Value) {
        let ev = HostEvent {
            event: event.to_string(),
            path: path.to_string(),
            seq: self.seq.fetch_add(1, Ordering::Relaxed),
            payload,
        };
        lock(&self.subscribers).retain(|(_, sink)| sink.send(ev.clone()).is_ok());
    }

    fn session(&self, path: &str) -> Result<(String, Arc<Mutex<DocSession>>)> {
        let path = normalize_repo_path(path)?;
        let mut docs = lock(&self.docs);
        if let Some(s) = docs.get(&path) {
            return Ok((path, s.clone()));
        }
        let text = self.root.read_source(&path)?;
        let loaded = self.root.load(&path)?;
        let sidecar_exists = loaded.is_some();
        let file = match loaded {
            Some(f) => f,
            None => AnnotationFile::new(DocumentRef::new(path.as_str(), &text)?),
        };
        let session = Arc::new(Mutex::new(DocSession {
            digest: digest_bytes(text.as_bytes()),
            text,
            file,
            sidecar_exists,
            pending: BTreeMap::new(),
        }));
        docs.insert(path.clone(), session.clone());
        Ok((path, session))
    }

    fn open_paths(&self) -> Vec<String> {
        let mut paths: Vec<String> = lock(&self.docs).keys().cloned().collect();
        paths.sort();
        paths
    }

    fn persist(&self, doc: &mut DocSession) -> Result<()> {
        if doc.sidecar_exists || !doc.file.annotations.is_empty() {
            self.root.save(&doc.file)?;
            doc.sidecar_exists = true;
        }
        Ok(())
    }

    fn disk_digest(&self, path: &str) -> Result<String> {
        let abs = self.root.source_abs(path)?;
        let bytes = std::fs::read(&abs).map_err(|e| Error::io(&abs, e))?;
        Ok(digest_bytes(&bytes))
    }

    /// Errors unless disk, session text and annotations all agree.
    fn require_synced(&self, path: &str, doc: &DocSession) -> Result<()> {
        if self.disk_digest(path)? != doc.digest || doc.file.document.digest != doc.digest {
            return Err(Error::StaleDocument {
                path: path.to_string(),
            });
        }
        Ok(())
    }

    fn emit_file(&self, event: &str, path: &str, doc: &DocSession, extra: Value) {
        let mut payload = json!({"file": file_json(&doc.file)});
        if let (Value::Object(p), Value::Object(e)) = (&mut payload, extra) {
            p.extend(e);
        }
        self.emit(event, path, payload);
    }

    pub fn list_annotations(&self, path: &str) -> Result<AnnotationFile> {
        let (_, session) = self.session(path)?;
        let doc = lock(&session);
        let mut file = doc.file.clone();
        file.sort();
        Ok(file)
    }

    pub fn list_proposals(&self, path: &str) -> Result<Vec<ReattachProposal>> {
        let (_, session) = self.session(path)?;
        let doc = lock(&session);
        Ok(doc.pending.values().cloned().collect())
    }

    /// Violations per tag against the session text (empty map when clean).
    pub fn validate(&self, path: &str) -> Result<BTreeMap<Uuid, Vec<String>>> {
        let (_, session) = self.session(path)?;
        let doc = lock(&session);
        Ok(doc
            .file
            .annotations
            .iter()
            .filter_map(|t| {
                let v = validate_tag(t, &doc.text);
                (!v.is_empty()).then(|| (t.id, v.iter().map(ToString::to_string).collect()))
            })
            .collect())
    }

    pub fn add_annotation(
        &self,
        path: &str,
        anchor: Anchor,
        annotation_type: &str,
        data: Value,
    ) -> Result<TagRecord> {
        let (path, session) = self.session(path)?;
        let mut doc = lock(&session);
        self.require_synced(&path, &doc)?;
        let tag = TagRecord::new(&doc.text, anchor, annotation_type, data)?;
        doc.file.annotations.push(tag.clone());
        if let Err(e) = self.persist(&mut doc) {
            doc.file.remove(tag.id);
            return Err(e);
        }
        self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"tagId": tag.id}));
        Ok(tag)
    }

    /// Moves a tag to a caller-chosen range of the session text.
    pub fn move_annotation(&self, path: &str, tag_id: Uuid, anchor: Anchor) -> Result<TagRecord> {
        let (path, session) = self.session(path)?;
        let mut doc = lock(&session);
        if self.disk_digest(&path)? != doc.digest {
            return Err(Error::StaleDocument { path });
        }
        let tag = doc
            .file
            .find(tag_id)
            .ok_or_else(|| Error::NotFound(format!("tag {tag_id}")))?;
        let proposal = ReattachProposal::manual(tag, anchor, &doc.text)?;
        let file = confirm(&proposal, &doc.file, &doc.text)?;
        let previous = std::mem::replace(&mut doc.file, file);
        doc.pending.remove(&tag_id);
        if let Err(e) = self.persist(&mut doc) {
            doc.file = previous;
            return Err(e);
        }
        self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"tagId": tag_id}));
        Ok(doc.file.find(tag_id).expect("kept").clone())
    }

    pub fn remove_annotation(&self, path: &str, tag_id: Uuid) -> Result<TagRecord> {
        let (path, session) = self.session(path)?;
        let mut doc = lock(&session);
        let removed = doc
            .file
            .remove(tag_id)
            .ok_or_else(|| Error::NotFound(format!("tag {tag_id}")))?;
        doc.pending.remove(&tag_id);
        if let Err(e) = self.persist(&mut doc) {
            doc.file.annotations.push(removed);
            return Err(e);
        }
        self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"tagId": tag_id}));
        Ok(removed)
    }

    /// Finds which document holds `tag_id`, loading sidecars as needed.
    pub fn locate_tag(&self, path: Option<&str>, tag_id: Uuid) -> Result<String> {
        if let Some(p) = path {
            return normalize_repo_path(p);
        }
        for p in self.open_paths() {
            let (_, s) = self.session(&p)?;
            if lock(&s).file.find(tag_id).is_some() {
                return Ok(p);
            }
        }
        for p in self.root.list_sources()? {
            if let Some(f) = self.root.load(&p)? {
                if f.find(tag_id).is_some() {
                    return Ok(p);
                }
            }
        }
        Err(Error::NotFound(format!("tag {tag_id}")))
    }

    pub fn get_annotation_data(&self, path: Option<&str>, tag_id: Uuid) -> Result<Value> {
        let path = self.locate_tag(path, tag_id)?;
        let (_, session) = self.session(&path)?;
        let doc = lock(&session);
        doc.file
            .find(tag_id)
            .map(|t| t.data.clone())
            .ok_or_else(|| Error::NotFound(format!("tag {tag_id}")))
    }

    pub fn set_annotation_data(&self, path: Option<&str>, tag_id: Uuid, data: Value) -> Result<TagRecord> {
        let path = self.locate_tag(path, tag_id)?;
        let (path, session) = self.session(&path)?;
        let mut doc = lock(&session);
        let tag = doc
            .file
            .find_mut(tag_id)
            .ok_or_else(|| Error::NotFound(format!("tag {tag_id}")))?;
        let old = std::mem::replace(&mut tag.data, data);
        if let Err(e) = self.persist(&mut doc) {
            doc.file.find_mut(tag_id).expect("present").data = old;
            return Err(e);
        }
        self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"tagId": tag_id}));
        Ok(doc.file.find(tag_id).expect("present").clone())
    }

    pub fn get_document_text(&self, path: &str) -> Result<(String, String)> {
        let (_, session) = self.session(path)?;
        let doc = lock(&session);
        Ok((doc.text.clone(), doc.digest.clone()))
    }

    /// Applies `edits` in order to the document and every tag on it, then
    /// writes both the document and its sidecar.
    pub fn set_document_text(&self, path: &str, edits: &[EditOperation]) -> Result<TextEditResult> {
        let (path, session) = self.session(path)?;
        let mut doc = lock(&session);
        self.require_synced(&path, &doc)?;
        let batch = apply_edit_batch(&doc.file, &doc.text, edits)?;
        let abs = self.root.source_abs(&path)?;
        crate::store::write_atomic(&abs, batch.text.as_bytes())?;
        doc.digest = digest_bytes(batch.text.as_bytes());
        doc.text = batch.text;
        doc.file = batch.file;
        // proposals computed against the old text are void now
        let stale: Vec<Uuid> = std::mem::take(&mut doc.pending).into_keys().collect();
        for id in stale {
            if let Some(t) = doc.file.find_mut(id) {
                t.status = TagStatus::Orphaned;
            }
        }
        self.persist(&mut doc)?;
        let result = TextEditResult {
            digest: doc.digest.clone(),
            updates: batch.updates,
        };
        self.emit_file(
            DOCUMENT_CHANGED,
            &path,
            &doc,
            json!({"digest": result.digest, "updates": result.updates}),
        );
        Ok(result)
    }

    pub fn llm_complete(&self, request: &CompletionRequest) -> Result<String> {
        let provider = self.provider.as_ref().ok_or(ProviderError::Unavailable)?;
        Ok(provider.complete(request)?)
    }

    /// Re-reads `path` from disk and stages proposals for tags that no
    /// longer match. Nothing is written until [`Host::confirm_proposals`].
    pub fn notify_external_change(&self, path: &str, mode: ReattachMode) -> Result<ExternalChange> {
        if mode == ReattachMode::Semantic && self.provider.is_none() {
            return Err(ProviderError::Unavailable.into());
        }
        let (path, session) = self.session(path)?;
        let text = self.root.read_source(&path)?;
        let digest = digest_bytes(text.as_bytes());

        let detached: Vec<TagRecord> = {
            let mut doc = lock(&session);
            if digest == doc.file.document.digest && digest == doc.digest {
                return Ok(ExternalChange {
                    state: "fresh",
                    proposals: Vec::new(),
                    detached: Vec::new(),
                    warnings: Vec::new(),
                });
            }
            doc.text = text.clone();
            doc.digest = digest.clone();
            let chars: Vec<char> = text.chars().collect();
            doc.file
                .annotations
                .iter()
                .filter(|t| is_detached(t, &chars))
                .cloned()
                .collect()
        };

        let mut warnings = Vec::new();
        let mut results = Vec::with_capacity(detached.len());
        for tag in &detached {
            let result = if tag.context.anchor_text.is_empty() {
                Reattachment::Orphaned {
                    tag_id: tag.id,
                    best: None,
                }
            } else {
                match (mode, &self.provider) {
                    (ReattachMode::Semantic, Some(p)) => {
                        if !lock(&self.in_flight).insert(tag.id) {
                            warnings.push(format!("tag {}: semantic re-anchor already running", tag.id));
                            continue;
                        }
                        let out = reanchor::semantic_reattach(tag, &text, p.as_ref(), &self.config);
                        lock(&self.in_flight).remove(&tag.id);
                        let out = out?;
                        if let Some(e) = out.provider_error {
                            warnings.push(format!("tag {}: {e}; used fuzzy matching", tag.id));
                        }
                        out.result
                    }
                    (ReattachMode::Exact, _) => reanchor::reattach_exact(tag, &text, &self.config)?,
                    _ => reanchor::reattach(tag, &text, &self.config)?,
                }
            };
            results.push(result);
        }

        let mut doc = lock(&session);
        if doc.digest != digest {
            return Err(Error::StaleDocument { path });
        }
        let mut proposals = Vec::new();
        let mut detached_out = Vec::new();
        for result in results {
            match result {
                Reattachment::Proposal(p) => {
                    if let Some(t) = doc.file.find_mut(p.tag_id) {
                        t.status = TagStatus::Proposed;
                    }
                    doc.pending.insert(p.tag_id, p.clone());
                    detached_out.push(DetachedTag {
                        tag_id: p.tag_id,
                        best_score: Some(p.score),
                        proposal: Some(p.clone()),
                    });
                    proposals.push(p);
                }
                Reattachment::Orphaned { tag_id, best } => {
                    if let Some(t) = doc.file.find_mut(tag_id) {
                        t.status = TagStatus::Orphaned;
                    }
                    doc.pending.remove(&tag_id);
                    detached_out.push(DetachedTag {
                        tag_id,
                        proposal: None,
                        best_score: best.map(|b| b.1),
                    });
                }
            }
        }
        if !detached_out.is_empty() {
            self.emit_file(ORPHAN_DETECTED, &path, &doc, json!({"detached": detached_out}));
        }
        Ok(ExternalChange {
            state: "stale",
            proposals,
            detached: detached_out,
            warnings,
        })
    }

    /// Applies the staged proposals for `tag_ids` and writes the sidecar.
    ///
    /// The sidecar moves onto the current text; tags still waiting for a
    /// decision keep their proposals.
    pub fn confirm_proposals(&self, path: &str, tag_ids: &[Uuid]) -> Result<AnnotationFile> {
        let (path, session) = self.session(path)?;
        let mut doc = lock(&session);
        if self.disk_digest(&path)? != doc.digest {
            return Err(Error::StaleDocument { path });
        }
        let mut file = if doc.file.document.digest == doc.digest {
            doc.file.clone()
        } else {
            rebase(&doc.file, &doc.text)
        };
        for id in tag_ids {
            let proposal = doc
                .pending
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("no pending proposal for tag {id}")))?;
            let mut accepted = proposal.clone();
            accepted.accepted = true;
            file = confirm(&accepted, &file, &doc.text)?;
        }
        let previous = std::mem::replace(&mut doc.file, file);
        if let Err(e) = self.persist(&mut doc) {
            doc.file = previous;
            return Err(e);
        }
        for id in tag_ids {
            doc.pending.remove(id);
        }
        self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"confirmed": tag_ids}));
        let mut out = doc.file.clone();
        out.sort();
        Ok(out)
    }

    /// Drops staged proposals; the tags stay orphaned until moved by hand.
    pub fn reject_proposals(&self, path: &str, tag_ids: &[Uuid]) -> Result<Vec<Uuid>> {
        let (path, session) = self.session(path)?;
        let mut doc = lock(&session);
        let mut rejected = Vec::new();
        for id in tag_ids {
            if doc.pending.remove(id).is_some() {
                if let Some(t) = doc.file.find_mut(*id) {
                    t.status = TagStatus::Orphaned;
                }
                rejected.push(*id);
            }
        }
        if !rejected.is_empty() {
            self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"rejected": rejected}));
        }
        Ok(rejected)
    }

    /// Asks the provider the tag's question and records the answer in
    /// `data.lastResult`.
    pub fn run_lm_unit_test(&self, path: Option<&str>, tag_id: Uuid) -> Result<LmTestResult> {
        let path = self.locate_tag(path, tag_id)?;
        let (path, session) = self.session(&path)?;
        let (mut tag, text) = {
            let doc = lock(&session);
            let tag = doc
                .file
                .find(tag_id)
                .ok_or_else(|| Error::NotFound(format!("tag {tag_id}")))?
                .clone();
            lmtest::question(&tag)?;
            (tag, doc.text.clone())
        };
        if self.provider.is_none() {
            return Err(ProviderError::Unavailable.into());
        }
        let outcome = lmtest::run(&mut tag, &text, self.provider.as_deref());
        let mut doc = lock(&session);
        if let Some(t) = doc.file.find_mut(tag_id) {
            t.data["lastResult"] = tag.data["lastResult"].take();
            self.persist(&mut doc)?;
            self.emit_file(ANNOTATIONS_CHANGED, &path, &doc, json!({"tagId": tag_id}));
        }
        outcome
    }

    /// Runs [`Host::notify_external_change`] for open documents whose bytes
    /// on disk no longer match the session. Returns the paths that changed.
    pub fn poll_external_changes(&self) -> Vec<String> {
        let mut changed = Vec::new();
        for path in self.open_paths() {
            let Ok((_, session)) = self.session(&path) else {
                continue;
            };
            let current = lock(&session).digest.clone();
            if self.disk_digest(&path).is_ok_and(|d| d != current)
                && self.notify_external_change(&path, ReattachMode::Fuzzy).is_ok()
            {
                changed.push(path);
            }
        }
        changed
    }
}
