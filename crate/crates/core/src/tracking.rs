//! Online anchor maintenance: maps anchors through replace-range edits.
//!
//! Insertions exactly at an anchor's start or end are excluded from the
//! anchor (start maps right-biased, end maps left-biased). Insertions
//! strictly inside are included. A non-empty anchor whose text is deleted
//! entirely becomes orphaned and collapses to a zero-width range at the
//! deletion site, keeping its cached context for re-anchoring.

use serde::Serialize;
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::model::{digest_bytes, Anchor, AnnotationFile, DocOffset, EditOperation, TagRecord, TagStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bias {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Unchanged,
    Shifted,
    Resized,
    Orphaned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AnchorUpdate {
    pub tag_id: Uuid,
    pub new_anchor: Anchor,
    pub outcome: Outcome,
}

/// Maps a single offset through `edit`. `doc_len` is the pre-edit length.
pub fn map_position(x: DocOffset, edit: &EditOperation, bias: Bias, doc_len: usize) -> Result<DocOffset> {
    edit.check(doc_len)?;
    if x.0 > doc_len {
        return Err(Error::Precondition(format!(
            "offset {x} beyond document length {doc_len}"
        )));
    }
    Ok(DocOffset(map_unchecked(x.0, edit, bias)))
}

fn map_unchecked(x: usize, edit: &EditOperation, bias: Bias) -> usize {
    let p = edit.position.0;
    let d = edit.deleted_length;
    let i = edit.inserted_len();
    if x < p {
        x
    } else if x == p {
        match bias {
            Bias::Left => p,
            Bias::Right => p + i,
        }
    } else if x < p + d {
        match bias {
            Bias::Left => p,
            Bias::Right => p + i,
        }
    } else if x == p + d {
        p + i
    } else {
        x - d + i
    }
}

fn classify(old: Anchor, new: Anchor) -> Outcome {
    if old == new {
        Outcome::Unchanged
    } else if old.len() == new.len() {
        Outcome::Shifted
    } else {
        Outcome::Resized
    }
}

/// Core of [`apply_edit`] operating on the decoded post-edit text.
fn apply_edit_chars(tag: &mut TagRecord, edit: &EditOperation, post: &[char]) -> AnchorUpdate {
    let old = tag.anchor;
    let (s, e) = (old.start.0, old.end.0);
    let left = |x| map_unchecked(x, edit, Bias::Left);
    let right = |x| map_unchecked(x, edit, Bias::Right);

    let outcome = match tag.status {
        TagStatus::Attached if s < e => {
            let (ns, ne) = (right(s), left(e));
            if ns >= ne {
                let at = left(s);
                tag.anchor = Anchor::new(at, at);
                tag.status = TagStatus::Orphaned;
                Outcome::Orphaned
            } else {
                tag.anchor = Anchor::new(ns, ne);
                tag.context.refresh(post, tag.anchor);
                classify(old, tag.anchor)
            }
        }
        TagStatus::Attached => {
            // zero-width anchors stay in front of text inserted at their position
            let at = left(s);
            tag.anchor = Anchor::new(at, at);
            tag.context.refresh(post, tag.anchor);
            classify(old, tag.anchor)
        }
        TagStatus::Orphaned | TagStatus::Proposed => {
            tag.anchor = Anchor::new(left(s), left(e));
            classify(old, tag.anchor)
        }
    };
    AnchorUpdate {
        tag_id: tag.id,
        new_anchor: tag.anchor,
        outcome,
    }
}

/// Maps one tag through one edit. `post_edit_text` is the document after the edit.
pub fn apply_edit(
    tag: &TagRecord,
    edit: &EditOperation,
    post_edit_text: &str,
) -> Result<(TagRecord, AnchorUpdate)> {
    let post: Vec<char> = post_edit_text.chars().collect();
    let pre_len = (post.len() + edit.deleted_length)
        .checked_sub(edit.inserted_len())
        .ok_or_else(|| Error::Precondition("post-edit text shorter than the insertion".into()))?;
    edit.check(pre_len)?;
    if tag.anchor.start > tag.anchor.end || tag.anchor.end.0 > pre_len {
        return Err(Error::OutOfBounds {
            anchor: tag.anchor,
            len: pre_len,
        });
    }
    let mut out = tag.clone();
    let update = apply_edit_chars(&mut out, edit, &post);
    Ok((out, update))
}

/// Result of [`apply_edit_batch`].
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub file: AnnotationFile,
    /// Net update per tag, in the file's annotation order.
    pub updates: Vec<AnchorUpdate>,
    pub text: String,
}

/// Applies `edits` sequentially (each addressed against the previous
/// edit's result) to `base_text` and to every tag in `file`.
///
/// `file` must describe `base_text`. Any inconsistency aborts the whole
/// batch and leaves `file` untouched.
pub fn apply_edit_batch(
    file: &AnnotationFile,
    base_text: &str,
    edits: &[EditOperation],
) -> Result<BatchOutcome> {
    if file.document.digest != digest_bytes(base_text.as_bytes()) {
        return Err(Error::StaleDocument {
            path: file.document.path.clone(),
        });
    }
    let mut chars: Vec<char> = base_text.chars().collect();
    for tag in &file.annotations {
        if !tag.anchor.fits(chars.len()) {
            return Err(Error::OutOfBounds {
                anchor: tag.anchor,
                len: chars.len(),
            });
        }
    }

    let mut out = file.clone();
    let originals: Vec<(Anchor, TagStatus)> =
        out.annotations.iter().map(|t| (t.anchor, t.status)).collect();
    let mut orphaned = vec![false; out.annotations.len()];
    for edit in edits {
        edit.apply_to(&mut chars)?;
        for (idx, tag) in out.annotations.iter_mut().enumerate() {
            if apply_edit_chars(tag, edit, &chars).outcome == Outcome::Orphaned {
                orphaned[idx] = true;
            }
        }
    }

    let updates = out
        .annotations
        .iter()
        .zip(originals)
        .zip(orphaned)
        .map(|((tag, (old, _)), was_orphaned)| AnchorUpdate {
            tag_id: tag.id,
            new_anchor: tag.anchor,
            outcome: if was_orphaned {
                Outcome::Orphaned
            } else {
                classify(old, tag.anchor)
            },
        })
        .collect();
    let text: String = chars.into_iter().collect();
    out.document.digest = digest_bytes(text.as_bytes());
    Ok(BatchOutcome {
        file: out,
        updates,
        text,
    })
}
