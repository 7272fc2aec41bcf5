//! Sidecar persistence under `<repo>/.codetations/`.
//!
//! Each annotated source file `src/a.rs` gets its own sidecar
//! `.codetations/src/a.rs.annotations.json`. Sidecars are written in a
//! canonical form (sorted keys, two-space indent, trailing newline,
//! annotations ordered by start then id) so identical content always
//! produces identical bytes and diffs stay small under version control.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{digest_bytes, normalize_repo_path, AnnotationFile, FORMAT_VERSION};

pub const STORE_DIR: &str = ".codetations";
pub const SIDECAR_SUFFIX: &str = ".annotations.json";

/// Repository root plus the derived store directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreRoot {
    repo_root: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Freshness {
    Fresh,
    Stale,
    Absent,
}

impl std::fmt::Display for Freshness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Freshness::Fresh => "fresh",
            Freshness::Stale => "stale",
            Freshness::Absent => "absent",
        })
    }
}

/// Repo-relative sidecar path for `source`.
pub fn sidecar_path(source: &str) -> Result<String> {
    let source = normalize_repo_path(source)?;
    if source == STORE_DIR || source.starts_with(&format!("{STORE_DIR}/")) {
        return Err(Error::Invalid(format!(
            "{source} is inside the annotation store"
        )));
    }
    Ok(format!("{STORE_DIR}/{source}{SIDECAR_SUFFIX}"))
}

/// Canonical sidecar bytes for `file`.
pub fn to_canonical_json(file: &AnnotationFile) -> Result<String> {
    let mut file = file.clone();
    file.sort();
    let value = serde_json::to_value(&file).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut out = serde_json::to_string_pretty(&sorted(value)).expect("values always serialize");
    out.push('\n');
    Ok(out)
}

fn sorted(value: Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// Parses sidecar bytes; `origin` is only used in error messages.
pub fn from_json(bytes: &[u8], origin: &Path) -> Result<AnnotationFile> {
    let parse_err = |message: String| Error::Parse {
        path: origin.to_path_buf(),
        message,
    };
    let value: Value = serde_json::from_slice(bytes).map_err(|e| parse_err(e.to_string()))?;
    match value.get("formatVersion").and_then(Value::as_u64) {
        Some(v) if v > u64::from(FORMAT_VERSION) => {
            return Err(Error::UnsupportedVersion {
                path: origin.to_path_buf(),
                found: v,
                supported: FORMAT_VERSION,
            })
        }
        Some(_) => {}
        None => return Err(parse_err("missing or non-integer formatVersion".into())),
    }
    let file: AnnotationFile =
        serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
    file.check_structure().map_err(|e| parse_err(e.to_string()))?;
    Ok(file)
}

/// A sidecar written to a temporary file but not yet renamed into place.
///
/// Dropping it without [`PendingWrite::commit`] leaves the previous sidecar
/// intact, which is also what a crash at that point looks like.
#[derive(Debug)]
pub struct PendingWrite {
    temp: PathBuf,
    target: PathBuf,
}

impl PendingWrite {
    pub fn temp_path(&self) -> &Path {
        &self.temp
    }

    pub fn commit(self) -> Result<()> {
        fs::rename(&self.temp, &self.target).map_err(|e| Error::io(&self.target, e))?;
        if let Some(dir) = self.target.parent() {
            // best effort: persist the rename itself
            if let Ok(d) = fs::File::open(dir) {
                let _ = d.sync_all();
            }
        }
        Ok(())
    }
}

/// Writes `bytes` next to `target` and syncs it, ready to be renamed.
pub fn stage_bytes(target: &Path, bytes: &[u8]) -> Result<PendingWrite> {
    let dir = target
        .parent()
        .ok_or_else(|| Error::Invalid(format!("{} has no parent", target.display())))?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let temp = dir.join(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()));
    let mut f = fs::File::create(&temp).map_err(|e| Error::io(&temp, e))?;
    f.write_all(bytes)
        .and_then(|_| f.sync_all())
        .map_err(|e| Error::io(&temp, e))?;
    Ok(PendingWrite {
        temp,
        target: target.to_path_buf(),
    })
}

/// Atomic replace: temp file in the same directory, then rename.
pub fn write_atomic(target: &Path, bytes: &[u8]) -> Result<()> {
    let pending = stage_bytes(target, bytes)?;
    let temp = pending.temp.clone();
    pending.commit().inspect_err(|_| {
        let _ = fs::remove_file(temp);
    })
}

impl StoreRoot {
    pub fn new(repo_root: impl Into<PathBuf>) -> Self {
        StoreRoot {
            repo_root: repo_root.into(),
        }
    }

    pub fn repo_root(&self) -> &Path {
        &self.repo_root
    }

    pub fn store_dir(&self) -> PathBuf {
        self.repo_root.join(STORE_DIR)
    }

    /// Absolute path of a repo-relative source file.
    pub fn source_abs(&self, source: &str) -> Result<PathBuf> {
        Ok(self.repo_root.join(normalize_repo_path(source)?))
    }

    pub fn sidecar_abs(&self, source: &str) -> Result<PathBuf> {
        Ok(self.repo_root.join(sidecar_path(source)?))
    }

    /// Reads and decodes a source file.
    pub fn read_source(&self, source: &str) -> Result<String> {
        let path = self.source_abs(source)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        String::from_utf8(bytes)
            .map_err(|_| Error::Invalid(format!("{} is not valid UTF-8", path.display())))
    }

    /// Writes the canonical sidecar to a temp file without committing it.
    pub fn stage(&self, file: &AnnotationFile) -> Result<PendingWrite> {
        file.check_structure()?;
        let target = self.sidecar_abs(&file.document.path)?;
        stage_bytes(&target, to_canonical_json(file)?.as_bytes())
    }

    pub fn save(&self, file: &AnnotationFile) -> Result<()> {
        let target = self.sidecar_abs(&file.document.path)?;
        let bytes = to_canonical_json(file)?;
        if fs::read(&target).is_ok_and(|old| old == bytes.as_bytes()) {
            return Ok(());
        }
        self.stage(file)?.commit()
    }

    /// Loads the sidecar for `source`; `Ok(None)` when there is none.
    pub fn load(&self, source: &str) -> Result<Option<AnnotationFile>> {
        let path = self.sidecar_abs(source)?;
        match fs::read(&path) {
            Ok(bytes) => from_json(&bytes, &path).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    /// Deletes the sidecar for `source`, if present.
    pub fn delete(&self, source: &str) -> Result<()> {
        let path = self.sidecar_abs(source)?;
        match fs::remove_file(&path) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(&path, e)),
            _ => Ok(()),
        }
    }

    pub fn check(&self, source: &str) -> Result<Freshness> {
        let Some(file) = self.load(source)? else {
            return Ok(Freshness::Absent);
        };
        let path = self.source_abs(source)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Ok(if file.document.digest == digest_bytes(&bytes) {
            Freshness::Fresh
        } else {
            Freshness::Stale
        })
    }

    /// Source paths of every sidecar in the store, sorted.
    pub fn list_sources(&self) -> Result<Vec<String>> {
        let dir = self.store_dir();
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for entry in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(|e| {
                let path = e.path().unwrap_or(&dir).to_path_buf();
                Error::io(path, e.into())
            })?;
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(&dir).expect("walk stays under dir");
            let rel = rel.to_string_lossy().replace('\\', "/");
            if let Some(source) = rel.strip_suffix(SIDECAR_SUFFIX) {
                out.push(source.to_string());
            }
        }
        out.sort();
        Ok(out)
    }
}
