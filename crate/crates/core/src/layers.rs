//! `add-layer` annotations and the tool that weaves them into an
//! alternate copy of the repository.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::model::{TagRecord, TagStatus};
use crate::store::{Freshness, StoreRoot, STORE_DIR};

pub const ADD_LAYER_TYPE: &str = "add-layer";

/// Payload of an `add-layer` tag: `{"layerName": ..., "insertText": ...}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInsertion {
    pub layer_name: String,
    pub insert_text: String,
}

impl LayerInsertion {
    pub fn from_tag(tag: &TagRecord) -> std::result::Result<Self, String> {
        if tag.annotation_type != ADD_LAYER_TYPE {
            return Err(format!("tag type is {:?}, not {ADD_LAYER_TYPE}", tag.annotation_type));
        }
        let Value::Object(map) = &tag.data else {
            return Err("data is not an object".into());
        };
        let field = |name: &str| match map.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("{name} is not a string")),
            None => Err(format!("missing {name}")),
        };
        let layer_name = field("layerName")?;
        let insert_text = field("insertText")?;
        if layer_name.is_empty() {
            return Err("layerName is empty".into());
        }
        if let Some(extra) = map.keys().find(|k| *k != "layerName" && *k != "insertText") {
            return Err(format!("unexpected field {extra}"));
        }
        Ok(LayerInsertion {
            layer_name,
            insert_text,
        })
    }

    pub fn to_data(&self) -> Value {
        serde_json::json!({"layerName": self.layer_name, "insertText": self.insert_text})
    }
}

/// Layers to weave, in command-line order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LayerSelection {
    active: Vec<String>,
}

impl LayerSelection {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let active: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &active {
            if name.is_empty() {
                return Err(Error::Invalid("empty layer name".into()));
            }
            if !seen.insert(name) {
                return Err(Error::Invalid(format!("layer {name} selected twice")));
            }
        }
        Ok(LayerSelection { active })
    }

    /// Parses `debug,perf`; an empty string selects nothing.
    pub fn parse(csv: &str) -> Result<Self> {
        Self::new(csv.split(',').map(str::trim).filter(|s| !s.is_empty()))
    }

    pub fn names(&self) -> &[String] {
        &self.active
    }

    fn rank(&self, layer: &str) -> Option<usize> {
        self.active.iter().position(|n| n == layer)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LayerEntry {
    pub source: String,
    pub offset: usize,
    pub insert_text: String,
    pub tag_id: Uuid,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LayerCollection {
    pub layers: BTreeMap<String, Vec<LayerEntry>>,
    pub warnings: Vec<String>,
}

/// Reads every sidecar and gathers attached `add-layer` tags by layer name.
pub fn collect_layers(root: &StoreRoot) -> Result<LayerCollection> {
    let mut out = LayerCollection::default();
    for source in root.list_sources()? {
        let Some(file) = root.load(&source)? else {
            continue;
        };
        for tag in file.annotations.iter().filter(|t| t.annotation_type == ADD_LAYER_TYPE) {
            if tag.status != TagStatus::Attached {
                out.warnings
                    .push(format!("{source}: skipping {} add-layer tag {}", tag.status, tag.id));
                continue;
            }
            match LayerInsertion::from_tag(tag) {
                Ok(ins) => out.layers.entry(ins.layer_name).or_default().push(LayerEntry {
                    source: source.clone(),
                    offset: tag.anchor.start.0,
                    insert_text: ins.insert_text,
                    tag_id: tag.id,
                }),
                Err(why) => out
                    .warnings
                    .push(format!("{source}: malformed add-layer tag {}: {why}", tag.id)),
            }
        }
    }
    for entries in out.layers.values_mut() {
        entries.sort_by(|a, b| {
            (&a.source, a.offset, a.tag_id).cmp(&(&b.source, b.offset, b.tag_id))
        });
    }
    Ok(out)
}

/// One splice in the output tree. Ranges are scalar offsets in the output file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpliceRecord {
    pub path: String,
    pub layer: String,
    pub tag_id: Uuid,
    pub source_offset: usize,
    pub output_start: usize,
    pub output_end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ApplyReport {
    pub layers: Vec<String>,
    pub files_written: usize,
    pub insertions_applied: usize,
    pub splices: Vec<SpliceRecord>,
    pub warnings: Vec<String>,
}

struct Pending<'a> {
    rank: usize,
    layer: &'a str,
    entry: &'a LayerEntry,
}

/// Splices `insertions` into `text` at their original offsets in one pass.
fn splice(text: &str, path: &str, mut insertions: Vec<Pending<'_>>) -> Result<(String, Vec<SpliceRecord>)> {
    insertions.sort_by(|a, b| {
        (a.entry.offset, a.rank, a.entry.tag_id).cmp(&(b.entry.offset, b.rank, b.entry.tag_id))
    });
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut records = Vec::with_capacity(insertions.len());
    let mut copied = 0;
    let mut shift = 0;
    for ins in insertions {
        let at = ins.entry.offset;
        if at > chars.len() {
            return Err(Error::OutOfBounds {
                anchor: crate::model::Anchor::new(at, at),
                len: chars.len(),
            });
        }
        out.extend(&chars[copied..at]);
        copied = at;
        let len = ins.entry.insert_text.chars().count();
        out.push_str(&ins.entry.insert_text);
        records.push(SpliceRecord {
            path: path.to_string(),
            layer: ins.layer.to_string(),
            tag_id: ins.entry.tag_id,
            source_offset: at,
            output_start: at + shift,
            output_end: at + shift + len,
        });
        shift += len;
    }
    out.extend(&chars[copied..]);
    Ok((out, records))
}

fn is_empty_dir(dir: &Path) -> Result<bool> {
    match fs::read_dir(dir) {
        Ok(mut it) => Ok(it.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(Error::io(dir, e)),
    }
}

/// Writes a copy of the repository with the selected layers woven in.
///
/// Neither source files nor sidecars are modified. Every file that receives
/// an insertion must be fresh; a stale one aborts before anything is written.
pub fn apply_layers(root: &StoreRoot, selection: &LayerSelection, out_dir: &Path) -> Result<ApplyReport> {
    if !is_empty_dir(out_dir)? {
        return Err(Error::Invalid(format!(
            "output directory {} is not empty",
            out_dir.display()
        )));
    }
    let collection = collect_layers(root)?;
    let mut by_file: BTreeMap<&str, Vec<Pending<'_>>> = BTreeMap::new();
    for (layer, entries) in &collection.layers {
        let Some(rank) = selection.rank(layer) else {
            continue;
        };
        for entry in entries {
            by_file.entry(entry.source.as_str()).or_default().push(Pending {
                rank,
                layer,
                entry,
            });
        }
    }
    let mut warnings = collection.warnings.clone();
    for name in selection.names() {
        if !collection.layers.contains_key(name) {
            warnings.push(format!("layer {name} has no insertions"));
        }
    }

    let mut woven: BTreeMap<String, String> = BTreeMap::new();
    let mut splices = Vec::new();
    for (source, insertions) in by_file {
        match root.check(source)? {
            Freshness::Fresh => {}
            _ => {
                return Err(Error::StaleDocument {
                    path: source.to_string(),
                })
            }
        }
        let text = root.read_source(source)?;
        let (out, records) = splice(&text, source, insertions)?;
        splices.extend(records);
        woven.insert(source.to_string(), out);
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let repo = fs::canonicalize(root.repo_root()).map_err(|e| Error::io(root.repo_root(), e))?;
    let out_abs = fs::canonicalize(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files_written = 0;
    let walker = walkdir::WalkDir::new(&repo)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| {
            let p = e.path();
            p != out_abs
                && !(e.depth() == 1 && (e.file_name() == STORE_DIR || e.file_name() == ".git"))
        });
    for entry in walker {
        let entry = entry.map_err(|e| Error::io(repo.clone(), e.into()))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(&repo).expect("walk stays under repo");
        let rel_str = rel.to_string_lossy().replace('\\', "/");
        let dest: PathBuf = out_abs.join(rel);
        if let Some(parent) = dest.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        match woven.get(&rel_str) {
            Some(text) => fs::write(&dest, text).map_err(|e| Error::io(&dest, e))?,
            None => {
                fs::copy(entry.path(), &dest).map_err(|e| Error::io(&dest, e))?;
            }
        }
        files_written += 1;
    }

    Ok(ApplyReport {
        layers: selection.names().to_vec(),
        files_written,
        insertions_applied: splices.len(),
        splices,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Anchor, AnnotationFile, DocumentRef};
    use serde_json::json;

    fn layer_tag(text: &str, at: usize, layer: &str, insert: &str) -> TagRecord {
        TagRecord::new(
            text,
            Anchor::new(at, at),
            ADD_LAYER_TYPE,
            json!({"layerName": layer, "insertText": insert}),
        )
        .unwrap()
    }

    #[test]
    fn parse_insertion() {
        let t = layer_tag("abc", 1, "debug", "x");
        assert_eq!(
            LayerInsertion::from_tag(&t).unwrap(),
            LayerInsertion {
                layer_name: "debug".into(),
                insert_text: "x".into()
            }
        );
        let mut bad = t.clone();
        bad.data = json!({"layerName": "debug"});
        assert!(LayerInsertion::from_tag(&bad).is_err());
        bad.data = json!({"layerName": "", "insertText": ""});
        assert!(LayerInsertion::from_tag(&bad).is_err());
        bad.data = json!({"layerName": "a", "insertText": "", "other": 1});
        assert!(LayerInsertion::from_tag(&bad).is_err());
    }

    #[test]
    fn selection_rules() {
        assert_eq!(LayerSelection::parse("").unwrap().names().len(), 0);
        assert_eq!(LayerSelection::parse("debug, perf").unwrap().names(), ["debug", "perf"]);
        assert!(LayerSelection::parse("a,a").is_err());
    }

    #[test]
    fn splice_uses_original_offsets() {
        let a = LayerEntry {
            source: "f".into(),
            offset: 5,
            insert_text: "log();\n".into(),
            tag_id: Uuid::from_u128(2),
        };
        let b = LayerEntry {
            source: "f".into(),
            offset: 0,
            insert_text: "// top\n".into(),
            tag_id: Uuid::from_u128(1),
        };
        let (out, recs) = splice(
            "a();\nb();\n",
            "f",
            vec![
                Pending { rank: 0, layer: "debug", entry: &a },
                Pending { rank: 0, layer: "debug", entry: &b },
            ],
        )
        .unwrap();
        assert_eq!(out, "// top\na();\nlog();\nb();\n");
        assert_eq!(recs[1].output_start, 12);
        assert_eq!(recs[1].output_end, 19);
        let chars: Vec<char> = out.chars().collect();
        let got: String = chars[recs[1].output_start..recs[1].output_end].iter().collect();
        assert_eq!(got, "log();\n");
    }

    #[test]
    fn orphaned_and_malformed_tags_are_warned() {
        let dir = tempfile::tempdir().unwrap();
        let root = StoreRoot::new(dir.path());
        let text = "a();\nb();\n";
        fs::write(dir.path().join("a.c"), text).unwrap();
        let mut f = AnnotationFile::new(DocumentRef::new("a.c", text).unwrap());
        let mut orphan = layer_tag(text, 5, "debug", "x");
        orphan.status = TagStatus::Orphaned;
        let mut broken = layer_tag(text, 5, "debug", "x");
        broken.data = json!({"insertText": "x"});
        f.annotations = vec![layer_tag(text, 5, "debug", "log();\n"), orphan, broken];
        root.save(&f).unwrap();
        let c = collect_layers(&root).unwrap();
        assert_eq!(c.layers["debug"].len(), 1);
        assert_eq!(c.warnings.len(), 2);
    }

    #[test]
    fn output_dir_must_be_empty() {
        let dir = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        fs::write(out.path().join("x"), "").unwrap();
        let root = StoreRoot::new(dir.path());
        assert!(apply_layers(&root, &LayerSelection::default(), out.path()).is_err());
    }

    #[test]
    fn output_inside_repo_is_not_copied_into_itself() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.c"), "x").unwrap();
        let root = StoreRoot::new(dir.path());
        let out = dir.path().join("woven");
        let report = apply_layers(&root, &LayerSelection::default(), &out).unwrap();
        assert_eq!(report.files_written, 1);
        assert_eq!(fs::read_to_string(out.join("a.c")).unwrap(), "x");
        assert!(!out.join("woven").exists());
    }
}
