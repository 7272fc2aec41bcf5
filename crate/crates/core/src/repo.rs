//! File-level annotation operations shared by the CLI and the C ABI.

use serde::Serialize;
use serde_json::Value;
use uuid::Uuid;

use crate::config::Config;
use crate::error::{Error, Result};
use crate::model::{normalize_repo_path, Anchor, AnnotationFile, DocumentRef, TagRecord};
use crate::provider::CompletionProvider;
use crate::reanchor::{
    self, confirm, is_detached, rebase, ReattachConfig, ReattachProposal, Reattachment,
};
use crate::store::{Freshness, StoreRoot};

/// How a caller names a range of a document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnchorSpec {
    Range { start: usize, end: usize },
    /// A literal that must occur exactly once.
    Match(String),
}

impl AnchorSpec {
    pub fn resolve(&self, text: &str) -> Result<Anchor> {
        match self {
            AnchorSpec::Range { start, end } => {
                let anchor = Anchor::new(*start, *end);
                let len = text.chars().count();
                if start > end || *end > len {
                    return Err(Error::OutOfBounds { anchor, len });
                }
                Ok(anchor)
            }
            AnchorSpec::Match(literal) => {
                if literal.is_empty() {
                    return Err(Error::Invalid("--match literal is empty".into()));
                }
                let mut hits = text.match_indices(literal.as_str());
                let first = hits.next();
                // overlapping repeats count as ambiguous too
                let overlapping = first.is_some_and(|(b, m)| {
                    let next = b + m.chars().next().map_or(1, char::len_utf8);
                    text[next..].contains(literal.as_str())
                });
                match first {
                    None => Err(Error::Ambiguous(format!("{literal:?} does not occur"))),
                    Some(_) if overlapping || hits.next().is_some() => {
                        Err(Error::Ambiguous(format!("{literal:?} occurs more than once")))
                    }
                    Some((byte, _)) => {
                        let start = text[..byte].chars().count();
                        Ok(Anchor::new(start, start + literal.chars().count()))
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReattachMode {
    Exact,
    #[default]
    Fuzzy,
    Semantic,
}

impl std::str::FromStr for ReattachMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(ReattachMode::Exact),
            "fuzzy" => Ok(ReattachMode::Fuzzy),
            "semantic" => Ok(ReattachMode::Semantic),
            other => Err(Error::Invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FileCheck {
    pub path: String,
    pub state: Freshness,
    pub orphaned: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct OrphanReport {
    pub tag_id: Uuid,
    pub previous: Anchor,
    pub best: Option<Anchor>,
    pub best_score: Option<f64>,
}

/// Proposals for every detached tag of one file, not yet applied.
#[derive(Debug, Clone)]
pub struct ReattachPlan {
    pub path: String,
    pub text: String,
    pub file: AnnotationFile,
    pub proposals: Vec<ReattachProposal>,
    pub orphaned: Vec<OrphanReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Repository {
    root: StoreRoot,
    config: Config,
}

impl Repository {
    pub fn open(repo_root: impl Into<std::path::PathBuf>) -> Result<Self> {
        let root = StoreRoot::new(repo_root);
        let config = Config::load(&root)?;
        Ok(Repository { root, config })
    }

    pub fn root(&self) -> &StoreRoot {
        &self.root
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    /// Creates the store directory and a default config if missing.
    pub fn init(&self) -> Result<bool> {
        let path = Config::config_path(&self.root);
        if path.exists() {
            return Ok(false);
        }
        let mut body = serde_json::to_string_pretty(&Config::default()).expect("plain struct");
        body.push('\n');
        crate::store::write_atomic(&path, body.as_bytes())?;
        Ok(true)
    }

    pub fn load(&self, path: &str) -> Result<Option<AnnotationFile>> {
        self.root.load(path)
    }

    fn load_required(&self, path: &str) -> Result<AnnotationFile> {
        self.root
            .load(path)?
            .ok_or_else(|| Error::NotFound(format!("no annotations for {path}")))
    }

    fn require_fresh(&self, path: &str) -> Result<()> {
        match self.root.check(path)? {
            Freshness::Stale => Err(Error::StaleDocument {
                path: path.to_string(),
            }),
            _ => Ok(()),
        }
    }

    pub fn add(&self, path: &str, spec: &AnchorSpec, annotation_type: &str, data: Value) -> Result<TagRecord> {
        let path = normalize_repo_path(path)?;
        self.require_fresh(&path)?;
        let text = self.root.read_source(&path)?;
        let anchor = spec.resolve(&text)?;
        let tag = TagRecord::new(&text, anchor, annotation_type, data)?;
        let mut file = match self.root.load(&path)? {
            Some(f) => f,
            None => AnnotationFile::new(DocumentRef::new(path.as_str(), &text)?),
        };
        file.annotations.push(tag.clone());
        self.root.save(&file)?;
        Ok(tag)
    }

    /// Moves a tag to a caller-chosen range of the current text.
    ///
    /// Works on stale files too: this is the manual recovery path, and the
    /// sidecar is moved onto the current text in the process.
    pub fn move_tag(&self, path: &str, id: &str, spec: &AnchorSpec) -> Result<TagRecord> {
        let file = self.load_required(path)?;
        let id = find_tag(&file, id)?;
        let text = self.root.read_source(path)?;
        let anchor = spec.resolve(&text)?;
        let proposal = ReattachProposal::manual(file.find(id).expect("found"), anchor, &text)?;
        let file = confirm(&proposal, &file, &text)?;
        self.root.save(&file)?;
        Ok(file.find(id).expect("kept").clone())
    }

    pub fn remove(&self, path: &str, id: &str) -> Result<TagRecord> {
        let mut file = self.load_required(path)?;
        let id = find_tag(&file, id)?;
        let removed = file.remove(id).expect("found");
        self.root.save(&file)?;
        Ok(removed)
    }

    pub fn show(&self, path: &str, id: &str) -> Result<TagRecord> {
        let file = self.load_required(path)?;
        let id = find_tag(&file, id)?;
        Ok(file.find(id).expect("found").clone())
    }

    pub fn check(&self, path: &str) -> Result<FileCheck> {
        let state = self.root.check(path)?;
        let orphaned = self.root.load(path)?.map_or(0, |f| f.orphan_count());
        Ok(FileCheck {
            path: path.to_string(),
            state,
            orphaned,
        })
    }

    /// Every file that has a sidecar.
    pub fn annotated_paths(&self) -> Result<Vec<String>> {
        self.root.list_sources()
    }

    /// Computes proposals for every tag that no longer matches the current text.
    pub fn plan_reattach(
        &self,
        path: &str,
        mode: ReattachMode,
        config: &ReattachConfig,
        provider: Option<&dyn CompletionProvider>,
    ) -> Result<ReattachPlan> {
        config.validate()?;
        let file = self.load_required(path)?;
        let text = self.root.read_source(path)?;
        let chars: Vec<char> = text.chars().collect();
        let mut plan = ReattachPlan {
            path: path.to_string(),
            text: String::new(),
            file: file.clone(),
            proposals: Vec::new(),
            orphaned: Vec::new(),
            warnings: Vec::new(),
        };
        let mut mode = mode;
        if mode == ReattachMode::Semantic && provider.is_none() {
            plan.warnings
                .push("no completion provider configured; using fuzzy matching".into());
            mode = ReattachMode::Fuzzy;
        }
        for tag in file.annotations.iter().filter(|t| is_detached(t, &chars)) {
            if tag.context.anchor_text.is_empty() {
                plan.orphaned.push(OrphanReport {
                    tag_id: tag.id,
                    previous: tag.anchor,
                    best: None,
                    best_score: None,
                });
                continue;
            }
            let result = match (mode, provider) {
                (ReattachMode::Exact, _) => reanchor::reattach_exact(tag, &text, config)?,
                (ReattachMode::Semantic, Some(p)) => {
                    let out = reanchor::semantic_reattach(tag, &text, p, config)?;
                    if let Some(e) = out.provider_error {
                        plan.warnings.push(format!("tag {}: {e}; used fuzzy matching", tag.id));
                    }
                    out.result
                }
                _ => reanchor::reattach(tag, &text, config)?,
            };
            match result {
                Reattachment::Proposal(p) => plan.proposals.push(p),
                Reattachment::Orphaned { tag_id, best } => plan.orphaned.push(OrphanReport {
                    tag_id,
                    previous: tag.anchor,
                    best: best.map(|b| b.0),
                    best_score: best.map(|b| b.1),
                }),
            }
        }
        plan.text = text;
        Ok(plan)
    }

    /// Applies the accepted proposals of `plan` and saves the sidecar.
    ///
    /// Tags left without an accepted proposal are recorded as orphaned.
    pub fn apply_plan(&self, plan: &ReattachPlan, accepted: &[Uuid]) -> Result<AnnotationFile> {
        let current = self.root.read_source(&plan.path)?;
        if current != plan.text {
            return Err(Error::StaleDocument {
                path: plan.path.clone(),
            });
        }
        let mut file = rebase(&plan.file, &plan.text);
        for p in plan.proposals.iter().filter(|p| accepted.contains(&p.tag_id)) {
            let mut p = p.clone();
            p.accepted = true;
            file = confirm(&p, &file, &plan.text)?;
        }
        self.root.save(&file)?;
        Ok(file)
    }
}

/// Resolves a full id or a unique prefix of one.
pub fn find_tag(file: &AnnotationFile, id: &str) -> Result<Uuid> {
    if let Ok(uuid) = Uuid::parse_str(id) {
        return file
            .find(uuid)
            .map(|t| t.id)
            .ok_or_else(|| Error::NotFound(format!("tag {id}")));
    }
    let needle = id.to_ascii_lowercase();
    let mut hits = file
        .annotations
        .iter()
        .filter(|t| !needle.is_empty() && t.id_string().starts_with(&needle));
    match (hits.next(), hits.next()) {
        (Some(t), None) => Ok(t.id),
        (None, _) => Err(Error::NotFound(format!("tag {id}"))),
        (Some(_), Some(_)) => Err(Error::Ambiguous(format!("tag prefix {id} is ambiguous"))),
    }
}
