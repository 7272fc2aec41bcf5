//! Re-attaching annotations after the document changed outside our view.
//!
//! Three strategies, tried in order of trust:
//!
//! 1. **exact**: the cached anchor text still occurs verbatim. The
//!    occurrence nearest the old start wins.
//! 2. **fuzzy**: every window whose length is within `max_window_slack` of
//!    the cached anchor text is scored against the cached anchor text,
//!    prefix and suffix. The best window is proposed if it clears the
//!    threshold.
//! 3. **semantic**: a [`CompletionProvider`] is asked for the new text of the
//!    region; its answer is never used as an offset, only located with the
//!    same exact/fuzzy search.
//!
//! Nothing here mutates a file except [`confirm`]; proposals are staged
//! until a user accepts them.

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::error::{Error, Result};
use crate::model::{
    digest_bytes, Anchor, AnchorContext, AnnotationFile, TagRecord, TagStatus, CONTEXT_WINDOW,
};
use crate::provider::{CompletionProvider, CompletionRequest, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ReattachConfig {
    pub weight_anchor: f64,
    pub weight_prefix: f64,
    pub weight_suffix: f64,
    pub threshold: f64,
    pub max_window_slack: usize,
}

impl Default for ReattachConfig {
    fn default() -> Self {
        ReattachConfig {
            weight_anchor: 0.6,
            weight_prefix: 0.2,
            weight_suffix: 0.2,
            threshold: 0.65,
            max_window_slack: 8,
        }
    }
}

impl ReattachConfig {
    pub fn validate(&self) -> Result<()> {
        let sum = self.weight_anchor + self.weight_prefix + self.weight_suffix;
        let weights = [self.weight_anchor, self.weight_prefix, self.weight_suffix];
        if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::Invalid(format!(
                "reattach weights must be fractions summing to 1, got {sum}"
            )));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(Error::Invalid(format!(
                "threshold must be in (0, 1], got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exact,
    Fuzzy,
    Semantic,
}

/// A staged candidate anchor awaiting confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReattachProposal {
    pub tag_id: Uuid,
    pub previous: Anchor,
    pub candidate: Anchor,
    pub candidate_text: String,
    pub score: f64,
    pub strategy: Strategy,
    pub accepted: bool,
    /// Digest of the document the candidate was computed against.
    pub document_digest: String,
}

impl ReattachProposal {
    /// A user-chosen anchor, for moving an annotation by hand.
    pub fn manual(tag: &TagRecord, candidate: Anchor, new_document: &str) -> Result<Self> {
        let chars: Vec<char> = new_document.chars().collect();
        if !candidate.fits(chars.len()) {
            return Err(Error::OutOfBounds {
                anchor: candidate,
                len: chars.len(),
            });
        }
        Ok(ReattachProposal {
            tag_id: tag.id,
            previous: tag.anchor,
            candidate,
            candidate_text: chars[candidate.start.0..candidate.end.0].iter().collect(),
            score: 1.0,
            strategy: Strategy::Fuzzy,
            accepted: false,
            document_digest: digest_bytes(new_document.as_bytes()),
        })
    }
}

/// Outcome of a re-anchoring attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum Reattachment {
    Proposal(ReattachProposal),
    /// No candidate cleared the threshold. `best` is the top-scoring window, if any.
    Orphaned {
        tag_id: Uuid,
        best: Option<(Anchor, f64)>,
    },
}

impl Reattachment {
    pub fn proposal(&self) -> Option<&ReattachProposal> {
        match self {
            Reattachment::Proposal(p) => Some(p),
            Reattachment::Orphaned { .. } => None,
        }
    }

    pub fn into_proposal(self) -> Option<ReattachProposal> {
        match self {
            Reattachment::Proposal(p) => Some(p),
            Reattachment::Orphaned { .. } => None,
        }
    }
}

/// Levenshtein distance over scalar values, two-row DP.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    if b.is_empty() {
        return a.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = diag + usize::from(ca != cb);
            diag = row[j + 1];
            row[j + 1] = sub.min(diag + 1).min(row[j] + 1);
        }
    }
    row[b.len()]
}

fn ratio(distance: usize, a_len: usize, b_len: usize) -> f64 {
    let longest = a_len.max(b_len);
    if longest == 0 {
        1.0
    } else {
        1.0 - distance as f64 / longest as f64
    }
}

fn similarity_chars(a: &[char], b: &[char]) -> f64 {
    ratio(levenshtein(a, b), a.len(), b.len())
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)`, or 1.0 when both are empty.
pub fn similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    similarity_chars(&a, &b)
}

fn combine(config: &ReattachConfig, anchor: f64, prefix: f64, suffix: f64) -> f64 {
    config.weight_anchor * anchor + config.weight_prefix * prefix + config.weight_suffix * suffix
}

/// Weighted similarity of a candidate window and its surroundings to the cached context.
pub fn score_candidate(
    context: &AnchorContext,
    document: &str,
    candidate: Anchor,
    config: &ReattachConfig,
) -> Result<f64> {
    let doc: Vec<char> = document.chars().collect();
    if !candidate.fits(doc.len()) {
        return Err(Error::OutOfBounds {
            anchor: candidate,
            len: doc.len(),
        });
    }
    let cached = CachedContext::new(context);
    let (s, e) = (candidate.start.0, candidate.end.0);
    let anchor = similarity_chars(&cached.anchor, &doc[s..e]);
    let prefix = similarity_chars(&cached.prefix, &doc[s.saturating_sub(CONTEXT_WINDOW)..s]);
    let suffix = similarity_chars(&cached.suffix, &doc[e..(e + CONTEXT_WINDOW).min(doc.len())]);
    Ok(combine(config, anchor, prefix, suffix))
}

struct CachedContext {
    anchor: Vec<char>,
    prefix: Vec<char>,
    suffix: Vec<char>,
}

impl CachedContext {
    fn new(context: &AnchorContext) -> Self {
        CachedContext {
            anchor: context.anchor_text.chars().collect(),
            prefix: context.prefix.chars().collect(),
            suffix: context.suffix.chars().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    start: usize,
    len: usize,
    score: f64,
}

/// Ordering shared by both search phases: higher score, then closer to the
/// old start, then earlier start, then shorter window.
fn beats(a: &Scored, b: &Scored, old_start: usize) -> bool {
    if a.score != b.score {
        return a.score > b.score;
    }
    let key = |c: &Scored| (c.start.abs_diff(old_start), c.start, c.len);
    key(a) < key(b)
}

/// Exact occurrences of `needle`, the one closest to `old_start` first.
fn exact_match(doc: &[char], needle: &[char], old_start: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > doc.len() {
        return None;
    }
    doc.windows(needle.len())
        .enumerate()
        .filter(|(_, w)| *w == needle)
        .map(|(i, _)| i)
        .min_by_key(|&i| (i.abs_diff(old_start), i))
}

/// Best window over all starts and all lengths in the slack band.
///
/// Prefix similarity depends only on the start and suffix similarity only
/// on the end, so both are computed once per offset. Anchor similarity for
/// every length at a fixed start comes out of a single DP pass that grows
/// the window one scalar at a time.
fn fuzzy_search(
    doc: &[char],
    cached: &CachedContext,
    old_start: usize,
    config: &ReattachConfig,
) -> Option<Scored> {
    let n = doc.len();
    let m = cached.anchor.len();
    let min_len = m.saturating_sub(config.max_window_slack).max(1);
    let max_len = m + config.max_window_slack;
    if min_len > n {
        return None;
    }

    let prefix_sim: Vec<f64> = (0..=n)
        .map(|s| similarity_chars(&cached.prefix, &doc[s.saturating_sub(CONTEXT_WINDOW)..s]))
        .collect();
    let suffix_sim: Vec<f64> = (0..=n)
        .map(|e| similarity_chars(&cached.suffix, &doc[e..(e + CONTEXT_WINDOW).min(n)]))
        .collect();

    let mut best: Option<Scored> = None;
    let mut prev: Vec<usize> = vec![0; m + 1];
    let mut cur: Vec<usize> = vec![0; m + 1];
    for start in 0..=n - min_len {
        // prev[j] = distance(anchor[..j], window of current length)
        for (j, v) in prev.iter_mut().enumerate() {
            *v = j;
        }
        let longest = max_len.min(n - start);
        for len in 1..=longest {
            let c = doc[start + len - 1];
            cur[0] = len;
            for j in 1..=m {
                let sub = prev[j - 1] + usize::from(cached.anchor[j - 1] != c);
                cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            }
            std::mem::swap(&mut prev, &mut cur);
            if len < min_len {
                continue;
            }
            let anchor = ratio(prev[m], m, len);
            let cand = Scored {
                start,
                len,
                score: combine(config, anchor, prefix_sim[start], suffix_sim[start + len]),
            };
            if best.as_ref().is_none_or(|b| beats(&cand, b, old_start)) {
                best = Some(cand);
            }
        }
    }
    best
}

/// Exact phase, then fuzzy phase, for an arbitrary target text.
fn locate(
    doc: &[char],
    cached: &CachedContext,
    old_start: usize,
    config: &ReattachConfig,
    fuzzy: bool,
) -> (Option<(Scored, bool)>, Option<Scored>) {
    if let Some(start) = exact_match(doc, &cached.anchor, old_start) {
        let hit = Scored {
            start,
            len: cached.anchor.len(),
            score: 1.0,
        };
        return (Some((hit, true)), Some(hit));
    }
    if !fuzzy {
        return (None, None);
    }
    let best = fuzzy_search(doc, cached, old_start, config);
    let accepted = best.filter(|b| b.score >= config.threshold).map(|b| (b, false));
    (accepted, best)
}

fn build(
    tag: &TagRecord,
    doc: &[char],
    digest: &str,
    hit: Scored,
    strategy: Strategy,
) -> ReattachProposal {
    let candidate = Anchor::new(hit.start, hit.start + hit.len);
    ReattachProposal {
        tag_id: tag.id,
        previous: tag.anchor,
        candidate,
        candidate_text: doc[hit.start..hit.start + hit.len].iter().collect(),
        score: hit.score,
        strategy,
        accepted: false,
        document_digest: digest.to_string(),
    }
}

fn require_anchor_text(tag: &TagRecord) -> Result<()> {
    if tag.context.anchor_text.is_empty() {
        return Err(Error::Precondition(format!(
            "tag {} has no cached anchor text to match",
            tag.id
        )));
    }
    Ok(())
}

fn reattach_inner(
    tag: &TagRecord,
    new_document: &str,
    config: &ReattachConfig,
    fuzzy: bool,
) -> Result<Reattachment> {
    require_anchor_text(tag)?;
    config.validate()?;
    let doc: Vec<char> = new_document.chars().collect();
    let cached = CachedContext::new(&tag.context);
    let digest = digest_bytes(new_document.as_bytes());
    let (hit, best) = locate(&doc, &cached, tag.anchor.start.0, config, fuzzy);
    Ok(match hit {
        Some((hit, exact)) => {
            let strategy = if exact { Strategy::Exact } else { Strategy::Fuzzy };
            Reattachment::Proposal(build(tag, &doc, &digest, hit, strategy))
        }
        None => Reattachment::Orphaned {
            tag_id: tag.id,
            best: best.map(|b| (Anchor::new(b.start, b.start + b.len), b.score)),
        },
    })
}

/// Exact phase, falling back to the fuzzy window search.
pub fn reattach(tag: &TagRecord, new_document: &str, config: &ReattachConfig) -> Result<Reattachment> {
    reattach_inner(tag, new_document, config, true)
}

/// Exact phase only.
pub fn reattach_exact(
    tag: &TagRecord,
    new_document: &str,
    config: &ReattachConfig,
) -> Result<Reattachment> {
    reattach_inner(tag, new_document, config, false)
}

pub const SEMANTIC_INSTRUCTIONS: &str = "The document below was edited after an annotation was \
attached to it. The annotated text and the text just before and after it, as they were when the \
annotation was attached, are given as the anchor context. Reply with the text of the region of \
the new document that corresponds to the annotated text, copied exactly, and nothing else.";

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticOutcome {
    pub result: Reattachment,
    /// Set when the provider failed and the deterministic path was used.
    pub provider_error: Option<ProviderError>,
    pub fell_back: bool,
}

/// Asks `provider` for the region's new text, then locates that text in
/// the document. Falls back to [`reattach`] on provider failure, empty
/// output, or a location score under the threshold.
pub fn semantic_reattach(
    tag: &TagRecord,
    new_document: &str,
    provider: &dyn CompletionProvider,
    config: &ReattachConfig,
) -> Result<SemanticOutcome> {
    require_anchor_text(tag)?;
    config.validate()?;
    let request = CompletionRequest {
        instructions: SEMANTIC_INSTRUCTIONS.to_string(),
        document: new_document.to_string(),
        anchor_context: tag.context.clone(),
    };
    let mut provider_error = None;
    match provider.complete(&request) {
        Ok(text) if !text.is_empty() => {
            let doc: Vec<char> = new_document.chars().collect();
            let cached = CachedContext {
                anchor: text.chars().collect(),
                prefix: tag.context.prefix.chars().collect(),
                suffix: tag.context.suffix.chars().collect(),
            };
            if let (Some((hit, _)), _) = locate(&doc, &cached, tag.anchor.start.0, config, true) {
                let digest = digest_bytes(new_document.as_bytes());
                return Ok(SemanticOutcome {
                    result: Reattachment::Proposal(build(tag, &doc, &digest, hit, Strategy::Semantic)),
                    provider_error: None,
                    fell_back: false,
                });
            }
        }
        Ok(_) => {}
        Err(e) => provider_error = Some(e),
    }
    Ok(SemanticOutcome {
        result: reattach(tag, new_document, config)?,
        provider_error,
        fell_back: true,
    })
}

/// True when the tag no longer describes `doc` at its stored offsets.
pub fn is_detached(tag: &TagRecord, doc: &[char]) -> bool {
    if tag.status != TagStatus::Attached || !tag.anchor.fits(doc.len()) {
        return true;
    }
    let (s, e) = (tag.anchor.start.0, tag.anchor.end.0);
    doc[s..e].iter().copied().ne(tag.context.anchor_text.chars())
}

/// Moves `file` onto `new_document` without re-anchoring anything.
///
/// Attached tags whose text still sits at their offsets get fresh context;
/// other attached tags become orphaned. Orphaned and proposed tags keep
/// their state.
pub fn rebase(file: &AnnotationFile, new_document: &str) -> AnnotationFile {
    let doc: Vec<char> = new_document.chars().collect();
    let mut out = file.clone();
    for tag in &mut out.annotations {
        if tag.status != TagStatus::Attached {
            continue;
        }
        if is_detached(tag, &doc) {
            tag.status = TagStatus::Orphaned;
            if !tag.anchor.fits(doc.len()) {
                let at = tag.anchor.start.0.min(doc.len());
                tag.anchor = Anchor::new(at, at);
            }
        } else {
            tag.context.refresh(&doc, tag.anchor);
        }
    }
    out.document.digest = digest_bytes(new_document.as_bytes());
    out
}

/// Applies an accepted proposal, returning the updated file.
pub fn confirm(
    proposal: &ReattachProposal,
    file: &AnnotationFile,
    new_document: &str,
) -> Result<AnnotationFile> {
    let digest = digest_bytes(new_document.as_bytes());
    if digest != proposal.document_digest {
        return Err(Error::StaleProposal {
            tag: proposal.tag_id.to_string(),
        });
    }
    if file.find(proposal.tag_id).is_none() {
        return Err(Error::NotFound(format!("tag {}", proposal.tag_id)));
    }
    let doc: Vec<char> = new_document.chars().collect();
    if !proposal.candidate.fits(doc.len()) {
        return Err(Error::OutOfBounds {
            anchor: proposal.candidate,
            len: doc.len(),
        });
    }
    let mut out = if file.document.digest == digest {
        file.clone()
    } else {
        rebase(file, new_document)
    };
    let tag = out.find_mut(proposal.tag_id).expect("checked above");
    tag.anchor = proposal.candidate;
    tag.context.refresh(&doc, proposal.candidate);
    tag.status = TagStatus::Attached;
    out.document.digest = digest;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_tag, DocumentRef};
    use serde_json::Value;

    fn tag(text: &str, s: usize, e: usize) -> TagRecord {
        TagRecord::new(text, Anchor::new(s, e), "comment", Value::Null).unwrap()
    }

    fn proposal(r: Reattachment) -> ReattachProposal {
        r.into_proposal().expect("expected a proposal")
    }

    #[test]
    fn similarity_spot_checks() {
        assert_eq!(similarity("abc", "abc"), 1.0);
        assert_eq!(similarity("abc", ""), 0.0);
        assert_eq!(similarity("", ""), 1.0);
        assert!((similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn levenshtein_basics() {
        let c = |s: &str| s.chars().collect::<Vec<_>>();
        assert_eq!(levenshtein(&c("kitten"), &c("sitting")), 3);
        assert_eq!(levenshtein(&c("flaw"), &c("lawn")), 2);
        assert_eq!(levenshtein(&c(""), &c("abc")), 3);
        assert_eq!(levenshtein(&c("日本語"), &c("日本")), 1);
    }

    #[test]
    fn score_unchanged_is_one() {
        let text = "fn main() { let x = compute(); println!(\"{x}\"); }";
        let t = tag(text, 12, 30);
        let s = score_candidate(&t.context, text, t.anchor, &ReattachConfig::default()).unwrap();
        assert_eq!(s, 1.0);
    }

    #[test]
    fn score_without_surroundings() {
        let ctx = AnchorContext {
            anchor_text: "target".into(),
            prefix: "before ".into(),
            suffix: " after".into(),
            ..Default::default()
        };
        let s = score_candidate(&ctx, "target", Anchor::new(0, 6), &ReattachConfig::default()).unwrap();
        assert!((s - 0.6).abs() < 1e-12);
    }

    #[test]
    fn score_one_typo_in_ten() {
        let ctx = AnchorContext {
            anchor_text: "abcdefghij".into(),
            prefix: "pre ".into(),
            suffix: " post".into(),
            ..Default::default()
        };
        let doc = "pre abcdeXghij post";
        let s = score_candidate(&ctx, doc, Anchor::new(4, 14), &ReattachConfig::default()).unwrap();
        assert!((s - 0.94).abs() < 1e-12, "{s}");
    }

    #[test]
    fn score_rejects_out_of_bounds() {
        let ctx = AnchorContext::default();
        assert!(score_candidate(&ctx, "ab", Anchor::new(1, 3), &ReattachConfig::default()).is_err());
    }

    #[test]
    fn unchanged_document_is_exact_identity() {
        let text = "alpha beta gamma beta delta";
        let t = tag(text, 17, 21);
        let p = proposal(reattach(&t, text, &ReattachConfig::default()).unwrap());
        assert_eq!(p.candidate, t.anchor);
        assert_eq!(p.score, 1.0);
        assert_eq!(p.strategy, Strategy::Exact);
        assert!(!p.accepted);
    }

    #[test]
    fn exact_prefers_nearest_occurrence() {
        let text = "beta xxxxxxxxxx beta yy beta";
        let t = tag(text, 16, 20);
        let moved = format!("zz{text}");
        let p = proposal(reattach(&t, &moved, &ReattachConfig::default()).unwrap());
        assert_eq!(p.candidate, Anchor::new(18, 22));
    }

    #[test]
    fn exact_tie_prefers_smaller_start() {
        // occurrences at 0 and 10, old start 5
        let t = TagRecord {
            anchor: Anchor::new(5, 8),
            ..tag("0123456789", 5, 8)
        };
        let t = TagRecord {
            context: AnchorContext {
                anchor_text: "abc".into(),
                ..Default::default()
            },
            ..t
        };
        let p = proposal(reattach(&t, "abcxxxxxxxabc", &ReattachConfig::default()).unwrap());
        assert_eq!(p.candidate, Anchor::new(0, 3));
    }

    #[test]
    fn fuzzy_finds_renamed_identifier() {
        let old = "fn setup() {}\nfn compute_total(items: &[u32]) -> u32 { items.iter().sum() }\nfn main() {}\n";
        let s = old.find("compute_total").unwrap();
        let t = tag(old, s, s + 30);
        let new = old.replace("compute_total", "compute_totals");
        let p = proposal(reattach(&t, &new, &ReattachConfig::default()).unwrap());
        assert_eq!(p.strategy, Strategy::Fuzzy);
        assert_eq!(p.candidate.start.0, s);
        assert!(p.score >= 0.65);
    }

    #[test]
    fn below_threshold_is_orphaned() {
        let old = "some code here that we annotate and then delete entirely";
        let t = tag(old, 10, 40);
        let r = reattach(&t, "completely different content qqq", &ReattachConfig::default()).unwrap();
        match r {
            Reattachment::Orphaned { best, .. } => assert!(best.unwrap().1 < 0.65),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exact_mode_skips_fuzzy() {
        let old = "let value = 1;";
        let t = tag(old, 4, 9);
        let r = reattach_exact(&t, "let valve = 1;", &ReattachConfig::default()).unwrap();
        assert!(matches!(r, Reattachment::Orphaned { best: None, .. }));
    }

    #[test]
    fn empty_anchor_text_is_precondition_error() {
        let t = tag("abc", 1, 1);
        assert!(matches!(
            reattach(&t, "abc", &ReattachConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(ReattachConfig::default().validate().is_ok());
        let mut c = ReattachConfig::default();
        c.weight_anchor = 0.7;
        assert!(c.validate().is_err());
        assert!(ReattachConfig::default().with_threshold(0.0).validate().is_err());
        assert!(ReattachConfig::default().with_threshold(1.0).validate().is_ok());
    }

    fn file_for(text: &str, tags: Vec<TagRecord>) -> AnnotationFile {
        let mut f = AnnotationFile::new(DocumentRef::new("x.rs", text).unwrap());
        f.annotations = tags;
        f
    }

    #[test]
    fn confirm_attaches_and_validates() {
        let old = "line one\nline two\n";
        let t = tag(old, 9, 17);
        let f = file_for(old, vec![t.clone()]);
        let new = format!("// header\n{old}");
        let p = proposal(reattach(&t, &new, &ReattachConfig::default()).unwrap());
        let out = confirm(&p, &f, &new).unwrap();
        let nt = out.find(t.id).unwrap();
        assert_eq!(nt.anchor, Anchor::new(19, 27));
        assert_eq!(nt.status, TagStatus::Attached);
        assert!(validate_tag(nt, &new).is_empty());
        assert_eq!(out.document.digest, digest_bytes(new.as_bytes()));
    }

    #[test]
    fn confirm_rejects_stale_proposal() {
        let old = "line one\nline two\n";
        let t = tag(old, 9, 17);
        let f = file_for(old, vec![t.clone()]);
        let new = format!("// header\n{old}");
        let p = proposal(reattach(&t, &new, &ReattachConfig::default()).unwrap());
        let newer = format!("{new}more\n");
        assert!(matches!(
            confirm(&p, &f, &newer),
            Err(Error::StaleProposal { .. })
        ));
    }

    #[test]
    fn manual_move_confirms() {
        let old = "aaa bbb ccc";
        let t = tag(old, 4, 7);
        let f = file_for(old, vec![t.clone()]);
        let new = "zzz yyy xxx";
        let p = ReattachProposal::manual(&t, Anchor::new(8, 11), new).unwrap();
        let out = confirm(&p, &f, new).unwrap();
        assert_eq!(out.find(t.id).unwrap().context.anchor_text, "xxx");
    }

    #[test]
    fn confirm_rebases_other_tags() {
        let old = "keep this. lose that.";
        let keep = tag(old, 0, 9);
        let lose = tag(old, 11, 20);
        let f = file_for(old, vec![keep.clone(), lose.clone()]);
        let new = "keep this. gone.";
        let p = ReattachProposal::manual(&lose, Anchor::new(11, 15), new).unwrap();
        let out = confirm(&p, &f, new).unwrap();
        assert_eq!(out.find(keep.id).unwrap().status, TagStatus::Attached);
        assert_eq!(out.find(lose.id).unwrap().status, TagStatus::Attached);
        for t in &out.annotations {
            assert!(validate_tag(t, new).is_empty());
        }

        let only_keep = rebase(&f, new);
        assert_eq!(only_keep.find(lose.id).unwrap().status, TagStatus::Orphaned);
    }

    #[test]
    fn semantic_uses_provider_text() {
        use crate::provider::MockProvider;
        let old = "fn a() {}\nfn target_fn() { body(); }\nfn c() {}\n";
        let s = old.find("fn target_fn").unwrap();
        let t = tag(old, s, s + 26);
        let new = "fn a() {}\nfn renamed_completely() { other_body(); }\nfn c() {}\n";
        let region = "fn renamed_completely() { other_body(); }";
        let provider = MockProvider::constant(region);
        let out = semantic_reattach(&t, new, &provider, &ReattachConfig::default()).unwrap();
        let p = proposal(out.result);
        assert_eq!(p.strategy, Strategy::Semantic);
        assert_eq!(p.candidate_text, region);
        assert_eq!(p.score, 1.0);
        assert!(!out.fell_back);
        assert_eq!(provider.requests()[0].anchor_context, t.context);
    }

    #[test]
    fn semantic_empty_output_falls_back() {
        use crate::provider::MockProvider;
        let old = "alpha beta gamma";
        let t = tag(old, 6, 10);
        let new = "alpha betas gamma";
        let out =
            semantic_reattach(&t, new, &MockProvider::constant(""), &ReattachConfig::default()).unwrap();
        assert!(out.fell_back);
        assert_eq!(out.result, reattach(&t, new, &ReattachConfig::default()).unwrap());
    }

    #[test]
    fn semantic_transport_error_is_recorded() {
        use crate::provider::MockProvider;
        let old = "alpha beta gamma";
        let t = tag(old, 6, 10);
        let p = MockProvider::from_fn(|_| Err(ProviderError::Transport("down".into())));
        let out = semantic_reattach(&t, old, &p, &ReattachConfig::default()).unwrap();
        assert!(out.fell_back);
        assert_eq!(out.provider_error, Some(ProviderError::Transport("down".into())));
        assert_eq!(proposal(out.result).strategy, Strategy::Exact);
    }
}
