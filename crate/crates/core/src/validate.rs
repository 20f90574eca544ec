//! Structural validation of a project.
//!
//! Violations are data. The report is sorted by entity id, then by message,
//! so two runs over the same project always print the same thing.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use uuid::Uuid;

use crate::model::{
    classify_timing, is_valid_project_name, EntryItem, EvidenceGranularity, MediaClass, Project,
    ThreadStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    InvalidProjectName,
    DuplicateId,
    MissingTitle,
    MissingName,
    MissingDescription,
    MissingKind,
    MissingRationale,
    UnknownKind,
    DuplicateKind,
    EmptyTag,
    DuplicateTag,
    UnknownTag,
    BadFileRef,
    MediaMismatch,
    MalformedTarget,
    DanglingReference,
    TimingMismatch,
    InvalidFragment,
    LineageDangling,
    LineageCycle,
    MergeLineage,
    InvalidAlias,
    DuplicateAlias,
    AliasConflict,
    BadReportPath,
    MissingFile,
    ChecksumMismatch,
    OrphanFile,
    FragmentDrift,
    UnreadableText,
}

impl Rule {
    pub fn message(self) -> &'static str {
        match self {
            Self::InvalidProjectName => "invalid project name",
            Self::DuplicateId => "duplicate identifier",
            Self::MissingTitle => "missing title",
            Self::MissingName => "missing name",
            Self::MissingDescription => "missing description",
            Self::MissingKind => "missing kind",
            Self::MissingRationale => "missing rationale",
            Self::UnknownKind => "kind not in vocabulary",
            Self::DuplicateKind => "duplicate kind in vocabulary",
            Self::EmptyTag => "empty tag label",
            Self::DuplicateTag => "duplicate tag label",
            Self::UnknownTag => "tag not in vocabulary",
            Self::BadFileRef => "bad file reference",
            Self::MediaMismatch => "media class does not match file format",
            Self::MalformedTarget => "malformed evidence target",
            Self::DanglingReference => "dangling reference",
            Self::TimingMismatch => "stored timing disagrees with timestamps",
            Self::InvalidFragment => "invalid fragment",
            Self::LineageDangling => "lineage references unknown thread",
            Self::LineageCycle => "lineage cycle",
            Self::MergeLineage => "inconsistent merge lineage",
            Self::InvalidAlias => "invalid alias",
            Self::DuplicateAlias => "duplicate alias",
            Self::AliasConflict => "alias replacement contains a registered name",
            Self::BadReportPath => "report path outside reports/",
            Self::MissingFile => "missing file",
            Self::ChecksumMismatch => "checksum mismatch",
            Self::OrphanFile => "unreferenced file",
            Self::FragmentDrift => "fragment text drifted",
            Self::UnreadableText => "unreadable text",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// `project`, `activity`, `artifact`, `thread`, `tag`, `alias`, `report` or `file`.
    pub entity_kind: &'static str,
    pub entity: String,
    pub rule: Rule,
    pub detail: Option<String>,
}

impl Violation {
    pub fn new(entity_kind: &'static str, entity: impl ToString, rule: Rule) -> Self {
        Self {
            entity_kind,
            entity: entity.to_string(),
            rule,
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.entity_kind, self.entity, self.rule.message())?;
        if let Some(detail) = &self.detail {
            write!(f, " ({detail})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by(|a, b| {
            (a.entity.as_str(), a.to_string()).cmp(&(b.entity.as_str(), b.to_string()))
        });
        violations.dedup();
        Self { violations }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn merge(self, other: ValidationReport) -> Self {
        let mut all = self.violations;
        all.extend(other.violations);
        Self::from_violations(all)
    }

    pub fn has(&self, rule: Rule) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every rule that can be decided from the manifest alone. File
/// integrity is checked by the store on top of this.
pub fn validate_project(project: &Project) -> ValidationReport {
    let mut out = Vec::new();
    check_identity(project, &mut out);
    check_vocabularies(project, &mut out);
    check_activities(project, &mut out);
    check_threads(project, &mut out);
    check_lineage(project, &mut out);
    check_aliases(project, &mut out);
    check_reports(project, &mut out);
    ValidationReport::from_violations(out)
}

fn check_identity(project: &Project, out: &mut Vec<Violation>) {
    if !is_valid_project_name(&project.name) {
        out.push(
            Violation::new("project", &project.name, Rule::InvalidProjectName)
                .with_detail("lowercase letters, digits and hyphens only"),
        );
    }
    if project.title.trim().is_empty() {
        out.push(Violation::new("project", &project.name, Rule::MissingTitle));
    }
    let mut seen = HashSet::new();
    for id in project.all_ids() {
        if !seen.insert(id) {
            out.push(Violation::new("entity", id, Rule::DuplicateId));
        }
    }
}

fn check_vocabularies(project: &Project, out: &mut Vec<Violation>) {
    let mut kinds = HashSet::new();
    for kind in &project.kind_vocabulary {
        if kind.label.trim().is_empty() {
            out.push(Violation::new("kind", "(empty)", Rule::MissingKind));
        } else if !kinds.insert(kind.label.as_str()) {
            out.push(Violation::new("kind", &kind.label, Rule::DuplicateKind));
        }
    }
    let mut labels = HashSet::new();
    for tag in &project.tag_vocabulary {
        if tag.label.trim().is_empty() {
            out.push(Violation::new("tag", "(empty)", Rule::EmptyTag));
        } else if !labels.insert(tag.label.to_lowercase()) {
            out.push(Violation::new("tag", &tag.label, Rule::DuplicateTag));
        }
    }
}

fn check_tags<'a>(
    project: &Project,
    kind: &'static str,
    id: Uuid,
    tags: impl Iterator<Item = &'a String>,
    out: &mut Vec<Violation>,
) {
    for tag in tags {
        if tag.trim().is_empty() {
            out.push(Violation::new(kind, id, Rule::EmptyTag));
        } else if project.find_tag(tag).is_none() {
            out.push(Violation::new(kind, id, Rule::UnknownTag).with_detail(tag.clone()));
        }
    }
}

fn check_activities(project: &Project, out: &mut Vec<Violation>) {
    for activity in &project.activities {
        if activity.title.trim().is_empty() {
            out.push(Violation::new("activity", activity.id, Rule::MissingTitle));
        }
        check_tags(project, "activity", activity.id, activity.tags.iter(), out);
        for artifact in &activity.artifacts {
            let id = artifact.id;
            if artifact.kind.trim().is_empty() {
                out.push(Violation::new("artifact", id, Rule::MissingKind));
            } else if !project.kind_vocabulary.iter().any(|k| k.label == artifact.kind) {
                out.push(
                    Violation::new("artifact", id, Rule::UnknownKind)
                        .with_detail(artifact.kind.clone()),
                );
            }
            if artifact.description.trim().is_empty() {
                out.push(Violation::new("artifact", id, Rule::MissingDescription));
            }
            check_tags(project, "artifact", id, artifact.tags.iter(), out);
            match file_ref_extension(&artifact.file_ref, id) {
                None => out.push(
                    Violation::new("artifact", id, Rule::BadFileRef)
                        .with_detail(artifact.file_ref.clone()),
                ),
                Some(ext) => {
                    if MediaClass::from_extension(ext) != Some(artifact.media_class) {
                        out.push(
                            Violation::new("artifact", id, Rule::MediaMismatch).with_detail(
                                format!("{} stored as .{ext}", artifact.media_class.as_str()),
                            ),
                        );
                    }
                }
            }
            if artifact.checksum.len() != 64
                || !artifact.checksum.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
            {
                out.push(
                    Violation::new("artifact", id, Rule::ChecksumMismatch)
                        .with_detail("checksum is not a lowercase hex SHA-256"),
                );
            }
        }
    }
}

/// Extension of a well-formed `files/<id>.<ext>` reference.
pub(crate) fn file_ref_extension(file_ref: &str, id: Uuid) -> Option<&str> {
    let name = file_ref.strip_prefix("files/")?;
    let (stem, ext) = name.rsplit_once('.')?;
    (stem == id.to_string() && !ext.is_empty() && ext == ext.to_ascii_lowercase()).then_some(ext)
}

fn check_threads(project: &Project, out: &mut Vec<Violation>) {
    for thread in &project.threads {
        let id = thread.id;
        if thread.name.trim().is_empty() {
            out.push(Violation::new("thread", id, Rule::MissingName));
        }
        if thread.description.trim().is_empty() {
            out.push(Violation::new("thread", id, Rule::MissingDescription));
        }
        for (index, entry) in thread.evidence.iter().enumerate() {
            let at = |rule| Violation::new("thread", id, rule).with_detail(format!("entry {index}"));
            if entry.rationale.trim().is_empty() {
                out.push(at(Rule::MissingRationale));
            }
            let EntryItem::Evidence { target, timing } = &entry.item else {
                continue;
            };
            if !target.is_well_formed() {
                out.push(at(Rule::MalformedTarget));
                continue;
            }
            let Some(activity) = project.activity(target.activity_id) else {
                out.push(at(Rule::DanglingReference).with_detail(format!(
                    "entry {index}: activity {}",
                    target.activity_id
                )));
                continue;
            };
            if let Some(artifact_id) = target.artifact_id {
                if !activity.artifacts.iter().any(|a| a.id == artifact_id) {
                    out.push(at(Rule::DanglingReference).with_detail(format!(
                        "entry {index}: artifact {artifact_id} in activity {}",
                        activity.id
                    )));
                    continue;
                }
            }
            if let Some(fragment) = &target.fragment {
                let len = fragment.quoted_text.chars().count();
                if fragment.start >= fragment.end || fragment.end - fragment.start != len {
                    out.push(at(Rule::InvalidFragment));
                }
                if target.granularity == EvidenceGranularity::Fragment {
                    let artifact_id = target.artifact_id.expect("well formed");
                    let (_, artifact) = project.artifact(artifact_id).expect("checked above");
                    if !artifact.media_class.is_text() {
                        out.push(at(Rule::InvalidFragment).with_detail(format!(
                            "entry {index}: fragment of non-text artifact"
                        )));
                    }
                }
            }
            if *timing != classify_timing(activity.occurred_at, thread.created_at) {
                out.push(at(Rule::TimingMismatch));
            }
        }
    }
}

fn check_lineage(project: &Project, out: &mut Vec<Violation>) {
    let ids: HashSet<Uuid> = project.threads.iter().map(|t| t.id).collect();
    let mut absorbed_by: HashMap<Uuid, usize> = HashMap::new();
    for thread in &project.threads {
        for parent in thread.merged_from.iter().chain(thread.branched_from.iter()) {
            if !ids.contains(parent) {
                out.push(
                    Violation::new("thread", thread.id, Rule::LineageDangling)
                        .with_detail(parent.to_string()),
                );
            }
        }
        if thread.merged_from.contains(&thread.id) || thread.branched_from == Some(thread.id) {
            out.push(Violation::new("thread", thread.id, Rule::LineageCycle));
        }
        for absorbed in &thread.merged_from {
            *absorbed_by.entry(*absorbed).or_default() += 1;
            if let Some(t) = project.thread(*absorbed) {
                if t.status != ThreadStatus::MergedAway {
                    out.push(
                        Violation::new("thread", thread.id, Rule::MergeLineage)
                            .with_detail(format!("merged_from {absorbed} is {}", t.status)),
                    );
                }
            }
        }
    }
    for thread in &project.threads {
        if thread.status == ThreadStatus::MergedAway {
            let count = absorbed_by.get(&thread.id).copied().unwrap_or(0);
            if count != 1 {
                out.push(
                    Violation::new("thread", thread.id, Rule::MergeLineage)
                        .with_detail(format!("merged away but absorbed by {count} threads")),
                );
            }
        }
    }

    // Cycle detection over parent edges (merged_from + branched_from).
    let parents: BTreeMap<Uuid, Vec<Uuid>> = project
        .threads
        .iter()
        .map(|t| {
            let edges = t
                .merged_from
                .iter()
                .chain(t.branched_from.iter())
                .copied()
                .filter(|p| ids.contains(p) && *p != t.id)
                .collect();
            (t.id, edges)
        })
        .collect();
    let mut state: HashMap<Uuid, u8> = HashMap::new();
    let mut in_cycle = BTreeSet::new();
    for &start in parents.keys() {
        if state.contains_key(&start) {
            continue;
        }
        // Iterative DFS: 1 = on stack, 2 = finished.
        let mut stack = vec![(start, 0usize)];
        state.insert(start, 1);
        while let Some((node, next)) = stack.pop() {
            let edges = &parents[&node];
            if next < edges.len() {
                stack.push((node, next + 1));
                let child = edges[next];
                match state.get(&child) {
                    None => {
                        state.insert(child, 1);
                        stack.push((child, 0));
                    }
                    Some(1) => {
                        in_cycle.insert(child);
                    }
                    _ => {}
                }
            } else {
                state.insert(node, 2);
            }
        }
    }
    for id in in_cycle {
        out.push(Violation::new("thread", id, Rule::LineageCycle));
    }
}

fn check_aliases(project: &Project, out: &mut Vec<Violation>) {
    let mut names = HashSet::new();
    for alias in &project.alias_registry {
        if alias.full_name.trim().is_empty() {
            out.push(Violation::new("alias", "(empty)", Rule::InvalidAlias));
            continue;
        }
        let key = alias.full_name.to_lowercase();
        if !names.insert(key.clone()) {
            out.push(Violation::new("alias", &alias.full_name, Rule::DuplicateAlias));
        }
        if alias.replacement.trim().is_empty() || alias.replacement.to_lowercase() == key {
            out.push(Violation::new("alias", &alias.full_name, Rule::InvalidAlias));
        }
        let replacement = alias.replacement.to_lowercase();
        for other in &project.alias_registry {
            let other_name = other.full_name.to_lowercase();
            if !other_name.is_empty() && replacement.contains(&other_name) {
                out.push(
                    Violation::new("alias", &alias.full_name, Rule::AliasConflict)
                        .with_detail(other.full_name.clone()),
                );
            }
        }
    }
}

fn check_reports(project: &Project, out: &mut Vec<Violation>) {
    for report in &project.reports {
        if !is_contained_path(&report.path, "reports/") {
            out.push(
                Violation::new("report", report.id, Rule::BadReportPath)
                    .with_detail(report.path.clone()),
            );
        }
        if report.title.trim().is_empty() {
            out.push(Violation::new("report", report.id, Rule::MissingTitle));
        }
    }
}

/// A relative, forward-slash path under `prefix` with no `..` or empty parts.
pub(crate) fn is_contained_path(path: &str, prefix: &str) -> bool {
    path.strip_prefix(prefix).is_some_and(|rest| {
        !rest.is_empty()
            && rest
                .split('/')
                .all(|part| !part.is_empty() && part != "." && part != ".." && !part.contains('\\'))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Artifact, Context, EvidenceTarget, Timestamp};

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn project() -> (Project, Context) {
        let mut ctx = Context::fixed(ts("2021-06-01T00:00:00Z"), b"validate");
        let p = Project::new("jen", "tRRRacer project", ctx.now());
        let _ = ctx.mint_id();
        (p, ctx)
    }

    fn fake_artifact(id: Uuid, description: &str) -> Artifact {
        Artifact {
            id,
            kind: "memo".into(),
            description: description.into(),
            tags: Default::default(),
            file_ref: format!("files/{id}.txt"),
            media_class: MediaClass::Text,
            checksum: "0".repeat(64),
            private: false,
            cleared_for_export: false,
        }
    }

    #[test]
    fn empty_project_is_clean() {
        let (p, _) = project();
        assert!(validate_project(&p).is_clean());
    }

    #[test]
    fn missing_description_is_named() {
        let (mut p, mut ctx) = project();
        let a = p
            .add_activity(&mut ctx, "standup", ts("2021-05-01"), &[], false)
            .unwrap();
        let art = ctx.mint_id();
        p.activity_mut(a).unwrap().artifacts.push(fake_artifact(art, ""));
        let report = validate_project(&p);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(
            report.violations[0].to_string(),
            format!("artifact {art}: missing description")
        );
    }

    #[test]
    fn dangling_evidence_after_activity_removal() {
        let (mut p, mut ctx) = project();
        let a = p
            .add_activity(&mut ctx, "workshop", ts("2021-05-01"), &[], false)
            .unwrap();
        let t = crate::threading::create_thread(&mut p, &mut ctx, "Concept", "how it evolved")
            .unwrap();
        crate::threading::add_evidence(&mut p, &mut ctx, t, EvidenceTarget::activity(a), "seed")
            .unwrap();
        assert!(validate_project(&p).is_clean());
        p.remove_activity(a);
        let report = validate_project(&p);
        assert_eq!(report.violations.len(), 1, "{report}");
        assert_eq!(report.violations[0].rule, Rule::DanglingReference);
        assert_eq!(report, validate_project(&p));
    }

    #[test]
    fn lineage_cycles_are_found() {
        let (mut p, mut ctx) = project();
        let a = crate::threading::create_thread(&mut p, &mut ctx, "a", "a").unwrap();
        let b = crate::threading::create_thread(&mut p, &mut ctx, "b", "b").unwrap();
        p.thread_mut(a).unwrap().branched_from = Some(b);
        p.thread_mut(b).unwrap().branched_from = Some(a);
        assert!(validate_project(&p).has(Rule::LineageCycle));
    }

    #[test]
    fn violations_are_ordered_by_entity() {
        let (mut p, mut ctx) = project();
        for _ in 0..5 {
            let a = p
                .add_activity(&mut ctx, "x", ts("2021-05-01"), &[], false)
                .unwrap();
            p.activity_mut(a).unwrap().title.clear();
        }
        let report = validate_project(&p);
        let ids: Vec<_> = report.violations.iter().map(|v| v.entity.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn contained_paths() {
        assert!(is_contained_path("reports/a.md", "reports/"));
        assert!(!is_contained_path("reports/../trace.json", "reports/"));
        assert!(!is_contained_path("/etc/passwd", "reports/"));
        assert!(!is_contained_path("reports/", "reports/"));
    }
}
