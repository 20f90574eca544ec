//! Redacted, self-contained, read-only bundles.
//!
//! ```text
//! <out>/
//!   bundle.json            redacted project, chronological activities, thread links
//!   checksums.txt          "<sha256>  <path>" per file, sorted by path
//!   files/<id>.<ext>       non-private artifacts (text redacted, binaries only if cleared)
//!   reports/<id>.<ext>     redacted manuscripts
//!   reports/<id>.index.json
//! ```
//!
//! Registered names never leave the repository in clear. The bundle carries
//! salted hashes of them so [`verify_bundle`] can scan for leaks from the
//! files alone.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use regex::{NoExpand, Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::citation::{resolve_citation, scan_citations};
use crate::model::{
    classify_timing, initials, char_slice, Activity, AliasEntry, Artifact, EntryItem,
    EvidenceEntry, MediaClass, Project, ReportRef, Tag, Thread, ThreadStatus, Timestamp, Timing,
};
use crate::report::{index_text, ReportIndex};
use crate::store::{sha256_hex, to_canonical_json, Repository, StoreError};
use crate::validate::is_contained_path;
use crate::{Error, Result};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_FILE: &str = "bundle.json";
pub const CHECKSUMS_FILE: &str = "checksums.txt";

/// Registers a name to hide on export. The replacement defaults to initials.
pub fn register_alias(
    project: &mut Project,
    full_name: &str,
    replacement: Option<&str>,
) -> Result<()> {
    let full_name = full_name.trim();
    if full_name.is_empty() {
        return Err(Error::MissingField("full name"));
    }
    let key = full_name.to_lowercase();
    if project
        .alias_registry
        .iter()
        .any(|a| a.full_name.to_lowercase() == key)
    {
        return Err(Error::DuplicateAlias(full_name.to_string()));
    }
    let replacement = match replacement {
        Some(r) => r.trim().to_string(),
        None => initials(full_name),
    };
    if replacement.is_empty() || replacement.to_lowercase() == key {
        return Err(Error::InvalidReplacement(full_name.to_string()));
    }
    let lowered = replacement.to_lowercase();
    let conflict = project
        .alias_registry
        .iter()
        .map(|a| a.full_name.as_str())
        .chain(Some(full_name))
        .find(|name| lowered.contains(&name.to_lowercase()));
    if let Some(conflict) = conflict {
        return Err(Error::AliasConflict {
            full_name: full_name.to_string(),
            replacement,
            conflict: conflict.to_string(),
        });
    }
    if let Some(existing) = project
        .alias_registry
        .iter()
        .find(|a| a.replacement.to_lowercase().contains(&key))
    {
        return Err(Error::AliasConflict {
            full_name: existing.full_name.clone(),
            replacement: existing.replacement.clone(),
            conflict: full_name.to_string(),
        });
    }
    project.alias_registry.push(AliasEntry {
        full_name: full_name.to_string(),
        replacement,
    });
    Ok(())
}

/// Case-insensitive name replacement, longest names first.
#[derive(Debug, Clone)]
pub struct Redactor {
    rules: Vec<(Regex, String)>,
}

/// Replacement passes can expose a name that straddled a previous
/// replacement; passes repeat until nothing changes, up to this bound.
const MAX_REDACTION_PASSES: usize = 16;

impl Redactor {
    pub fn new(registry: &[AliasEntry]) -> Self {
        let mut entries: Vec<&AliasEntry> = registry
            .iter()
            .filter(|a| !a.full_name.trim().is_empty())
            .collect();
        entries.sort_by(|a, b| {
            b.full_name
                .chars()
                .count()
                .cmp(&a.full_name.chars().count())
                .then(a.full_name.cmp(&b.full_name))
        });
        let rules = entries
            .into_iter()
            .map(|a| {
                let re = RegexBuilder::new(&regex::escape(&a.full_name))
                    .case_insensitive(true)
                    .build()
                    .expect("escaped literal is a valid pattern");
                (re, a.replacement.clone())
            })
            .collect();
        Self { rules }
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn redact(&self, text: &str) -> String {
        let mut current = text.to_string();
        for _ in 0..MAX_REDACTION_PASSES {
            let mut next = current.clone();
            for (re, replacement) in &self.rules {
                if re.is_match(&next) {
                    next = re.replace_all(&next, NoExpand(replacement)).into_owned();
                }
            }
            if next == current {
                break;
            }
            current = next;
        }
        current
    }
}

pub fn redact_text(text: &str, registry: &[AliasEntry]) -> String {
    Redactor::new(registry).redact(text)
}

/// Salted hash of a lowercased name and its length in characters.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NameFingerprint {
    pub chars: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedactionFingerprints {
    pub salt: String,
    pub names: Vec<NameFingerprint>,
}

fn lower_chars(text: &str) -> Vec<char> {
    text.chars().flat_map(char::to_lowercase).collect()
}

fn fingerprint(salt: &str, lowered: &[char]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(salt.as_bytes());
    hasher.update([0u8]);
    let s: String = lowered.iter().collect();
    hasher.update(s.as_bytes());
    hex::encode(hasher.finalize())
}

impl RedactionFingerprints {
    pub fn from_registry(salt: &str, registry: &[AliasEntry]) -> Self {
        let mut names: Vec<NameFingerprint> = registry
            .iter()
            .map(|a| {
                let lowered = lower_chars(&a.full_name);
                NameFingerprint {
                    chars: lowered.len(),
                    sha256: fingerprint(salt, &lowered),
                }
            })
            .filter(|f| f.chars > 0)
            .collect();
        names.sort();
        names.dedup();
        Self {
            salt: salt.to_string(),
            names,
        }
    }

    /// True when some window of `text` hashes to a registered name.
    pub fn finds_name_in(&self, text: &str) -> bool {
        if self.names.is_empty() {
            return false;
        }
        let lowered = lower_chars(text);
        let by_len: BTreeMap<usize, HashSet<&str>> =
            self.names.iter().fold(BTreeMap::new(), |mut m, f| {
                m.entry(f.chars).or_insert_with(HashSet::new).insert(f.sha256.as_str());
                m
            });
        by_len.iter().any(|(&len, hashes)| {
            lowered.len() >= len
                && lowered
                    .windows(len)
                    .any(|w| hashes.contains(fingerprint(&self.salt, w).as_str()))
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Export even when the project has validation violations.
    pub force: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BundleReport {
    pub activities_included: usize,
    pub activities_excluded: usize,
    pub artifacts_included: usize,
    /// Private artifacts and artifacts of private activities.
    pub artifacts_excluded: usize,
    /// Text artifacts whose content changed under redaction.
    pub artifacts_redacted: usize,
    /// Binary artifacts left out because they were not cleared for export.
    pub binaries_withheld: usize,
    pub threads_included: usize,
    pub threads_dropped: usize,
    pub threads_trimmed: usize,
    pub entries_withheld: usize,
    pub files_written: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleDoc {
    pub schema_version: u32,
    pub project: BundleProject,
    /// Ordered by occurrence time, then id.
    pub activities: Vec<BundleActivity>,
    pub threads: Vec<BundleThread>,
    pub tags: Vec<Tag>,
    pub kinds: Vec<String>,
    pub reports: Vec<BundleReportRef>,
    pub redaction: RedactionFingerprints,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleProject {
    pub name: String,
    pub title: String,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleActivity {
    pub id: Uuid,
    pub title: String,
    pub occurred_at: Timestamp,
    pub recorded_at: Timestamp,
    pub tags: BTreeSet<String>,
    pub artifacts: Vec<BundleArtifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleArtifact {
    pub id: Uuid,
    pub kind: String,
    pub description: String,
    pub tags: BTreeSet<String>,
    pub file_ref: String,
    pub media_class: MediaClass,
    /// Hash of the bundled bytes (after redaction).
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleThread {
    pub id: Uuid,
    pub name: String,
    pub description: String,
    pub created_at: Timestamp,
    pub status: ThreadStatus,
    pub evidence: Vec<EvidenceEntry>,
    /// Evidence entries left out because their target was not exported.
    pub withheld: usize,
    pub merged_from: BTreeSet<Uuid>,
    pub branched_from: Option<Uuid>,
    /// Activities visited by the thread, in evidence order; drives the
    /// overview overlay (dotted links for retroactive stops).
    pub path: Vec<PathStop>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathStop {
    pub activity_id: Uuid,
    pub entry: usize,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleReportRef {
    pub id: Uuid,
    pub title: String,
    pub path: String,
    pub index_path: String,
}

impl BundleThread {
    pub fn withheld_label(&self) -> Option<String> {
        (self.withheld > 0).then(|| format!("{} entries withheld", self.withheld))
    }
}

impl BundleDoc {
    /// The bundle seen as a project, for citation resolution.
    pub fn as_project(&self) -> Project {
        Project {
            name: self.project.name.clone(),
            title: self.project.title.clone(),
            created_at: self.project.created_at,
            activities: self
                .activities
                .iter()
                .map(|a| Activity {
                    id: a.id,
                    title: a.title.clone(),
                    occurred_at: a.occurred_at,
                    recorded_at: a.recorded_at,
                    tags: a.tags.clone(),
                    private: false,
                    artifacts: a
                        .artifacts
                        .iter()
                        .map(|x| Artifact {
                            id: x.id,
                            kind: x.kind.clone(),
                            description: x.description.clone(),
                            tags: x.tags.clone(),
                            file_ref: x.file_ref.clone(),
                            media_class: x.media_class,
                            checksum: x.checksum.clone(),
                            private: false,
                            cleared_for_export: true,
                        })
                        .collect(),
                })
                .collect(),
            threads: self
                .threads
                .iter()
                .map(|t| Thread {
                    id: t.id,
                    name: t.name.clone(),
                    description: t.description.clone(),
                    created_at: t.created_at,
                    status: t.status,
                    evidence: t.evidence.clone(),
                    merged_from: t.merged_from.clone(),
                    branched_from: t.branched_from,
                })
                .collect(),
            tag_vocabulary: self.tags.clone(),
            kind_vocabulary: Vec::new(),
            alias_registry: Vec::new(),
            reports: self
                .reports
                .iter()
                .map(|r| ReportRef {
                    id: r.id,
                    path: r.path.clone(),
                    title: r.title.clone(),
                })
                .collect(),
        }
    }

    /// Every human-readable string in the document.
    pub fn metadata_strings(&self) -> Vec<&str> {
        let mut out = vec![self.project.name.as_str(), self.project.title.as_str()];
        for tag in &self.tags {
            out.push(&tag.label);
            out.extend(tag.note.as_deref());
        }
        out.extend(self.kinds.iter().map(String::as_str));
        for a in &self.activities {
            out.push(&a.title);
            out.extend(a.tags.iter().map(String::as_str));
            for x in &a.artifacts {
                out.push(&x.kind);
                out.push(&x.description);
                out.extend(x.tags.iter().map(String::as_str));
            }
        }
        for t in &self.threads {
            out.push(&t.name);
            out.push(&t.description);
            for e in &t.evidence {
                out.push(&e.rationale);
                if let Some(f) = e.target().and_then(|t| t.fragment.as_ref()) {
                    out.push(&f.quoted_text);
                }
            }
        }
        out.extend(self.reports.iter().map(|r| r.title.as_str()));
        out
    }
}

fn bundle_salt(project: &Project) -> String {
    let digest = Sha256::digest(format!("tracekit-bundle\0{}\0{}", project.name, project.created_at));
    hex::encode(&digest[..16])
}

/// Maps a fragment of `original` onto the redacted text. `None` when a
/// registered name straddles the fragment boundary.
fn remap_fragment(
    fragment: &crate::model::Fragment,
    original: &str,
    redacted: &str,
    redactor: &Redactor,
) -> Option<crate::model::Fragment> {
    let prefix = char_slice(original, 0, fragment.start)?;
    let start = redactor.redact(prefix).chars().count();
    let quoted = redactor.redact(&fragment.quoted_text);
    let end = start + quoted.chars().count();
    let remapped = crate::model::Fragment {
        start,
        end,
        quoted_text: quoted,
    };
    remapped.matches(redacted).then_some(remapped)
}

/// Everything an export writes, keyed by bundle-relative path.
struct Staged {
    files: BTreeMap<String, Vec<u8>>,
}

/// Writes a redacted bundle of `project` into `out_dir`, which must be empty
/// or absent.
pub fn export_bundle(
    repo: &Repository,
    project: &Project,
    out_dir: impl AsRef<Path>,
    options: ExportOptions,
) -> Result<BundleReport> {
    let out_dir = out_dir.as_ref();
    let check = repo.check(project);
    if !check.is_clean() && !options.force {
        return Err(Error::Invalid(check));
    }
    if out_dir.exists()
        && fs::read_dir(out_dir)
            .map_err(|source| StoreError::Io {
                path: out_dir.to_path_buf(),
                source,
            })?
            .next()
            .is_some()
    {
        return Err(StoreError::NotEmpty(out_dir.to_path_buf()).into());
    }
    let (staged, report) = build_bundle(repo, project)?;
    for (rel, bytes) in &staged.files {
        let path = out_dir.join(rel);
        let parent = path.parent().expect("bundle paths have a parent");
        fs::create_dir_all(parent).map_err(|source| StoreError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
        fs::write(&path, bytes).map_err(|source| StoreError::Io { path, source })?;
    }
    Ok(report)
}

fn build_bundle(repo: &Repository, project: &Project) -> Result<(Staged, BundleReport)> {
    let redactor = Redactor::new(&project.alias_registry);
    let r = |s: &str| redactor.redact(s);
    let mut report = BundleReport::default();
    let mut files: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    // Original and redacted text of exported text artifacts.
    let mut texts: HashMap<Uuid, (String, String)> = HashMap::new();
    let mut included_activities: HashSet<Uuid> = HashSet::new();
    let mut included_artifacts: HashSet<Uuid> = HashSet::new();

    let mut activities = Vec::new();
    for activity in &project.activities {
        if activity.private {
            report.activities_excluded += 1;
            report.artifacts_excluded += activity.artifacts.len();
            continue;
        }
        report.activities_included += 1;
        included_activities.insert(activity.id);
        let mut artifacts = Vec::new();
        for artifact in &activity.artifacts {
            if artifact.private {
                report.artifacts_excluded += 1;
                continue;
            }
            let bytes = if artifact.media_class.is_text() {
                let original = repo.artifact_text(artifact)?;
                let redacted = redactor.redact(&original);
                if redacted != original {
                    report.artifacts_redacted += 1;
                }
                let bytes = redacted.clone().into_bytes();
                texts.insert(artifact.id, (original, redacted));
                bytes
            } else if artifact.cleared_for_export {
                let path = repo.resolve(&artifact.file_ref);
                fs::read(&path).map_err(|source| StoreError::Io { path, source })?
            } else {
                report.binaries_withheld += 1;
                continue;
            };
            report.artifacts_included += 1;
            included_artifacts.insert(artifact.id);
            let checksum = sha256_hex(&bytes);
            files.insert(artifact.file_ref.clone(), bytes);
            artifacts.push(BundleArtifact {
                id: artifact.id,
                kind: r(&artifact.kind),
                description: r(&artifact.description),
                tags: artifact.tags.iter().map(|t| r(t)).collect(),
                file_ref: artifact.file_ref.clone(),
                media_class: artifact.media_class,
                checksum,
            });
        }
        activities.push(BundleActivity {
            id: activity.id,
            title: r(&activity.title),
            occurred_at: activity.occurred_at,
            recorded_at: activity.recorded_at,
            tags: activity.tags.iter().map(|t| r(t)).collect(),
            artifacts,
        });
    }
    activities.sort_by(|a, b| a.occurred_at.cmp(&b.occurred_at).then(a.id.cmp(&b.id)));

    let mut threads = Vec::new();
    let mut dropped = HashSet::new();
    for thread in &project.threads {
        let mut evidence = Vec::new();
        let mut total = 0;
        for entry in &thread.evidence {
            let item = match &entry.item {
                EntryItem::Note { note } => EntryItem::Note { note: *note },
                EntryItem::Evidence { target, timing } => {
                    total += 1;
                    let visible = included_activities.contains(&target.activity_id)
                        && target
                            .artifact_id
                            .is_none_or(|id| included_artifacts.contains(&id));
                    if !visible {
                        continue;
                    }
                    let mut target = target.clone();
                    if let (Some(fragment), Some(artifact_id)) = (&target.fragment, target.artifact_id) {
                        let Some((original, redacted)) = texts.get(&artifact_id) else {
                            continue;
                        };
                        match remap_fragment(fragment, original, redacted, &redactor) {
                            Some(f) => target.fragment = Some(f),
                            None => continue,
                        }
                    }
                    EntryItem::Evidence {
                        target,
                        timing: *timing,
                    }
                }
            };
            evidence.push(EvidenceEntry {
                item,
                rationale: r(&entry.rationale),
                added_at: entry.added_at,
            });
        }
        let kept = evidence.iter().filter(|e| !e.is_note()).count();
        if total > 0 && kept == 0 {
            report.threads_dropped += 1;
            report.entries_withheld += total;
            dropped.insert(thread.id);
            continue;
        }
        if kept < total {
            report.threads_trimmed += 1;
            report.entries_withheld += total - kept;
        }
        let path = thread_path(&evidence);
        threads.push(BundleThread {
            id: thread.id,
            name: r(&thread.name),
            description: r(&thread.description),
            created_at: thread.created_at,
            status: thread.status,
            evidence,
            withheld: total - kept,
            merged_from: thread.merged_from.clone(),
            branched_from: thread.branched_from,
            path,
        });
    }
    for thread in &mut threads {
        thread.merged_from.retain(|id| !dropped.contains(id));
        if thread.branched_from.is_some_and(|id| dropped.contains(&id)) {
            thread.branched_from = None;
        }
    }
    report.threads_included = threads.len();

    let salt = bundle_salt(project);
    let mut doc = BundleDoc {
        schema_version: BUNDLE_SCHEMA_VERSION,
        project: BundleProject {
            name: r(&project.name),
            title: r(&project.title),
            created_at: project.created_at,
        },
        activities,
        threads,
        tags: project
            .tag_vocabulary
            .iter()
            .map(|t| Tag {
                label: r(&t.label),
                note: t.note.as_deref().map(&r),
            })
            .collect(),
        kinds: project.kind_vocabulary.iter().map(|k| r(&k.label)).collect(),
        reports: Vec::new(),
        redaction: RedactionFingerprints::from_registry(&salt, &project.alias_registry),
    };

    let mut report_texts = Vec::new();
    for source in &project.reports {
        let text = redactor.redact(&repo.read_text(&source.path)?);
        let ext = Path::new(&source.path)
            .extension()
            .map(|e| e.to_string_lossy().into_owned())
            .unwrap_or_else(|| "md".into());
        let path = format!("reports/{}.{ext}", source.id);
        let index_path = format!("reports/{}.index.json", source.id);
        doc.reports.push(BundleReportRef {
            id: source.id,
            title: r(&source.title),
            path: path.clone(),
            index_path: index_path.clone(),
        });
        report_texts.push((source.id, path, index_path, text));
    }
    let bundle_project = doc.as_project();
    let mut leak_check: Vec<String> = Vec::new();
    for (id, path, index_path, text) in report_texts {
        let text = withhold_citations(&text, project, &bundle_project);
        let index = index_text(&bundle_project, id, &text);
        leak_check.extend(index_strings(&index));
        files.insert(index_path, to_canonical_json(&index));
        leak_check.push(text.clone());
        files.insert(path, text.into_bytes());
    }
    leak_check.extend(doc.metadata_strings().into_iter().map(String::from));
    leak_check.extend(texts.values().map(|(_, redacted)| redacted.clone()));
    if let Some(leak) = leak_check.iter().find(|s| doc.redaction.finds_name_in(s)) {
        let shown: String = leak.chars().take(60).collect();
        return Err(Error::RedactionIncomplete(shown));
    }

    files.insert(BUNDLE_FILE.to_string(), to_canonical_json(&doc));
    let checksums: String = files
        .iter()
        .map(|(path, bytes)| format!("{}  {path}\n", sha256_hex(bytes)))
        .collect();
    files.insert(CHECKSUMS_FILE.to_string(), checksums.into_bytes());
    report.files_written = files.len();
    Ok((Staged { files }, report))
}

/// Marker that replaces a citation of an entity left out of the bundle.
pub const WITHHELD_CITATION: &str = "[withheld]";

/// Replaces citations of entities that exist in `source` but not in `bundle`
/// (private, withheld or dropped), so their ids never reach the bundle.
fn withhold_citations(text: &str, source: &Project, bundle: &Project) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    for hit in scan_citations(text).into_iter().rev() {
        let Ok(parsed) = &hit.parsed else { continue };
        let Ok(id) = Uuid::parse_str(&parsed.citation.id) else {
            continue;
        };
        if source.entity(id).is_some() && bundle.entity(id).is_none() {
            chars.splice(hit.start..hit.end, WITHHELD_CITATION.chars());
        }
    }
    chars.into_iter().collect()
}

fn thread_path(evidence: &[EvidenceEntry]) -> Vec<PathStop> {
    evidence
        .iter()
        .enumerate()
        .filter_map(|(entry, e)| match &e.item {
            EntryItem::Evidence { target, timing } => Some(PathStop {
                activity_id: target.activity_id,
                entry,
                timing: *timing,
            }),
            EntryItem::Note { .. } => None,
        })
        .collect()
}

fn index_strings(index: &ReportIndex) -> Vec<String> {
    let mut out = Vec::new();
    for s in &index.sections {
        out.push(s.heading.clone());
        for c in &s.citations {
            out.push(c.citation.project.clone());
            out.push(c.citation.id.clone());
        }
    }
    for b in &index.broken {
        out.push(b.text.clone());
        out.push(b.reason.clone());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BundleVerification {
    pub pass: bool,
    pub violations: Vec<String>,
}

/// Re-checks a bundle from its files alone: checksums, completeness,
/// internal references, report indexes and name leaks.
pub fn verify_bundle(bundle_dir: impl AsRef<Path>) -> BundleVerification {
    let dir = bundle_dir.as_ref();
    let mut v: Vec<String> = Vec::new();
    let files = verify_checksums(dir, &mut v);

    let doc: Option<BundleDoc> = match fs::read(dir.join(BUNDLE_FILE)) {
        Err(e) => {
            v.push(format!("{BUNDLE_FILE}: unreadable: {e}"));
            None
        }
        Ok(bytes) => match serde_json::from_slice::<BundleDoc>(&bytes) {
            Err(e) => {
                v.push(format!("{BUNDLE_FILE}:{}:{}: {e}", e.line(), e.column()));
                None
            }
            Ok(doc) => Some(doc),
        },
    };
    if let Some(doc) = doc {
        verify_doc(dir, &doc, &files, &mut v);
    }
    BundleVerification {
        pass: v.is_empty(),
        violations: v,
    }
}

/// Checks `checksums.txt` and returns the set of files it lists.
fn verify_checksums(dir: &Path, v: &mut Vec<String>) -> BTreeSet<String> {
    let mut listed = BTreeSet::new();
    let text = match fs::read_to_string(dir.join(CHECKSUMS_FILE)) {
        Ok(t) => t,
        Err(e) => {
            v.push(format!("{CHECKSUMS_FILE}: unreadable: {e}"));
            return listed;
        }
    };
    let mut previous: Option<String> = None;
    for (n, line) in text.lines().enumerate() {
        let Some((hash, path)) = line.split_once("  ") else {
            v.push(format!("{CHECKSUMS_FILE}:{}: malformed line", n + 1));
            continue;
        };
        if previous.as_deref().is_some_and(|p| p >= path) {
            v.push(format!("{CHECKSUMS_FILE}:{}: entries not sorted by path", n + 1));
        }
        previous = Some(path.to_string());
        if !is_bundle_path(path) {
            v.push(format!("{CHECKSUMS_FILE}:{}: path escapes bundle: {path}", n + 1));
            continue;
        }
        listed.insert(path.to_string());
        match fs::read(dir.join(path)) {
            Err(_) => v.push(format!("missing file {path}")),
            Ok(bytes) => {
                if sha256_hex(&bytes) != hash {
                    v.push(format!("checksum mismatch for {path}"));
                }
            }
        }
    }
    for path in walk_files(dir) {
        if path != CHECKSUMS_FILE && !listed.contains(&path) {
            v.push(format!("file not covered by {CHECKSUMS_FILE}: {path}"));
        }
    }
    listed
}

fn is_bundle_path(path: &str) -> bool {
    path == BUNDLE_FILE || is_contained_path(path, "files/") || is_contained_path(path, "reports/")
}

/// Relative paths of all regular files under `dir`, forward-slash separated.
fn walk_files(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack: Vec<PathBuf> = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(entries) = fs::read_dir(&d) else { continue };
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if let Ok(rel) = path.strip_prefix(dir) {
                let parts: Vec<String> = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect();
                out.push(parts.join("/"));
            }
        }
    }
    out.sort();
    out
}

fn verify_doc(dir: &Path, doc: &BundleDoc, listed: &BTreeSet<String>, v: &mut Vec<String>) {
    if doc.schema_version != BUNDLE_SCHEMA_VERSION {
        v.push(format!("unsupported bundle schema_version {}", doc.schema_version));
    }
    let project = doc.as_project();
    let read_text = |rel: &str| -> Option<String> {
        if !listed.contains(rel) {
            return None;
        }
        fs::read(dir.join(rel)).ok().and_then(|b| String::from_utf8(b).ok())
    };

    let mut texts: HashMap<Uuid, String> = HashMap::new();
    let mut seen = HashSet::new();
    for (i, a) in doc.activities.iter().enumerate() {
        if !seen.insert(a.id) {
            v.push(format!("duplicate id {}", a.id));
        }
        if i > 0 {
            let prev = &doc.activities[i - 1];
            if (prev.occurred_at, prev.id) > (a.occurred_at, a.id) {
                v.push(format!("activity {} out of chronological order", a.id));
            }
        }
        for x in &a.artifacts {
            if !seen.insert(x.id) {
                v.push(format!("duplicate id {}", x.id));
            }
            if !listed.contains(&x.file_ref) {
                v.push(format!("artifact {}: file {} not in bundle", x.id, x.file_ref));
                continue;
            }
            match fs::read(dir.join(&x.file_ref)) {
                Ok(bytes) => {
                    if sha256_hex(&bytes) != x.checksum {
                        v.push(format!("artifact {}: checksum mismatch", x.id));
                    }
                    if x.media_class.is_text() {
                        match String::from_utf8(bytes) {
                            Ok(t) => {
                                texts.insert(x.id, t);
                            }
                            Err(_) => v.push(format!("artifact {}: text is not UTF-8", x.id)),
                        }
                    }
                }
                Err(_) => v.push(format!("artifact {}: unreadable file", x.id)),
            }
        }
    }

    let thread_ids: HashSet<Uuid> = doc.threads.iter().map(|t| t.id).collect();
    for t in &doc.threads {
        if !seen.insert(t.id) {
            v.push(format!("duplicate id {}", t.id));
        }
        for parent in t.merged_from.iter().chain(t.branched_from.iter()) {
            if !thread_ids.contains(parent) {
                v.push(format!("thread {}: lineage references missing thread {parent}", t.id));
            }
        }
        for (index, entry) in t.evidence.iter().enumerate() {
            let EntryItem::Evidence { target, timing } = &entry.item else {
                continue;
            };
            let at = format!("thread {} entry {index}", t.id);
            let Some(activity) = project.activity(target.activity_id) else {
                v.push(format!("{at}: activity {} not in bundle", target.activity_id));
                continue;
            };
            if *timing != classify_timing(activity.occurred_at, t.created_at) {
                v.push(format!("{at}: timing disagrees with timestamps"));
            }
            if let Some(artifact_id) = target.artifact_id {
                if !activity.artifacts.iter().any(|x| x.id == artifact_id) {
                    v.push(format!("{at}: artifact {artifact_id} not in bundle"));
                    continue;
                }
            }
            if let (Some(fragment), Some(artifact_id)) = (&target.fragment, target.artifact_id) {
                if !texts.get(&artifact_id).is_some_and(|text| fragment.matches(text)) {
                    v.push(format!("{at}: fragment does not match bundled text"));
                }
            }
        }
        if t.path != thread_path(&t.evidence) {
            v.push(format!("thread {}: path disagrees with evidence", t.id));
        }
    }

    let mut leak_sources: Vec<(String, String)> = doc
        .metadata_strings()
        .into_iter()
        .map(|s| (BUNDLE_FILE.to_string(), s.to_string()))
        .collect();
    for a in &doc.activities {
        for x in &a.artifacts {
            if let Some(text) = texts.get(&x.id) {
                leak_sources.push((x.file_ref.clone(), text.clone()));
            }
        }
    }
    for r in &doc.reports {
        let Some(text) = read_text(&r.path) else {
            v.push(format!("report {}: {} missing or not UTF-8", r.id, r.path));
            continue;
        };
        let index: Option<ReportIndex> = read_text(&r.index_path)
            .and_then(|raw| serde_json::from_str(&raw).ok());
        match index {
            None => v.push(format!("report {}: index {} missing or unreadable", r.id, r.index_path)),
            Some(index) => {
                for placed in index.placed() {
                    if let Err(e) = resolve_citation(&project, &placed.citation) {
                        v.push(format!("report {}: citation at {} does not resolve: {e}", r.id, placed.char_offset));
                    }
                }
                if index != index_text(&project, r.id, &text) {
                    v.push(format!("report {}: index is stale", r.id));
                }
                leak_sources.extend(
                    index_strings(&index)
                        .into_iter()
                        .map(|s| (r.index_path.clone(), s)),
                );
            }
        }
        leak_sources.push((r.path.clone(), text));
    }
    let mut leaked: BTreeSet<&str> = BTreeSet::new();
    for (source, text) in &leak_sources {
        if doc.redaction.finds_name_in(text) {
            leaked.insert(source);
        }
    }
    for source in leaked {
        v.push(format!("registered name found in {source}"));
    }
}
