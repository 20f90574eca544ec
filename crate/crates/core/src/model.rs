//! Domain types shared by every part of the toolkit.
//!
//! A [`Project`] owns activities (dated research events), the artifacts
//! recorded under them, the threads that curate evidence out of both, and
//! the bookkeeping needed for export (alias registry, reports).

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, SecondsFormat, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use uuid::Uuid;

/// Artifact kinds every new project starts with.
pub const SEED_KINDS: &[&str] = &[
    "transcript",
    "sketchbook-page",
    "memo",
    "notes",
    "screenshot",
    "recording",
    "email",
    "photograph",
    "sketch",
    "link",
];

/// A UTC instant with whole-second precision.
///
/// Serialized as `YYYY-MM-DDTHH:MM:SSZ` so that string order equals time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(DateTime<Utc>);

impl Timestamp {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self(at.trunc_subsecs(0))
    }

    pub fn now() -> Self {
        Self::new(Utc::now())
    }

    pub fn from_unix(secs: i64) -> Option<Self> {
        Utc.timestamp_opt(secs, 0).single().map(Self)
    }

    pub fn unix(&self) -> i64 {
        self.0.timestamp()
    }

    pub fn as_datetime(&self) -> DateTime<Utc> {
        self.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_rfc3339_opts(SecondsFormat::Secs, true))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp '{0}' (expected ISO-8601, e.g. 2021-06-01 or 2021-06-01T09:30:00Z)")]
pub struct TimestampParseError(pub String);

impl FromStr for Timestamp {
    type Err = TimestampParseError;

    /// Accepts RFC 3339 with any offset, or a bare date (midnight UTC).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Ok(Self::new(dt.with_timezone(&Utc)));
        }
        if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            let dt = date.and_hms_opt(0, 0, 0).expect("midnight is valid");
            return Ok(Self::new(Utc.from_utc_datetime(&dt)));
        }
        Err(TimestampParseError(s.to_string()))
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(deserializer)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

/// Source of "now" and of fresh entity identifiers.
///
/// `Context::system()` uses the wall clock and random v4 ids. A fixed context
/// derives ids from a seed and a counter so whole sessions replay exactly.
#[derive(Debug, Clone)]
pub struct Context {
    now: Option<Timestamp>,
    seed: Option<[u8; 32]>,
    minted: u64,
}

impl Context {
    pub fn system() -> Self {
        Self {
            now: None,
            seed: None,
            minted: 0,
        }
    }

    /// Frozen clock with deterministic ids derived from `seed`.
    pub fn fixed(now: Timestamp, seed: &[u8]) -> Self {
        Self {
            now: Some(now),
            seed: Some(Sha256::digest(seed).into()),
            minted: 0,
        }
    }

    /// Deterministic ids, wall clock.
    pub fn seeded(seed: &[u8]) -> Self {
        Self {
            now: None,
            seed: Some(Sha256::digest(seed).into()),
            minted: 0,
        }
    }

    pub fn set_now(&mut self, now: Timestamp) {
        self.now = Some(now);
    }

    pub fn now(&self) -> Timestamp {
        self.now.unwrap_or_else(Timestamp::now)
    }

    pub fn mint_id(&mut self) -> Uuid {
        match self.seed {
            None => Uuid::new_v4(),
            Some(seed) => {
                let mut hasher = Sha256::new();
                hasher.update(seed);
                hasher.update(self.minted.to_be_bytes());
                self.minted += 1;
                let digest = hasher.finalize();
                let mut bytes = [0u8; 16];
                bytes.copy_from_slice(&digest[..16]);
                uuid::Builder::from_random_bytes(bytes).into_uuid()
            }
        }
    }
}

/// A project name must embed verbatim in a citation: lowercase letters,
/// digits and hyphens only.
pub fn is_valid_project_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub name: String,
    pub title: String,
    pub created_at: Timestamp,
    pub activities: Vec<Activity>,
    pub threads: Vec<Thread>,
    pub tag_vocabulary: Vec<Tag>,
    pub kind_vocabulary: Vec<ArtifactKind>,
    pub alias_registry: Vec<AliasEntry>,
    pub reports: Vec<ReportRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activity {
    pub id: Uuid,
    pub title: String,
    /// When the research event happened.
    pub occurred_at: Timestamp,
    /// When it was entered into the repository.
    pub recorded_at: Timestamp,
    pub tags: BTreeSet<String>,
    pub private: bool,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub id: Uuid,
    pub kind: String,
    pub description: String,
    pub tags: BTreeSet<String>,
    /// Path relative to the repository root, always `files/<id>.<ext>`.
    pub file_ref: String,
    pub media_class: MediaClass,
    /// Lowercase hex SHA-256 of the stored bytes.
    pub checksum: String,
    pub private: bool,
    /// Binary media cannot be redacted; they only leave the repository when
    /// explicitly cleared.
    pub cleared_for_export: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaClass {
    Text,
    Image,
    Audio,
    Video,
    Document,
}

impl MediaClass {
    /// Media class for an allowed file extension, case-insensitive.
    pub fn from_extension(ext: &str) -> Option<Self> {
        match ext.to_ascii_lowercase().as_str() {
            "txt" | "md" | "csv" => Some(Self::Text),
            "png" | "jpg" | "jpeg" | "gif" => Some(Self::Image),
            "mp3" | "wav" => Some(Self::Audio),
            "mp4" => Some(Self::Video),
            "pdf" => Some(Self::Document),
            _ => None,
        }
    }

    pub fn is_text(self) -> bool {
        self == Self::Text
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Text => "text",
            Self::Image => "image",
            Self::Audio => "audio",
            Self::Video => "video",
            Self::Document => "document",
        }
    }
}

pub const ALLOWED_EXTENSIONS: &[&str] = &[
    "txt", "md", "pdf", "png", "jpg", "jpeg", "gif", "mp3", "wav", "mp4", "csv",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactKind {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tag {
    pub label: String,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreadStatus {
    Active,
    DeadEnd,
    MergedAway,
}

impl fmt::Display for ThreadStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Active => "active",
            Self::DeadEnd => "dead_end",
            Self::MergedAway => "merged_away",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thread {
    pub id: Uuid,
    pub name: String,
    pub description: String,
    pub created_at: Timestamp,
    pub status: ThreadStatus,
    pub evidence: Vec<EvidenceEntry>,
    pub merged_from: BTreeSet<Uuid>,
    pub branched_from: Option<Uuid>,
}

impl Thread {
    pub fn is_active(&self) -> bool {
        self.status == ThreadStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Timing {
    /// The activity happened before the thread existed.
    Retroactive,
    Forward,
}

/// Ties count as forward.
pub fn classify_timing(activity_occurred_at: Timestamp, thread_created_at: Timestamp) -> Timing {
    if activity_occurred_at < thread_created_at {
        Timing::Retroactive
    } else {
        Timing::Forward
    }
}

/// One line in a thread: either a piece of evidence or a note written by a
/// lifecycle operation (merge, dead end).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceEntry {
    pub item: EntryItem,
    pub rationale: String,
    pub added_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntryItem {
    Evidence {
        target: EvidenceTarget,
        timing: Timing,
    },
    Note {
        note: NoteKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoteKind {
    Merge,
    DeadEnd,
}

impl EvidenceEntry {
    pub fn target(&self) -> Option<&EvidenceTarget> {
        match &self.item {
            EntryItem::Evidence { target, .. } => Some(target),
            EntryItem::Note { .. } => None,
        }
    }

    pub fn timing(&self) -> Option<Timing> {
        match &self.item {
            EntryItem::Evidence { timing, .. } => Some(*timing),
            EntryItem::Note { .. } => None,
        }
    }

    pub fn is_note(&self) -> bool {
        matches!(self.item, EntryItem::Note { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceGranularity {
    Activity,
    Artifact,
    Fragment,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvidenceTarget {
    pub granularity: EvidenceGranularity,
    pub activity_id: Uuid,
    pub artifact_id: Option<Uuid>,
    pub fragment: Option<Fragment>,
}

impl EvidenceTarget {
    pub fn activity(activity_id: Uuid) -> Self {
        Self {
            granularity: EvidenceGranularity::Activity,
            activity_id,
            artifact_id: None,
            fragment: None,
        }
    }

    pub fn artifact(activity_id: Uuid, artifact_id: Uuid) -> Self {
        Self {
            granularity: EvidenceGranularity::Artifact,
            activity_id,
            artifact_id: Some(artifact_id),
            fragment: None,
        }
    }

    pub fn fragment(activity_id: Uuid, artifact_id: Uuid, fragment: Fragment) -> Self {
        Self {
            granularity: EvidenceGranularity::Fragment,
            activity_id,
            artifact_id: Some(artifact_id),
            fragment: Some(fragment),
        }
    }

    /// Whether the optional fields agree with `granularity`.
    pub fn is_well_formed(&self) -> bool {
        match self.granularity {
            EvidenceGranularity::Activity => self.artifact_id.is_none() && self.fragment.is_none(),
            EvidenceGranularity::Artifact => self.artifact_id.is_some() && self.fragment.is_none(),
            EvidenceGranularity::Fragment => self.artifact_id.is_some() && self.fragment.is_some(),
        }
    }
}

/// A highlighted span of a text artifact. Offsets count characters, not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment {
    pub start: usize,
    pub end: usize,
    pub quoted_text: String,
}

impl Fragment {
    /// Cut `[start, end)` out of `text`.
    pub fn extract(text: &str, start: usize, end: usize) -> Option<Self> {
        if start >= end {
            return None;
        }
        let quoted = char_slice(text, start, end)?;
        Some(Self {
            start,
            end,
            quoted_text: quoted.to_string(),
        })
    }

    /// True when `text` still holds `quoted_text` at the recorded offsets.
    pub fn matches(&self, text: &str) -> bool {
        self.start < self.end
            && char_slice(text, self.start, self.end) == Some(self.quoted_text.as_str())
    }
}

/// Substring by character offsets; `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(i, _)| i).chain(Some(text.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&text[begin..finish])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub full_name: String,
    pub replacement: String,
}

/// First letter of each whitespace-separated word, uppercased.
pub fn initials(full_name: &str) -> String {
    full_name
        .split_whitespace()
        .filter_map(|word| word.chars().next())
        .flat_map(char::to_uppercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRef {
    pub id: Uuid,
    /// Relative to the repository root, under `reports/`.
    pub path: String,
    pub title: String,
}

/// Anything a citation or evidence entry can point at.
#[derive(Debug, Clone, Copy)]
pub enum EntityRef<'a> {
    Activity(&'a Activity),
    Artifact {
        activity: &'a Activity,
        artifact: &'a Artifact,
    },
    Thread(&'a Thread),
    Report(&'a ReportRef),
}

impl Project {
    pub fn new(name: impl Into<String>, title: impl Into<String>, created_at: Timestamp) -> Self {
        Self {
            name: name.into(),
            title: title.into(),
            created_at,
            activities: Vec::new(),
            threads: Vec::new(),
            tag_vocabulary: Vec::new(),
            kind_vocabulary: SEED_KINDS
                .iter()
                .map(|label| ArtifactKind {
                    label: (*label).to_string(),
                })
                .collect(),
            alias_registry: Vec::new(),
            reports: Vec::new(),
        }
    }

    pub fn activity(&self, id: Uuid) -> Option<&Activity> {
        self.activities.iter().find(|a| a.id == id)
    }

    pub fn activity_mut(&mut self, id: Uuid) -> Option<&mut Activity> {
        self.activities.iter_mut().find(|a| a.id == id)
    }

    /// Artifact together with the activity that holds it.
    pub fn artifact(&self, id: Uuid) -> Option<(&Activity, &Artifact)> {
        self.activities.iter().find_map(|activity| {
            activity
                .artifacts
                .iter()
                .find(|a| a.id == id)
                .map(|artifact| (activity, artifact))
        })
    }

    pub fn artifact_mut(&mut self, id: Uuid) -> Option<&mut Artifact> {
        self.activities
            .iter_mut()
            .flat_map(|a| a.artifacts.iter_mut())
            .find(|a| a.id == id)
    }

    pub fn thread(&self, id: Uuid) -> Option<&Thread> {
        self.threads.iter().find(|t| t.id == id)
    }

    pub fn thread_mut(&mut self, id: Uuid) -> Option<&mut Thread> {
        self.threads.iter_mut().find(|t| t.id == id)
    }

    pub fn report(&self, id: Uuid) -> Option<&ReportRef> {
        self.reports.iter().find(|r| r.id == id)
    }

    pub fn entity(&self, id: Uuid) -> Option<EntityRef<'_>> {
        if let Some(activity) = self.activity(id) {
            return Some(EntityRef::Activity(activity));
        }
        if let Some((activity, artifact)) = self.artifact(id) {
            return Some(EntityRef::Artifact { activity, artifact });
        }
        if let Some(thread) = self.thread(id) {
            return Some(EntityRef::Thread(thread));
        }
        self.report(id).map(EntityRef::Report)
    }

    /// Every entity id in the project, in no particular order.
    pub fn all_ids(&self) -> impl Iterator<Item = Uuid> + '_ {
        self.activities
            .iter()
            .flat_map(|a| std::iter::once(a.id).chain(a.artifacts.iter().map(|x| x.id)))
            .chain(self.threads.iter().map(|t| t.id))
            .chain(self.reports.iter().map(|r| r.id))
    }

    /// Canonical label for `label` if the vocabulary knows it (case-insensitive).
    pub fn find_tag(&self, label: &str) -> Option<&Tag> {
        let wanted = label.to_lowercase();
        self.tag_vocabulary
            .iter()
            .find(|t| t.label.to_lowercase() == wanted)
    }

    /// Returns the canonical spelling, adding `label` to the vocabulary if new.
    pub fn intern_tag(&mut self, label: &str) -> String {
        if let Some(tag) = self.find_tag(label) {
            return tag.label.clone();
        }
        self.tag_vocabulary.push(Tag {
            label: label.to_string(),
            note: None,
        });
        self.tag_vocabulary.sort_by(|a, b| a.label.cmp(&b.label));
        label.to_string()
    }

    pub fn intern_kind(&mut self, label: &str) {
        if !self.kind_vocabulary.iter().any(|k| k.label == label) {
            self.kind_vocabulary.push(ArtifactKind {
                label: label.to_string(),
            });
        }
    }

    /// Inserts keeping activities ordered by id.
    pub(crate) fn insert_activity(&mut self, activity: Activity) {
        let at = self.activities.partition_point(|a| a.id < activity.id);
        self.activities.insert(at, activity);
    }

    pub(crate) fn insert_thread(&mut self, thread: Thread) {
        let at = self.threads.partition_point(|t| t.id < thread.id);
        self.threads.insert(at, thread);
    }

    pub(crate) fn insert_report(&mut self, report: ReportRef) {
        let at = self.reports.partition_point(|r| r.id < report.id);
        self.reports.insert(at, report);
    }

    /// Rewrites every evidence entry's timing from the current timestamps.
    /// A no-op on a valid project.
    pub fn recompute_timings(&mut self) {
        let occurred: std::collections::HashMap<Uuid, Timestamp> = self
            .activities
            .iter()
            .map(|a| (a.id, a.occurred_at))
            .collect();
        for thread in &mut self.threads {
            let created = thread.created_at;
            for entry in &mut thread.evidence {
                if let EntryItem::Evidence { target, timing } = &mut entry.item {
                    if let Some(at) = occurred.get(&target.activity_id) {
                        *timing = classify_timing(*at, created);
                    }
                }
            }
        }
    }

    /// Records a new activity and returns its id.
    pub fn add_activity(
        &mut self,
        ctx: &mut Context,
        title: &str,
        occurred_at: Timestamp,
        tags: &[String],
        private: bool,
    ) -> crate::Result<Uuid> {
        if title.trim().is_empty() {
            return Err(crate::Error::MissingField("title"));
        }
        let id = ctx.mint_id();
        let tags = tags.iter().map(|t| self.intern_tag(t)).collect();
        self.insert_activity(Activity {
            id,
            title: title.to_string(),
            occurred_at,
            recorded_at: ctx.now(),
            tags,
            private,
            artifacts: Vec::new(),
        });
        Ok(id)
    }

    /// Adds tags to an activity or artifact.
    pub fn tag_entity(&mut self, id: Uuid, labels: &[String]) -> crate::Result<()> {
        if labels.iter().any(|l| l.trim().is_empty()) {
            return Err(crate::Error::MissingField("tag label"));
        }
        let known = self.activity(id).is_some() || self.artifact(id).is_some();
        if !known {
            return Err(crate::Error::NotFound {
                what: "activity or artifact",
                id: id.to_string(),
            });
        }
        let canonical: Vec<String> = labels.iter().map(|l| self.intern_tag(l)).collect();
        let tags = if let Some(activity) = self.activity_mut(id) {
            &mut activity.tags
        } else {
            &mut self.artifact_mut(id).expect("checked above").tags
        };
        tags.extend(canonical);
        Ok(())
    }

    /// Attaches or replaces the meaning note of a vocabulary tag.
    pub fn annotate_tag(&mut self, label: &str, note: Option<String>) {
        let canonical = self.intern_tag(label);
        if let Some(tag) = self.tag_vocabulary.iter_mut().find(|t| t.label == canonical) {
            tag.note = note;
        }
    }

    pub fn set_private(&mut self, id: Uuid, private: bool) -> crate::Result<()> {
        if let Some(activity) = self.activity_mut(id) {
            activity.private = private;
            return Ok(());
        }
        match self.artifact_mut(id) {
            Some(artifact) => {
                artifact.private = private;
                Ok(())
            }
            None => Err(crate::Error::NotFound {
                what: "activity or artifact",
                id: id.to_string(),
            }),
        }
    }

    pub fn set_cleared_for_export(&mut self, artifact_id: Uuid, cleared: bool) -> crate::Result<()> {
        match self.artifact_mut(artifact_id) {
            Some(artifact) => {
                artifact.cleared_for_export = cleared;
                Ok(())
            }
            None => Err(crate::Error::NotFound {
                what: "artifact",
                id: artifact_id.to_string(),
            }),
        }
    }

    /// Removes an activity and its artifacts from the manifest. Threads that
    /// cite it are left dangling and will fail validation.
    pub fn remove_activity(&mut self, id: Uuid) -> Option<Activity> {
        let at = self.activities.iter().position(|a| a.id == id)?;
        Some(self.activities.remove(at))
    }
}
