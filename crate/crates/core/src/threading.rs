//! Research threads: curated, annotated sequences of evidence.
//!
//! All operations check their preconditions before touching the project, so
//! a rejected call leaves it unchanged.

use std::cmp::Ordering;

use uuid::Uuid;

use crate::model::{
    classify_timing, Context, EntryItem, EvidenceEntry, EvidenceGranularity, EvidenceTarget,
    Fragment, NoteKind, Project, Thread, ThreadStatus, Timestamp,
};
use crate::store::Repository;
use crate::{Error, Result};

pub fn create_thread(
    project: &mut Project,
    ctx: &mut Context,
    name: &str,
    description: &str,
) -> Result<Uuid> {
    if name.trim().is_empty() {
        return Err(Error::MissingField("name"));
    }
    if description.trim().is_empty() {
        return Err(Error::MissingField("description"));
    }
    let id = ctx.mint_id();
    project.insert_thread(Thread {
        id,
        name: name.to_string(),
        description: description.to_string(),
        created_at: ctx.now(),
        status: ThreadStatus::Active,
        evidence: Vec::new(),
        merged_from: Default::default(),
        branched_from: None,
    });
    Ok(id)
}

fn active_thread(project: &Project, id: Uuid) -> Result<&Thread> {
    let thread = project.thread(id).ok_or_else(|| Error::NotFound {
        what: "thread",
        id: id.to_string(),
    })?;
    if !thread.is_active() {
        return Err(Error::ThreadClosed {
            id: id.to_string(),
            status: thread.status,
        });
    }
    Ok(thread)
}

/// Occurrence time of the activity the target points into.
fn resolve_target(project: &Project, target: &EvidenceTarget) -> Result<Timestamp> {
    if !target.is_well_formed() {
        return Err(Error::MissingField(match target.granularity {
            EvidenceGranularity::Activity => "activity-only target",
            EvidenceGranularity::Artifact => "artifact id",
            EvidenceGranularity::Fragment => "fragment",
        }));
    }
    let activity = project
        .activity(target.activity_id)
        .ok_or_else(|| Error::NotFound {
            what: "activity",
            id: target.activity_id.to_string(),
        })?;
    if let Some(artifact_id) = target.artifact_id {
        let Some((owner, artifact)) = project.artifact(artifact_id) else {
            return Err(Error::NotFound {
                what: "artifact",
                id: artifact_id.to_string(),
            });
        };
        if owner.id != activity.id {
            return Err(Error::ArtifactOutsideActivity {
                artifact: artifact_id.to_string(),
                activity: activity.id.to_string(),
            });
        }
        if let Some(fragment) = &target.fragment {
            if !artifact.media_class.is_text() {
                return Err(Error::NotText(artifact_id.to_string()));
            }
            let len = fragment.quoted_text.chars().count();
            if fragment.start >= fragment.end || fragment.end - fragment.start != len {
                return Err(Error::InvalidFragment {
                    start: fragment.start,
                    end: fragment.end,
                    len,
                });
            }
        }
    }
    Ok(activity.occurred_at)
}

/// Appends evidence with a mandatory rationale. Timing is derived from the
/// activity's occurrence and the thread's creation.
pub fn add_evidence(
    project: &mut Project,
    ctx: &mut Context,
    thread_id: Uuid,
    target: EvidenceTarget,
    rationale: &str,
) -> Result<()> {
    if rationale.trim().is_empty() {
        return Err(Error::MissingField("rationale"));
    }
    let created_at = active_thread(project, thread_id)?.created_at;
    let occurred_at = resolve_target(project, &target)?;
    let entry = EvidenceEntry {
        item: EntryItem::Evidence {
            target,
            timing: classify_timing(occurred_at, created_at),
        },
        rationale: rationale.to_string(),
        added_at: ctx.now(),
    };
    project
        .thread_mut(thread_id)
        .expect("checked above")
        .evidence
        .push(entry);
    Ok(())
}

pub fn remove_evidence(project: &mut Project, thread_id: Uuid, index: usize) -> Result<EvidenceEntry> {
    let len = active_thread(project, thread_id)?.evidence.len();
    if index >= len {
        return Err(Error::IndexOutOfRange { index, len });
    }
    Ok(project
        .thread_mut(thread_id)
        .expect("checked above")
        .evidence
        .remove(index))
}

/// Highlights `[start, end)` (characters) of a text artifact.
pub fn extract_fragment(
    project: &Project,
    repo: &Repository,
    artifact_id: Uuid,
    start: usize,
    end: usize,
) -> Result<Fragment> {
    let (_, artifact) = project.artifact(artifact_id).ok_or_else(|| Error::NotFound {
        what: "artifact",
        id: artifact_id.to_string(),
    })?;
    let text = repo.artifact_text(artifact)?;
    fragment_of(&text, start, end)
}

/// Text-level half of [`extract_fragment`].
pub fn fragment_of(text: &str, start: usize, end: usize) -> Result<Fragment> {
    Fragment::extract(text, start, end).ok_or_else(|| Error::InvalidFragment {
        start,
        end,
        len: text.chars().count(),
    })
}

/// Prefix put in front of each rationale carried over by a merge.
pub fn merge_provenance(source: &Thread) -> String {
    format!("[merged from \"{}\" {}] ", source.name, source.id)
}

/// Whether `to` is reachable from `from` along merged_from/branched_from links.
fn lineage_reaches(project: &Project, from: Uuid, to: Uuid) -> bool {
    let mut seen = std::collections::HashSet::new();
    let mut stack = vec![from];
    while let Some(id) = stack.pop() {
        if id == to {
            return true;
        }
        if !seen.insert(id) {
            continue;
        }
        if let Some(t) = project.thread(id) {
            stack.extend(t.merged_from.iter().copied().chain(t.branched_from));
        }
    }
    false
}

/// Moves the absorbed thread's evidence to the end of the absorber, tagging
/// each moved rationale with its origin, and closes the absorbed thread.
pub fn merge_threads(
    project: &mut Project,
    ctx: &mut Context,
    absorber_id: Uuid,
    absorbed_id: Uuid,
    rationale: &str,
) -> Result<()> {
    if absorber_id == absorbed_id {
        return Err(Error::SelfMerge(absorber_id.to_string()));
    }
    if rationale.trim().is_empty() {
        return Err(Error::MissingField("rationale"));
    }
    let absorber_created = active_thread(project, absorber_id)?.created_at;
    let absorbed = active_thread(project, absorbed_id)?;
    if lineage_reaches(project, absorbed_id, absorber_id) {
        return Err(Error::LineageCycle {
            absorber: absorber_id.to_string(),
            absorbed: absorbed_id.to_string(),
        });
    }
    let prefix = merge_provenance(absorbed);
    let now = ctx.now();

    let occurred = |target: &EvidenceTarget| {
        project
            .activity(target.activity_id)
            .map(|a| a.occurred_at)
    };
    // Timing is relative to the thread that now owns the entry.
    let moved: Vec<EvidenceEntry> = absorbed
        .evidence
        .iter()
        .map(|entry| {
            let item = match &entry.item {
                EntryItem::Evidence { target, timing } => EntryItem::Evidence {
                    target: target.clone(),
                    timing: occurred(target)
                        .map(|at| classify_timing(at, absorber_created))
                        .unwrap_or(*timing),
                },
                note => note.clone(),
            };
            EvidenceEntry {
                item,
                rationale: format!("{prefix}{}", entry.rationale),
                added_at: entry.added_at,
            }
        })
        .collect();

    let absorbed = project.thread_mut(absorbed_id).expect("checked above");
    absorbed.evidence.clear();
    absorbed.status = ThreadStatus::MergedAway;

    let absorber = project.thread_mut(absorber_id).expect("checked above");
    absorber.evidence.extend(moved);
    absorber.evidence.push(EvidenceEntry {
        item: EntryItem::Note {
            note: NoteKind::Merge,
        },
        rationale: format!("{prefix}{rationale}"),
        added_at: now,
    });
    absorber.merged_from.insert(absorbed_id);
    Ok(())
}

/// New active thread that records `source_id` as its parent. Evidence is not copied.
pub fn branch_thread(
    project: &mut Project,
    ctx: &mut Context,
    source_id: Uuid,
    name: &str,
    description: &str,
) -> Result<Uuid> {
    if project.thread(source_id).is_none() {
        return Err(Error::NotFound {
            what: "thread",
            id: source_id.to_string(),
        });
    }
    let id = create_thread(project, ctx, name, description)?;
    project.thread_mut(id).expect("just created").branched_from = Some(source_id);
    Ok(id)
}

pub fn mark_dead_end(
    project: &mut Project,
    ctx: &mut Context,
    thread_id: Uuid,
    rationale: &str,
) -> Result<()> {
    if rationale.trim().is_empty() {
        return Err(Error::MissingField("rationale"));
    }
    active_thread(project, thread_id)?;
    let thread = project.thread_mut(thread_id).expect("checked above");
    thread.evidence.push(EvidenceEntry {
        item: EntryItem::Note {
            note: NoteKind::DeadEnd,
        },
        rationale: rationale.to_string(),
        added_at: ctx.now(),
    });
    thread.status = ThreadStatus::DeadEnd;
    Ok(())
}

/// A thread-seeding candidate with the time used to order it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedCandidate {
    pub target: EvidenceTarget,
    pub occurred_at: Timestamp,
}

/// Every activity and artifact carrying `tag` (case-insensitive), oldest
/// first. At equal times activities precede artifacts, then ids break ties.
pub fn seed_from_tag(project: &Project, tag: &str) -> Vec<SeedCandidate> {
    let wanted = tag.to_lowercase();
    let has = |tags: &std::collections::BTreeSet<String>| tags.iter().any(|t| t.to_lowercase() == wanted);
    let mut out = Vec::new();
    for activity in &project.activities {
        if has(&activity.tags) {
            out.push(SeedCandidate {
                target: EvidenceTarget::activity(activity.id),
                occurred_at: activity.occurred_at,
            });
        }
        for artifact in &activity.artifacts {
            if has(&artifact.tags) {
                out.push(SeedCandidate {
                    target: EvidenceTarget::artifact(activity.id, artifact.id),
                    occurred_at: activity.occurred_at,
                });
            }
        }
    }
    out.sort_by(seed_order);
    out
}

fn seed_order(a: &SeedCandidate, b: &SeedCandidate) -> Ordering {
    a.occurred_at
        .cmp(&b.occurred_at)
        .then(a.target.granularity.cmp(&b.target.granularity))
        .then(a.target.activity_id.cmp(&b.target.activity_id))
        .then(a.target.artifact_id.cmp(&b.target.artifact_id))
}
