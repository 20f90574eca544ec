//! Manuscript ingestion and citation indexing.
//!
//! A manuscript is plain text with `#`-style headings. Its sections are the
//! headings of the shallowest level present; text before the first of them is
//! the preamble (ordinal 0), listed only when it holds a placed citation.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::citation::{resolve_citation, scan_citations, Citation};
use crate::model::{Context, Project, ReportRef};
use crate::store::{WriteSession, REPORTS_DIR};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportIndex {
    pub report_id: Uuid,
    pub sections: Vec<Section>,
    pub broken: Vec<BrokenCitation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub heading: String,
    pub ordinal: usize,
    pub citations: Vec<PlacedCitation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedCitation {
    pub citation: Citation,
    /// Character offset of the citation in the manuscript.
    pub char_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokenCitation {
    pub text: String,
    pub position: usize,
    pub reason: String,
}

impl ReportIndex {
    pub fn placed_count(&self) -> usize {
        self.sections.iter().map(|s| s.citations.len()).sum()
    }

    pub fn placed(&self) -> impl Iterator<Item = &PlacedCitation> {
        self.sections.iter().flat_map(|s| s.citations.iter())
    }
}

/// Copies a UTF-8 manuscript into `reports/` and records it.
pub fn ingest_report(
    session: &mut WriteSession<'_>,
    project: &mut Project,
    ctx: &mut Context,
    path: &Path,
    title: &str,
) -> Result<Uuid> {
    if title.trim().is_empty() {
        return Err(Error::MissingField("title"));
    }
    let bytes = fs::read(path).map_err(|source| crate::store::StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if std::str::from_utf8(&bytes).is_err() {
        return Err(Error::NotUtf8 {
            path: path.to_path_buf(),
        });
    }
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .filter(|e| !e.is_empty() && e.chars().all(|c| c.is_ascii_alphanumeric()))
        .unwrap_or_else(|| "md".to_string());
    let id = ctx.mint_id();
    let rel = format!("{REPORTS_DIR}/{id}.{ext}");
    session.put_file(&rel, &bytes)?;
    project.insert_report(ReportRef {
        id,
        path: rel,
        title: title.to_string(),
    });
    Ok(id)
}

/// Level of an ATX heading line (`# Title` is 1), or `None`.
fn heading_level(line: &str) -> Option<(usize, &str)> {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return None;
    }
    let level = trimmed.chars().take_while(|&c| c == '#').count();
    if level == 0 || level > 6 {
        return None;
    }
    let rest = &trimmed[level..];
    if !rest.is_empty() && !rest.starts_with([' ', '\t']) {
        return None;
    }
    let title = rest.trim().trim_end_matches('#').trim_end();
    Some((level, title))
}

/// Section boundaries as (start char offset, heading) in document order.
fn section_starts(text: &str) -> Vec<(usize, String)> {
    let mut headings = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some((level, title)) = heading_level(line.trim_end_matches(['\n', '\r'])) {
            headings.push((level, offset, title.to_string()));
        }
        offset += line.chars().count();
    }
    let Some(top) = headings.iter().map(|(l, _, _)| *l).min() else {
        return Vec::new();
    };
    headings
        .into_iter()
        .filter(|(l, _, _)| *l == top)
        .map(|(_, at, title)| (at, title))
        .collect()
}

/// Scans `text` for citations, resolves each against `project` and buckets
/// them by section. Pure: the same inputs give the same index.
pub fn index_text(project: &Project, report_id: Uuid, text: &str) -> ReportIndex {
    let starts = section_starts(text);
    let mut sections: Vec<Section> = std::iter::once(Section {
        heading: String::new(),
        ordinal: 0,
        citations: Vec::new(),
    })
    .chain(starts.iter().enumerate().map(|(i, (_, heading))| Section {
        heading: heading.clone(),
        ordinal: i + 1,
        citations: Vec::new(),
    }))
    .collect();
    let mut broken = Vec::new();

    for hit in scan_citations(text) {
        let reason = match &hit.parsed {
            Err(e) => Some(e.reason.clone()),
            Ok(parsed) => resolve_citation(project, &parsed.citation)
                .err()
                .map(|e| e.to_string()),
        };
        match (reason, hit.parsed) {
            (None, Ok(parsed)) => {
                let section = starts.partition_point(|(at, _)| *at <= hit.start);
                sections[section].citations.push(PlacedCitation {
                    citation: parsed.citation,
                    char_offset: hit.start,
                });
            }
            (reason, _) => broken.push(BrokenCitation {
                text: hit.text,
                position: hit.start,
                reason: reason.unwrap_or_default(),
            }),
        }
    }
    if sections[0].citations.is_empty() {
        sections.remove(0);
    }
    ReportIndex {
        report_id,
        sections,
        broken,
    }
}

pub fn index_report(
    project: &Project,
    repo: &crate::store::Repository,
    report_id: Uuid,
) -> Result<ReportIndex> {
    let report = project.report(report_id).ok_or_else(|| Error::NotFound {
        what: "report",
        id: report_id.to_string(),
    })?;
    let text = repo.read_text(&report.path)?;
    Ok(index_text(project, report_id, &text))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportVerification {
    pub pass: bool,
    pub problems: Vec<String>,
    pub index: ReportIndex,
}

/// Passes when every citation resolves and none exposes a private entity.
pub fn verify_index(project: &Project, index: ReportIndex) -> ReportVerification {
    let mut problems: Vec<String> = index
        .broken
        .iter()
        .map(|b| format!("broken citation {} at character {}: {}", b.text, b.position, b.reason))
        .collect();
    for placed in index.placed() {
        let Ok(target) = resolve_citation(project, &placed.citation) else {
            continue;
        };
        if let Some((kind, id)) = target.private_entity() {
            problems.push(format!(
                "cites private {kind} {id} at character {}",
                placed.char_offset
            ));
        }
    }
    ReportVerification {
        pass: problems.is_empty(),
        problems,
        index,
    }
}

pub fn verify_report(
    project: &Project,
    repo: &crate::store::Repository,
    report_id: Uuid,
) -> Result<ReportVerification> {
    Ok(verify_index(project, index_report(project, repo, report_id)?))
}
