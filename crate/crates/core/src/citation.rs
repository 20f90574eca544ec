//! Deep-link citations binding manuscript text to evidence.
//!
//! Canonical form (no whitespace anywhere):
//!
//! ```text
//! \trrracer{<project>}{<view>}{<granularity>}{<id>}
//!
//! view        = "overview" | "paper"
//! granularity = "activity" | "artifact" | "thread"
//! field       = 1*(any character except "{", "}" and whitespace)
//! ```
//!
//! The parser tolerates whitespace around the braces and around field values;
//! such input parses but is flagged non-canonical. Positions in errors are
//! character offsets into the parsed string.
//!
//! The URL form is `<base>/?project=<p>&view=<v>&granularity=<g>&id=<id>` with
//! every byte outside `A-Z a-z 0-9 - . _ ~` percent-encoded.

use std::fmt;
use std::str::FromStr;

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::model::{Activity, Artifact, Project, Thread};

pub const CITATION_MACRO: &str = "\\trrracer";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Overview,
    Paper,
}

impl View {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Overview => "overview",
            Self::Paper => "paper",
        }
    }
}

impl FromStr for View {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "overview" => Ok(Self::Overview),
            "paper" => Ok(Self::Paper),
            _ => Err(()),
        }
    }
}

/// What a citation points at. Fragments are only reachable through threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CitedGranularity {
    Activity,
    Artifact,
    Thread,
}

impl CitedGranularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Activity => "activity",
            Self::Artifact => "artifact",
            Self::Thread => "thread",
        }
    }
}

impl FromStr for CitedGranularity {
    type Err = ();
    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "activity" => Ok(Self::Activity),
            "artifact" => Ok(Self::Artifact),
            "thread" => Ok(Self::Thread),
            _ => Err(()),
        }
    }
}

impl fmt::Display for CitedGranularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Citation {
    pub project: String,
    pub view: View,
    pub granularity: CitedGranularity,
    pub id: String,
}

impl Citation {
    pub fn new(
        project: impl Into<String>,
        view: View,
        granularity: CitedGranularity,
        id: impl Into<String>,
    ) -> Self {
        Self {
            project: project.into(),
            view,
            granularity,
            id: id.into(),
        }
    }

    /// Whether both free-form fields are usable in the canonical form.
    pub fn is_valid(&self) -> bool {
        is_valid_field(&self.project) && is_valid_field(&self.id)
    }
}

fn is_valid_field(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(|c| c == '{' || c == '}' || c.is_whitespace())
}

impl fmt::Display for Citation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{CITATION_MACRO}{{{}}}{{{}}}{{{}}}{{{}}}",
            self.project,
            self.view.as_str(),
            self.granularity.as_str(),
            self.id
        )
    }
}

pub fn format_citation(citation: &Citation) -> String {
    citation.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed citation at character {position}: {reason}")]
pub struct CitationParseError {
    pub position: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCitation {
    pub citation: Citation,
    /// False when whitespace had to be skipped.
    pub canonical: bool,
}

/// Parses exactly one citation spanning the whole input.
pub fn parse_citation(s: &str) -> Result<ParsedCitation, CitationParseError> {
    let chars: Vec<char> = s.chars().collect();
    let (consumed, parsed) = parse_at(&chars, 0);
    let parsed = parsed?;
    if consumed != chars.len() {
        return Err(CitationParseError {
            position: consumed,
            reason: "trailing characters after citation".into(),
        });
    }
    Ok(parsed)
}

impl FromStr for Citation {
    type Err = CitationParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_citation(s).map(|p| p.citation)
    }
}

const FIELD_NAMES: [&str; 4] = ["project", "view", "granularity", "id"];

/// Parses a citation starting at `start`. Returns how far the parser got
/// (one past the last character it examined as part of the citation) along
/// with the outcome, so a scanner can report the extent of broken citations.
fn parse_at(chars: &[char], start: usize) -> (usize, Result<ParsedCitation, CitationParseError>) {
    let fail = |pos: usize, reason: String| (pos, Err(CitationParseError { position: pos, reason }));
    let macro_chars: Vec<char> = CITATION_MACRO.chars().collect();
    if !chars[start..].starts_with(&macro_chars) {
        return fail(start, format!("expected {CITATION_MACRO}"));
    }
    let mut pos = start + macro_chars.len();
    let mut canonical = true;
    let mut fields: Vec<(usize, String)> = Vec::with_capacity(4);
    for (index, name) in FIELD_NAMES.iter().enumerate() {
        while pos < chars.len() && chars[pos].is_whitespace() {
            canonical = false;
            pos += 1;
        }
        if chars.get(pos) != Some(&'{') {
            return fail(
                pos,
                format!("wrong arity: expected 4 fields, found {index} (missing {name})"),
            );
        }
        pos += 1;
        let open = pos;
        while pos < chars.len() && chars[pos] != '}' && chars[pos] != '{' {
            pos += 1;
        }
        match chars.get(pos) {
            Some('}') => {}
            Some(_) => return fail(pos, format!("unexpected '{{' inside {name} field")),
            None => return fail(pos, format!("unclosed {name} field")),
        }
        let raw: String = chars[open..pos].iter().collect();
        let value = raw.trim();
        if value.len() != raw.len() {
            canonical = false;
        }
        let lead = raw.chars().take_while(|c| c.is_whitespace()).count();
        if value.is_empty() {
            return fail(open, format!("empty {name} field"));
        }
        if let Some(offset) = value.chars().position(char::is_whitespace) {
            return fail(open + lead + offset, format!("whitespace inside {name} field"));
        }
        fields.push((open + lead, value.to_string()));
        pos += 1;
    }
    if chars.get(pos) == Some(&'{') {
        return fail(pos, "wrong arity: more than 4 fields".into());
    }
    let end = pos;
    let [(_, project), (view_pos, view), (gran_pos, granularity), (_, id)]: [(usize, String); 4] =
        fields.try_into().expect("exactly four fields");
    let Ok(view) = view.parse::<View>() else {
        return fail(view_pos, format!("unknown view \"{view}\" (expected overview or paper)"))
            .with_end(end);
    };
    let Ok(granularity) = granularity.parse::<CitedGranularity>() else {
        return fail(
            gran_pos,
            format!("unknown granularity \"{granularity}\" (expected activity, artifact or thread)"),
        )
        .with_end(end);
    };
    (
        end,
        Ok(ParsedCitation {
            citation: Citation {
                project,
                view,
                granularity,
                id,
            },
            canonical,
        }),
    )
}

trait WithEnd {
    fn with_end(self, end: usize) -> Self;
}

impl<T> WithEnd for (usize, T) {
    fn with_end(self, end: usize) -> Self {
        (end, self.1)
    }
}

/// One occurrence of the citation macro in a larger text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationMatch {
    /// Character offset of the backslash.
    pub start: usize,
    /// Character offset one past the citation (or past the point where
    /// parsing gave up).
    pub end: usize,
    pub text: String,
    pub parsed: Result<ParsedCitation, CitationParseError>,
}

/// Finds every occurrence of the macro, well-formed or not. Error positions
/// are relative to the whole text.
pub fn scan_citations(text: &str) -> Vec<CitationMatch> {
    let chars: Vec<char> = text.chars().collect();
    let needle: Vec<char> = CITATION_MACRO.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i + needle.len() <= chars.len() {
        if chars[i..].starts_with(&needle) {
            let (end, parsed) = parse_at(&chars, i);
            let mut end = end.max(i + needle.len()).min(chars.len());
            if parsed.is_err() {
                while end > i + needle.len() && chars[end - 1].is_whitespace() {
                    end -= 1;
                }
            }
            out.push(CitationMatch {
                start: i,
                end,
                text: chars[i..end].iter().collect(),
                parsed,
            });
            i = end;
        } else {
            i += 1;
        }
    }
    out
}

/// Entity a citation resolved to.
#[derive(Debug, Clone, Copy)]
pub enum ResolvedTarget<'a> {
    Activity(&'a Activity),
    Artifact {
        activity: &'a Activity,
        artifact: &'a Artifact,
    },
    Thread(&'a Thread),
}

impl ResolvedTarget<'_> {
    pub fn granularity(&self) -> CitedGranularity {
        match self {
            Self::Activity(_) => CitedGranularity::Activity,
            Self::Artifact { .. } => CitedGranularity::Artifact,
            Self::Thread(_) => CitedGranularity::Thread,
        }
    }

    pub fn id(&self) -> Uuid {
        match self {
            Self::Activity(a) => a.id,
            Self::Artifact { artifact, .. } => artifact.id,
            Self::Thread(t) => t.id,
        }
    }

    /// The private entity this target exposes, if any: the activity itself,
    /// or for an artifact either the artifact or its enclosing activity.
    pub fn private_entity(&self) -> Option<(&'static str, Uuid)> {
        match self {
            Self::Activity(a) if a.private => Some(("activity", a.id)),
            Self::Artifact { artifact, .. } if artifact.private => Some(("artifact", artifact.id)),
            Self::Artifact { activity, .. } if activity.private => Some(("activity", activity.id)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResolveError {
    #[error("citation is for project '{cited}', not '{actual}'")]
    ProjectMismatch { cited: String, actual: String },
    #[error("not found: no {granularity} with id {id}")]
    NotFound {
        granularity: CitedGranularity,
        id: String,
    },
    #[error("granularity mismatch: {id} is a {actual}, cited as {cited}")]
    GranularityMismatch {
        id: String,
        cited: CitedGranularity,
        actual: &'static str,
    },
}

pub fn resolve_citation<'a>(
    project: &'a Project,
    citation: &Citation,
) -> Result<ResolvedTarget<'a>, ResolveError> {
    if citation.project != project.name {
        return Err(ResolveError::ProjectMismatch {
            cited: citation.project.clone(),
            actual: project.name.clone(),
        });
    }
    let not_found = || ResolveError::NotFound {
        granularity: citation.granularity,
        id: citation.id.clone(),
    };
    let id = Uuid::parse_str(&citation.id).map_err(|_| not_found())?;
    let found = match citation.granularity {
        CitedGranularity::Activity => project.activity(id).map(ResolvedTarget::Activity),
        CitedGranularity::Artifact => project
            .artifact(id)
            .map(|(activity, artifact)| ResolvedTarget::Artifact { activity, artifact }),
        CitedGranularity::Thread => project.thread(id).map(ResolvedTarget::Thread),
    };
    if let Some(target) = found {
        return Ok(target);
    }
    let actual = match project.entity(id) {
        Some(crate::model::EntityRef::Activity(_)) => "activity",
        Some(crate::model::EntityRef::Artifact { .. }) => "artifact",
        Some(crate::model::EntityRef::Thread(_)) => "thread",
        Some(crate::model::EntityRef::Report(_)) => "report",
        None => return Err(not_found()),
    };
    Err(ResolveError::GranularityMismatch {
        id: citation.id.clone(),
        cited: citation.granularity,
        actual,
    })
}

const QUERY_VALUE: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

pub fn url_form(citation: &Citation, base: &str) -> String {
    let enc = |s: &str| utf8_percent_encode(s, QUERY_VALUE).to_string();
    format!(
        "{}/?project={}&view={}&granularity={}&id={}",
        base.trim_end_matches('/'),
        enc(&citation.project),
        citation.view.as_str(),
        citation.granularity.as_str(),
        enc(&citation.id)
    )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum UrlError {
    #[error("missing query parameter '{0}'")]
    Missing(&'static str),
    #[error("invalid value for '{param}': {value}")]
    Invalid { param: &'static str, value: String },
}

/// Inverse of [`url_form`]: reads the citation back out of a URL or a bare
/// query string. Unknown parameters are ignored.
pub fn parse_url_query(url: &str) -> Result<Citation, UrlError> {
    let query = url.split_once('?').map_or(url, |(_, q)| q);
    let query = query.split('#').next().unwrap_or_default();
    let get = |name: &'static str| -> Result<String, UrlError> {
        query
            .split('&')
            .filter_map(|pair| pair.split_once('='))
            .find(|(k, _)| *k == name)
            .map(|(_, v)| percent_decode_str(v).decode_utf8_lossy().into_owned())
            .ok_or(UrlError::Missing(name))
    };
    let project = get("project")?;
    let view_raw = get("view")?;
    let gran_raw = get("granularity")?;
    let id = get("id")?;
    let view = view_raw.parse().map_err(|_| UrlError::Invalid {
        param: "view",
        value: view_raw.clone(),
    })?;
    let granularity = gran_raw.parse().map_err(|_| UrlError::Invalid {
        param: "granularity",
        value: gran_raw.clone(),
    })?;
    let citation = Citation {
        project,
        view,
        granularity,
        id,
    };
    if !is_valid_field(&citation.project) {
        return Err(UrlError::Invalid {
            param: "project",
            value: citation.project,
        });
    }
    if !is_valid_field(&citation.id) {
        return Err(UrlError::Invalid {
            param: "id",
            value: citation.id,
        });
    }
    Ok(citation)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_thread_citation() {
        let c = Citation::new(
            "jen",
            View::Overview,
            CitedGranularity::Thread,
            "ba27001f-5d28-44eb-b507-bd7b0ff0be7a",
        );
        assert_eq!(
            format_citation(&c),
            "\\trrracer{jen}{overview}{thread}{ba27001f-5d28-44eb-b507-bd7b0ff0be7a}"
        );
    }

    #[test]
    fn parses_foreign_artifact_id() {
        let p = parse_citation("\\trrracer{jen}{paper}{artifact}{1-ynzmohY1iqCgi0Od5bA5bEUFtbJ-Jqr}")
            .unwrap();
        assert!(p.canonical);
        assert_eq!(p.citation.view, View::Paper);
        assert_eq!(p.citation.granularity, CitedGranularity::Artifact);
        assert_eq!(p.citation.id, "1-ynzmohY1iqCgi0Od5bA5bEUFtbJ-Jqr");
    }

    #[test]
    fn unknown_view_is_rejected_with_position() {
        let err = parse_citation("\\trrracer{jen}{sidebar}{thread}{x}").unwrap_err();
        assert_eq!(err.position, 15);
        assert!(err.reason.contains("unknown view \"sidebar\""), "{err}");
    }

    #[test]
    fn arity_and_empty_fields() {
        let err = parse_citation("\\trrracer{jen}{overview}{thread}").unwrap_err();
        assert!(err.reason.contains("wrong arity"), "{err}");
        let err = parse_citation("\\trrracer{jen}{overview}{thread}{a}{b}").unwrap_err();
        assert!(err.reason.contains("more than 4"), "{err}");
        let err = parse_citation("\\trrracer{}{overview}{thread}{a}").unwrap_err();
        assert_eq!(err.position, 10);
        assert!(err.reason.contains("empty project"));
        let err = parse_citation("\\trrracer{jen}{overview}{thread}{a").unwrap_err();
        assert!(err.reason.contains("unclosed id"));
        let err = parse_citation("\\trrracer{jen}{overview}{thread}{a b}").unwrap_err();
        assert!(err.reason.contains("whitespace inside id"));
        assert!(parse_citation("\\trrracer{jen}{overview}{thread}{a} ").is_err());
    }

    #[test]
    fn whitespace_is_tolerated_but_flagged() {
        let p = parse_citation("\\trrracer { jen }{overview}\n{thread}{ x }").unwrap();
        assert!(!p.canonical);
        assert_eq!(p.citation, Citation::new("jen", View::Overview, CitedGranularity::Thread, "x"));
        assert_eq!(
            p.citation.to_string(),
            "\\trrracer{jen}{overview}{thread}{x}"
        );
    }

    #[test]
    fn scanner_reports_every_occurrence() {
        let text = "See [\n\\trrracer{jen}{overview}{thread}{a}] and \\trrracer{jen}{bogus}{thread}{b}, then \\trrracer alone.";
        let hits = scan_citations(text);
        assert_eq!(hits.len(), 3);
        assert!(hits[0].parsed.is_ok());
        assert_eq!(hits[0].start, 6);
        assert_eq!(hits[0].text, "\\trrracer{jen}{overview}{thread}{a}");
        assert!(hits[1].parsed.is_err());
        assert_eq!(hits[1].text, "\\trrracer{jen}{bogus}{thread}{b}");
        assert!(hits[2].parsed.is_err());
    }

    #[test]
    fn url_round_trip_with_reserved_characters() {
        let c = Citation::new("jen", View::Paper, CitedGranularity::Artifact, "a&b=c/d%e?");
        let url = url_form(&c, "https://reader.example.org/");
        assert_eq!(
            url,
            "https://reader.example.org/?project=jen&view=paper&granularity=artifact&id=a%26b%3Dc%2Fd%25e%3F"
        );
        assert_eq!(parse_url_query(&url).unwrap(), c);
        assert_eq!(parse_url_query("?project=jen&view=paper").unwrap_err(), UrlError::Missing("granularity"));
    }

    #[test]
    fn resolution_errors() {
        let mut ctx = crate::model::Context::fixed("2021-01-01".parse().unwrap(), b"cite");
        let mut p = Project::new("jen", "t", ctx.now());
        let a = p
            .add_activity(&mut ctx, "meeting", "2021-01-01".parse().unwrap(), &[], false)
            .unwrap();
        let t = crate::threading::create_thread(&mut p, &mut ctx, "t", "d").unwrap();
        let thread_cite = Citation::new("jen", View::Overview, CitedGranularity::Thread, t.to_string());
        assert_eq!(resolve_citation(&p, &thread_cite).unwrap().id(), t);
        let wrong = Citation::new("jen", View::Overview, CitedGranularity::Artifact, a.to_string());
        assert!(matches!(
            resolve_citation(&p, &wrong),
            Err(ResolveError::GranularityMismatch { actual: "activity", .. })
        ));
        let other = Citation::new("evobio", View::Overview, CitedGranularity::Thread, t.to_string());
        assert!(matches!(resolve_citation(&p, &other), Err(ResolveError::ProjectMismatch { .. })));
        let missing = Citation::new("jen", View::Overview, CitedGranularity::Thread, "nope");
        let err = resolve_citation(&p, &missing).unwrap_err();
        assert!(err.to_string().starts_with("not found"));
    }
}
