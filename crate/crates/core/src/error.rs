use std::path::PathBuf;

use crate::citation::{CitationParseError, ResolveError};
use crate::validate::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything a toolkit operation can refuse or fail with.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0} required")]
    MissingField(&'static str),

    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },

    #[error("thread {id} is {status} and no longer accepts changes")]
    ThreadClosed {
        id: String,
        status: crate::model::ThreadStatus,
    },

    #[error("cannot merge thread {0} into itself")]
    SelfMerge(String),

    #[error("merging thread {absorbed} into {absorber} would make their lineage circular (merge the other way)")]
    LineageCycle { absorber: String, absorbed: String },

    #[error("evidence index {index} out of range (thread has {len} entries)")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("artifact {artifact} does not belong to activity {activity}")]
    ArtifactOutsideActivity { artifact: String, activity: String },

    #[error("artifact {0} is not a text artifact")]
    NotText(String),

    #[error("invalid fragment [{start}, {end}) for a text of {len} characters")]
    InvalidFragment { start: usize, end: usize, len: usize },

    #[error("unsupported file format '{ext}' (allowed: {})", crate::model::ALLOWED_EXTENSIONS.join(", "))]
    DisallowedFormat { ext: String },

    #[error("{path} is not valid UTF-8 text")]
    NotUtf8 { path: PathBuf },

    #[error("invalid project name '{0}' (use lowercase letters, digits and hyphens)")]
    InvalidProjectName(String),

    #[error("alias for '{0}' is already registered")]
    DuplicateAlias(String),

    #[error("replacement '{replacement}' for '{full_name}' would reintroduce the registered name '{conflict}'")]
    AliasConflict {
        full_name: String,
        replacement: String,
        conflict: String,
    },

    #[error("replacement for '{0}' must be non-empty and differ from the name")]
    InvalidReplacement(String),

    #[error("project has {} validation violation(s); first: {}", .0.violations.len(), .0.violations.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(ValidationReport),

    #[error("redaction left registered names in the bundle: {0}")]
    RedactionIncomplete(String),

    #[error(transparent)]
    Store(#[from] crate::store::StoreError),

    #[error(transparent)]
    Citation(#[from] CitationParseError),

    #[error(transparent)]
    Resolve(#[from] ResolveError),
}
