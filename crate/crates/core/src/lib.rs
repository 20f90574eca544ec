//! Record research activities and their artifacts, thread them into
//! evidence-backed lines of reasoning, cite those threads from manuscripts,
//! and export a redacted bundle a reader can browse.
//!
//! The repository is a directory holding `trace.json` plus content-addressed
//! copies of every artifact under `files/`. All mutations go through a
//! [`store::WriteSession`], which holds the repository lock and commits with
//! an atomic rename.
//!
//! Runnable examples, one per capability:
//!
//! - `record_artifacts`: create a repository, add activities, ingest files.
//! - `thread_lifecycle`: build, branch, merge and abandon threads.
//! - `cite_and_resolve`: format, parse, scan and resolve citations.
//! - `report_index`: index a manuscript by section and verify it.
//! - `export_bundle`: redact, export and verify a read-only bundle.
//! - `end_to_end`: the whole workflow through the `trace` CLI runner.
//!
//! ```
//! use tracekit::model::{Context, Project};
//! use tracekit::threading::{add_evidence, create_thread};
//! use tracekit::model::EvidenceTarget;
//!
//! let mut ctx = Context::fixed("2021-03-01T09:00:00Z".parse().unwrap(), b"doc");
//! let mut project = Project::new("jen", "Genomics collaboration", ctx.now());
//! let meeting = project
//!     .add_activity(&mut ctx, "Kickoff", "2021-02-01".parse().unwrap(), &["meeting".into()], false)
//!     .unwrap();
//! let thread = create_thread(&mut project, &mut ctx, "Task framing", "How the goals evolved").unwrap();
//! add_evidence(&mut project, &mut ctx, thread, EvidenceTarget::activity(meeting), "first statement of goals").unwrap();
//! assert!(tracekit::validate::validate_project(&project).is_clean());
//! ```

pub mod citation;
pub mod cli;
pub mod error;
pub mod export;
pub mod model;
pub mod report;
pub mod store;
pub mod threading;
pub mod validate;

pub use error::{Error, Result};
