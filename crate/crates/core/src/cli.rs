//! The `trace` command line.
//!
//! Exit codes: 0 success, 1 domain rejection (including failed checks),
//! 2 usage error. With `--json` exactly one JSON document is written to
//! stdout; diagnostics always go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use uuid::Uuid;

use crate::citation::{format_citation, resolve_citation, url_form, Citation, CitedGranularity, View};
use crate::export::{export_bundle, register_alias, verify_bundle, ExportOptions};
use crate::model::{Context, EvidenceTarget, Project, Timestamp};
use crate::report::{ingest_report, verify_report};
use crate::store::{Repository, SaveOptions, WriteSession};
use crate::threading;

#[derive(Debug, Parser)]
#[command(name = "trace", version, about = "Record, thread, cite and export research evidence")]
pub struct Cli {
    /// Repository root (default: search upward from the current directory).
    #[arg(long, global = true, env = "TRACE_REPO")]
    pub repo: Option<PathBuf>,

    /// Emit one JSON document on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// Freeze the clock (and derive ids deterministically) for reproducible sessions.
    #[arg(long, global = true, value_name = "TIMESTAMP", value_parser = parse_timestamp)]
    pub now: Option<Timestamp>,

    #[command(subcommand)]
    pub command: Command,
}

fn parse_timestamp(s: &str) -> Result<Timestamp, String> {
    s.parse().map_err(|e: crate::model::TimestampParseError| e.to_string())
}

fn parse_granularity(s: &str) -> Result<CitedGranularity, String> {
    s.parse()
        .map_err(|_| format!("unknown granularity '{s}' (activity, artifact or thread)"))
}

fn parse_view(s: &str) -> Result<View, String> {
    s.parse()
        .map_err(|_| format!("unknown view '{s}' (overview or paper)"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a new repository.
    Init {
        name: String,
        #[arg(long)]
        title: String,
    },
    /// Record or list research activities.
    #[command(subcommand)]
    Activity(ActivityCommand),
    /// Ingest files as artifacts of an activity.
    #[command(subcommand)]
    Artifact(ArtifactCommand),
    /// `tag <entity-id> <label>...` adds tags; `tag ls` lists the vocabulary.
    Tag {
        #[arg(required = true, num_args = 1..)]
        args: Vec<String>,
    },
    /// Create and curate research threads.
    #[command(subcommand)]
    Thread(ThreadCommand),
    /// Print a citation for pasting into a manuscript.
    Cite {
        #[arg(value_parser = parse_granularity)]
        granularity: CitedGranularity,
        id: String,
        #[arg(long, default_value = "overview", value_parser = parse_view)]
        view: View,
        /// Also print the reader URL under this base.
        #[arg(long)]
        url: Option<String>,
    },
    /// Ingest and check manuscripts.
    #[command(subcommand)]
    Report(ReportCommand),
    /// Register names to redact on export.
    #[command(subcommand)]
    Alias(AliasCommand),
    /// Validate the repository.
    Check,
    /// Write a redacted read-only bundle.
    Export {
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Check a bundle from its files alone.
    VerifyBundle { dir: PathBuf },
    /// List tagged activities and artifacts in chronological order.
    Seed { tag: String },
}

#[derive(Debug, Subcommand)]
pub enum ActivityCommand {
    /// Record an activity; prints its id.
    Add {
        #[arg(long)]
        title: String,
        /// RFC 3339 (any offset) or a bare `YYYY-MM-DD` (midnight UTC).
        #[arg(long, value_parser = parse_timestamp)]
        occurred: Timestamp,
        #[arg(long = "tag")]
        tags: Vec<String>,
        #[arg(long)]
        private: bool,
    },
    /// List activities.
    Ls,
}

#[derive(Debug, Subcommand)]
pub enum ArtifactCommand {
    /// Copy a file into the repository; prints the artifact id.
    Add {
        activity: String,
        file: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        desc: String,
        #[arg(long = "tag")]
        tags: Vec<String>,
        #[arg(long)]
        private: bool,
        /// Allow a binary artifact into exported bundles.
        #[arg(long)]
        cleared_for_export: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ThreadCommand {
    /// Create an empty thread; prints its id.
    New {
        name: String,
        #[arg(long)]
        desc: String,
    },
    /// Append evidence: an activity, an artifact, or a fragment of a text artifact.
    Add(ThreadAdd),
    /// Remove the evidence entry at a 0-based index.
    Rm { thread: String, index: usize },
    /// Move all evidence of FROM to the end of INTO and retire FROM.
    Merge {
        into: String,
        from: String,
        #[arg(long)]
        why: String,
    },
    /// Start a new thread that records FROM as its parent.
    Branch {
        from: String,
        name: String,
        #[arg(long)]
        desc: String,
    },
    /// Mark a thread as a dead end.
    Deadend {
        id: String,
        #[arg(long)]
        why: String,
    },
    /// List threads.
    Ls,
}

#[derive(Debug, Args)]
pub struct ThreadAdd {
    pub thread: String,
    #[arg(long)]
    pub activity: Option<String>,
    #[arg(long)]
    pub artifact: Option<String>,
    /// Fragment start, in characters of the artifact text.
    #[arg(long, requires = "to", requires = "artifact")]
    pub from: Option<usize>,
    /// Fragment end (exclusive).
    #[arg(long, requires = "from")]
    pub to: Option<usize>,
    #[arg(long)]
    pub why: String,
}

#[derive(Debug, Subcommand)]
pub enum ReportCommand {
    /// Store a manuscript; prints the report id.
    Add {
        file: PathBuf,
        #[arg(long)]
        title: String,
    },
    /// Index a manuscript's citations and fail on broken or private ones.
    Check { report: String },
}

#[derive(Debug, Subcommand)]
pub enum AliasCommand {
    /// Register a full name; the replacement defaults to its initials.
    Add {
        #[arg(required = true, num_args = 1..)]
        full_name: Vec<String>,
        #[arg(long = "as")]
        replacement: Option<String>,
    },
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Domain(m) => m,
        }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<crate::store::StoreError> for Failure {
    fn from(e: crate::store::StoreError) -> Self {
        Failure::Domain(e.to_string())
    }
}

/// What a successful (or data-bearing failed) command reports.
struct Outcome {
    human: String,
    result: Value,
    exit: i32,
}

impl Outcome {
    fn ok(human: impl Into<String>, result: Value) -> Self {
        Self {
            human: human.into(),
            result,
            exit: 0,
        }
    }
}

pub fn run_from_env() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one invocation; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let wants_json = args.iter().any(|a| a == "--json");
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            let _ = write!(err, "{e}");
            if wants_json {
                let _ = writeln!(out, "{}", json!({"ok": false, "exit": 2, "error": e.kind().to_string()}));
            }
            return 2;
        }
    };
    let command = command_name(&cli.command);
    match execute(&cli) {
        Ok(outcome) => {
            if cli.json {
                let doc = json!({
                    "command": command,
                    "ok": outcome.exit == 0,
                    "exit": outcome.exit,
                    "result": outcome.result,
                });
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
            } else if !outcome.human.is_empty() {
                let _ = writeln!(out, "{}", outcome.human.trim_end());
            }
            outcome.exit
        }
        Err(failure) => {
            let _ = writeln!(err, "trace {command}: {}", failure.message());
            if cli.json {
                let doc = json!({
                    "command": command,
                    "ok": false,
                    "exit": failure.code(),
                    "error": failure.message(),
                });
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).unwrap_or_default());
            }
            failure.code()
        }
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Init { .. } => "init",
        Command::Activity(ActivityCommand::Add { .. }) => "activity add",
        Command::Activity(ActivityCommand::Ls) => "activity ls",
        Command::Artifact(_) => "artifact add",
        Command::Tag { args } if args.len() == 1 && args[0] == "ls" => "tag ls",
        Command::Tag { .. } => "tag",
        Command::Thread(t) => match t {
            ThreadCommand::New { .. } => "thread new",
            ThreadCommand::Add(_) => "thread add",
            ThreadCommand::Rm { .. } => "thread rm",
            ThreadCommand::Merge { .. } => "thread merge",
            ThreadCommand::Branch { .. } => "thread branch",
            ThreadCommand::Deadend { .. } => "thread deadend",
            ThreadCommand::Ls => "thread ls",
        },
        Command::Cite { .. } => "cite",
        Command::Report(ReportCommand::Add { .. }) => "report add",
        Command::Report(ReportCommand::Check { .. }) => "report check",
        Command::Alias(_) => "alias add",
        Command::Check => "check",
        Command::Export { .. } => "export",
        Command::VerifyBundle { .. } => "verify-bundle",
        Command::Seed { .. } => "seed",
    }
}

fn repository(cli: &Cli) -> Result<Repository, Failure> {
    Ok(match &cli.repo {
        Some(root) => Repository::open(root)?,
        None => {
            let cwd = std::env::current_dir()
                .map_err(|e| Failure::Domain(format!("cannot read current directory: {e}")))?;
            Repository::discover(cwd)?
        }
    })
}

fn context(cli: &Cli, manifest: &[u8]) -> Context {
    match cli.now {
        Some(now) => {
            let mut seed = now.to_string().into_bytes();
            seed.extend_from_slice(manifest);
            Context::fixed(now, &seed)
        }
        None => Context::system(),
    }
}

/// Runs `f` under the write lock and saves the project if it succeeds. On
/// failure the repository is left as it was.
fn mutate<T>(
    cli: &Cli,
    f: impl FnOnce(&mut WriteSession<'_>, &mut Project, &mut Context) -> Result<T, Failure>,
) -> Result<T, Failure> {
    let repo = repository(cli)?;
    let mut session = repo.lock()?;
    let manifest = std::fs::read(repo.manifest_path()).map_err(|e| {
        Failure::Domain(format!("{}: {e}", repo.manifest_path().display()))
    })?;
    let mut project = crate::store::parse_manifest(&repo.manifest_path(), &manifest)?;
    let mut ctx = context(cli, &manifest);
    let value = f(&mut session, &mut project, &mut ctx)?;
    session.save(&project, SaveOptions::default())?;
    Ok(value)
}

fn read_project(cli: &Cli) -> Result<(Repository, Project), Failure> {
    let repo = repository(cli)?;
    let project = repo.read_manifest()?;
    Ok((repo, project))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum IdKind {
    Activity,
    Artifact,
    Thread,
    Report,
}

impl IdKind {
    fn name(self) -> &'static str {
        match self {
            IdKind::Activity => "activity",
            IdKind::Artifact => "artifact",
            IdKind::Thread => "thread",
            IdKind::Report => "report",
        }
    }
}

const MIN_PREFIX: usize = 8;

/// Full id or an unambiguous prefix of at least eight characters.
fn resolve_id(project: &Project, text: &str, kinds: &[IdKind]) -> Result<Uuid, Failure> {
    let wanted = text.trim().to_ascii_lowercase();
    let mut candidates: Vec<(Uuid, IdKind)> = Vec::new();
    for activity in &project.activities {
        candidates.push((activity.id, IdKind::Activity));
        candidates.extend(activity.artifacts.iter().map(|a| (a.id, IdKind::Artifact)));
    }
    candidates.extend(project.threads.iter().map(|t| (t.id, IdKind::Thread)));
    candidates.extend(project.reports.iter().map(|r| (r.id, IdKind::Report)));
    candidates.retain(|(_, k)| kinds.contains(k));
    let what = kinds.iter().map(|k| k.name()).collect::<Vec<_>>().join(" or ");

    if let Ok(id) = Uuid::parse_str(&wanted) {
        return if candidates.iter().any(|(c, _)| *c == id) {
            Ok(id)
        } else {
            Err(Failure::Domain(format!("{what} {id} not found")))
        };
    }
    if wanted.len() < MIN_PREFIX {
        return Err(Failure::Usage(format!(
            "id prefix '{text}' is too short (need at least {MIN_PREFIX} characters)"
        )));
    }
    let matches: Vec<Uuid> = candidates
        .iter()
        .map(|(id, _)| *id)
        .filter(|id| id.to_string().starts_with(&wanted))
        .collect();
    match matches.as_slice() {
        [] => Err(Failure::Domain(format!("{what} {text} not found"))),
        [one] => Ok(*one),
        many => Err(Failure::Usage(format!(
            "id prefix '{text}' is ambiguous: {}",
            many.iter().map(Uuid::to_string).collect::<Vec<_>>().join(", ")
        ))),
    }
}

fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Init { name, title } => {
            let root = match &cli.repo {
                Some(r) => r.clone(),
                None => std::env::current_dir()
                    .map_err(|e| Failure::Domain(format!("cannot read current directory: {e}")))?,
            };
            let ctx = context(cli, b"init");
            let (repo, project) = Repository::init(&root, name, title, &ctx)?;
            Ok(Outcome::ok(
                format!("initialized project {} in {}", project.name, repo.root().display()),
                json!({"name": project.name, "title": project.title, "root": repo.root()}),
            ))
        }
        Command::Activity(ActivityCommand::Add {
            title,
            occurred,
            tags,
            private,
        }) => {
            let id = mutate(cli, |_, project, ctx| {
                Ok(project.add_activity(ctx, title, *occurred, tags, *private)?)
            })?;
            Ok(Outcome::ok(id.to_string(), json!({"id": id})))
        }
        Command::Activity(ActivityCommand::Ls) => {
            let (_, project) = read_project(cli)?;
            let mut activities: Vec<_> = project.activities.iter().collect();
            activities.sort_by_key(|a| (a.occurred_at, a.id));
            let human = activities
                .iter()
                .map(|a| {
                    format!(
                        "{}  {}  {}{} ({} artifacts)",
                        a.occurred_at,
                        a.id,
                        a.title,
                        if a.private { " [private]" } else { "" },
                        a.artifacts.len()
                    )
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Outcome::ok(human, serde_json::to_value(&activities).unwrap_or_default()))
        }
        Command::Artifact(ArtifactCommand::Add {
            activity,
            file,
            kind,
            desc,
            tags,
            private,
            cleared_for_export,
        }) => {
            let source = absolute(file);
            let (id, media, checksum) = mutate(cli, |session, project, ctx| {
                let activity = resolve_id(project, activity, &[IdKind::Activity])?;
                let id = session.ingest_artifact(project, ctx, activity, &source, kind, desc, tags)?;
                project.set_private(id, *private)?;
                project.set_cleared_for_export(id, *cleared_for_export)?;
                let (_, a) = project.artifact(id).expect("just ingested");
                Ok((id, a.media_class, a.checksum.clone()))
            })?;
            Ok(Outcome::ok(
                id.to_string(),
                json!({"id": id, "media_class": media, "checksum": checksum}),
            ))
        }
        Command::Tag { args } => {
            if args.len() == 1 && args[0] == "ls" {
                let (_, project) = read_project(cli)?;
                let count = |label: &str| {
                    let l = label.to_lowercase();
                    project
                        .activities
                        .iter()
                        .map(|a| {
                            a.tags.iter().filter(|t| t.to_lowercase() == l).count()
                                + a.artifacts
                                    .iter()
                                    .filter(|x| x.tags.iter().any(|t| t.to_lowercase() == l))
                                    .count()
                        })
                        .sum::<usize>()
                };
                let rows: Vec<Value> = project
                    .tag_vocabulary
                    .iter()
                    .map(|t| json!({"label": t.label, "note": t.note, "uses": count(&t.label)}))
                    .collect();
                let human = project
                    .tag_vocabulary
                    .iter()
                    .map(|t| format!("{}\t{}", t.label, count(&t.label)))
                    .collect::<Vec<_>>()
                    .join("\n");
                return Ok(Outcome::ok(human, Value::Array(rows)));
            }
            let (entity, labels) = args.split_first().expect("clap requires one arg");
            if labels.is_empty() {
                return Err(Failure::Usage("usage: trace tag <entity-id> <label>... | trace tag ls".into()));
            }
            let id = mutate(cli, |_, project, _| {
                let id = resolve_id(project, entity, &[IdKind::Activity, IdKind::Artifact])?;
                project.tag_entity(id, labels)?;
                Ok(id)
            })?;
            Ok(Outcome::ok(
                format!("tagged {id}: {}", labels.join(", ")),
                json!({"id": id, "tags": labels}),
            ))
        }
        Command::Thread(command) => thread_command(cli, command),
        Command::Cite {
            granularity,
            id,
            view,
            url,
        } => {
            let (_, project) = read_project(cli)?;
            let kind = match granularity {
                CitedGranularity::Activity => IdKind::Activity,
                CitedGranularity::Artifact => IdKind::Artifact,
                CitedGranularity::Thread => IdKind::Thread,
            };
            let id = resolve_id(&project, id, &[kind])?;
            let citation = Citation::new(project.name.clone(), *view, *granularity, id.to_string());
            resolve_citation(&project, &citation).map_err(crate::Error::from)?;
            let text = format_citation(&citation);
            let url = url.as_deref().map(|base| url_form(&citation, base));
            let human = match &url {
                Some(u) => format!("{text}\n{u}"),
                None => text.clone(),
            };
            Ok(Outcome::ok(human, json!({"citation": text, "url": url})))
        }
        Command::Report(ReportCommand::Add { file, title }) => {
            let source = absolute(file);
            let id = mutate(cli, |session, project, ctx| {
                Ok(ingest_report(session, project, ctx, &source, title)?)
            })?;
            Ok(Outcome::ok(id.to_string(), json!({"id": id})))
        }
        Command::Report(ReportCommand::Check { report }) => {
            let (repo, project) = read_project(cli)?;
            let id = resolve_id(&project, report, &[IdKind::Report])?;
            let verdict = verify_report(&project, &repo, id)?;
            let mut human = format!(
                "{}: {} citations in {} sections, {} broken",
                if verdict.pass { "pass" } else { "fail" },
                verdict.index.placed_count(),
                verdict.index.sections.len(),
                verdict.index.broken.len()
            );
            for problem in &verdict.problems {
                human.push_str("\n  ");
                human.push_str(problem);
            }
            Ok(Outcome {
                human,
                exit: if verdict.pass { 0 } else { 1 },
                result: serde_json::to_value(&verdict).unwrap_or_default(),
            })
        }
        Command::Alias(AliasCommand::Add {
            full_name,
            replacement,
        }) => {
            let name = full_name.join(" ");
            let replacement = mutate(cli, |_, project, _| {
                register_alias(project, &name, replacement.as_deref())?;
                Ok(project.alias_registry.last().expect("just added").replacement.clone())
            })?;
            Ok(Outcome::ok(
                format!("{name} -> {replacement}"),
                json!({"full_name": name, "replacement": replacement}),
            ))
        }
        Command::Check => {
            let repo = repository(cli)?;
            let loaded = repo.load()?;
            let report = loaded.report;
            let human = if report.is_clean() {
                "ok".to_string()
            } else {
                report.to_string()
            };
            Ok(Outcome {
                human,
                exit: if report.is_clean() { 0 } else { 1 },
                result: json!({"clean": report.is_clean(), "violations": report.violations}),
            })
        }
        Command::Export { out_dir, force } => {
            let (repo, project) = read_project(cli)?;
            let report = export_bundle(&repo, &project, out_dir, ExportOptions { force: *force })?;
            let human = format!(
                "exported {} activities ({} excluded), {} artifacts ({} excluded, {} binaries withheld, {} redacted), {} threads ({} dropped, {} trimmed)",
                report.activities_included,
                report.activities_excluded,
                report.artifacts_included,
                report.artifacts_excluded,
                report.binaries_withheld,
                report.artifacts_redacted,
                report.threads_included,
                report.threads_dropped,
                report.threads_trimmed,
            );
            Ok(Outcome::ok(human, serde_json::to_value(&report).unwrap_or_default()))
        }
        Command::VerifyBundle { dir } => {
            let verdict = verify_bundle(dir);
            let mut human = if verdict.pass { "pass".to_string() } else { "fail".to_string() };
            for v in &verdict.violations {
                human.push_str("\n  ");
                human.push_str(v);
            }
            Ok(Outcome {
                human,
                exit: if verdict.pass { 0 } else { 1 },
                result: serde_json::to_value(&verdict).unwrap_or_default(),
            })
        }
        Command::Seed { tag } => {
            let (_, project) = read_project(cli)?;
            let candidates = threading::seed_from_tag(&project, tag);
            let rows: Vec<Value> = candidates
                .iter()
                .map(|c| {
                    json!({
                        "occurred_at": c.occurred_at,
                        "granularity": c.target.granularity,
                        "activity_id": c.target.activity_id,
                        "artifact_id": c.target.artifact_id,
                    })
                })
                .collect();
            let human = candidates
                .iter()
                .map(|c| {
                    let (label, id) = match c.target.artifact_id {
                        Some(id) => ("artifact", id),
                        None => ("activity", c.target.activity_id),
                    };
                    format!("{}  {label:<8}  {id}", c.occurred_at)
                })
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Outcome::ok(human, Value::Array(rows)))
        }
    }
}

fn thread_command(cli: &Cli, command: &ThreadCommand) -> Result<Outcome, Failure> {
    match command {
        ThreadCommand::New { name, desc } => {
            let id = mutate(cli, |_, project, ctx| {
                Ok(threading::create_thread(project, ctx, name, desc)?)
            })?;
            Ok(Outcome::ok(id.to_string(), json!({"id": id})))
        }
        ThreadCommand::Add(add) => {
            if add.why.trim().is_empty() {
                return Err(crate::Error::MissingField("rationale").into());
            }
            let (index, timing) = mutate(cli, |session, project, ctx| {
                let thread = resolve_id(project, &add.thread, &[IdKind::Thread])?;
                let artifact = add
                    .artifact
                    .as_deref()
                    .map(|a| resolve_id(project, a, &[IdKind::Artifact]))
                    .transpose()?;
                let activity = match (&add.activity, artifact) {
                    (Some(a), _) => resolve_id(project, a, &[IdKind::Activity])?,
                    (None, Some(art)) => project.artifact(art).expect("resolved").0.id,
                    (None, None) => {
                        return Err(Failure::Usage("thread add needs --activity or --artifact".into()))
                    }
                };
                let target = match (artifact, add.from, add.to) {
                    (None, _, _) => EvidenceTarget::activity(activity),
                    (Some(art), Some(start), Some(end)) => {
                        let fragment = threading::extract_fragment(
                            project,
                            session.repository(),
                            art,
                            start,
                            end,
                        )?;
                        EvidenceTarget::fragment(activity, art, fragment)
                    }
                    (Some(art), _, _) => EvidenceTarget::artifact(activity, art),
                };
                threading::add_evidence(project, ctx, thread, target, &add.why)?;
                let t = project.thread(thread).expect("resolved");
                Ok((t.evidence.len() - 1, t.evidence.last().and_then(|e| e.timing())))
            })?;
            Ok(Outcome::ok(
                format!("added entry {index} ({})", timing.map_or("note", |t| match t {
                    crate::model::Timing::Retroactive => "retroactive",
                    crate::model::Timing::Forward => "forward",
                })),
                json!({"index": index, "timing": timing}),
            ))
        }
        ThreadCommand::Rm { thread, index } => {
            mutate(cli, |_, project, _| {
                let thread = resolve_id(project, thread, &[IdKind::Thread])?;
                threading::remove_evidence(project, thread, *index)?;
                Ok(())
            })?;
            Ok(Outcome::ok(format!("removed entry {index}"), json!({"index": index})))
        }
        ThreadCommand::Merge { into, from, why } => {
            if why.trim().is_empty() {
                return Err(crate::Error::MissingField("rationale").into());
            }
            let (absorber, absorbed) = mutate(cli, |_, project, ctx| {
                let absorber = resolve_id(project, into, &[IdKind::Thread])?;
                let absorbed = resolve_id(project, from, &[IdKind::Thread])?;
                threading::merge_threads(project, ctx, absorber, absorbed, why)?;
                Ok((absorber, absorbed))
            })?;
            Ok(Outcome::ok(
                format!("merged {absorbed} into {absorber}"),
                json!({"into": absorber, "from": absorbed}),
            ))
        }
        ThreadCommand::Branch { from, name, desc } => {
            let id = mutate(cli, |_, project, ctx| {
                let source = resolve_id(project, from, &[IdKind::Thread])?;
                Ok(threading::branch_thread(project, ctx, source, name, desc)?)
            })?;
            Ok(Outcome::ok(id.to_string(), json!({"id": id})))
        }
        ThreadCommand::Deadend { id, why } => {
            if why.trim().is_empty() {
                return Err(crate::Error::MissingField("rationale").into());
            }
            let id = mutate(cli, |_, project, ctx| {
                let id = resolve_id(project, id, &[IdKind::Thread])?;
                threading::mark_dead_end(project, ctx, id, why)?;
                Ok(id)
            })?;
            Ok(Outcome::ok(format!("thread {id} marked dead end"), json!({"id": id})))
        }
        ThreadCommand::Ls => {
            let (_, project) = read_project(cli)?;
            let human = project
                .threads
                .iter()
                .map(|t| format!("{}  {:<11}  {} ({} entries)", t.id, t.status.to_string(), t.name, t.evidence.len()))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Outcome::ok(human, serde_json::to_value(&project.threads).unwrap_or_default()))
        }
    }
}

fn absolute(path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir().map(|d| d.join(path)).unwrap_or_else(|_| path.to_path_buf())
    }
}
