//! Plain-file repository.
//!
//! ```text
//! <root>/
//!   trace.json          manifest: the whole project except file bytes
//!   .trace.lock         present while a writer holds the repository
//!   files/<id>.<ext>    artifact bytes, written once, never rewritten
//!   reports/<id>.<ext>  ingested manuscripts
//! ```
//!
//! The manifest is replaced by writing `.trace.json.tmp` and renaming it over
//! `trace.json`, so readers see either the old or the new document.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use uuid::Uuid;

use crate::model::{
    Artifact, Context, EntryItem, MediaClass, Project, ALLOWED_EXTENSIONS,
};
use crate::validate::{validate_project, Rule, ValidationReport, Violation};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "trace.json";
pub const TEMP_MANIFEST_FILE: &str = ".trace.json.tmp";
pub const LOCK_FILE: &str = ".trace.lock";
pub const FILES_DIR: &str = "files";
pub const REPORTS_DIR: &str = "reports";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("refusing to initialize {}: directory is not empty", .0.display())]
    NotEmpty(PathBuf),

    #[error("no {MANIFEST_FILE} found at {}", .0.display())]
    ManifestMissing(PathBuf),

    #[error("no {MANIFEST_FILE} found in {} or any parent directory", .0.display())]
    NoRepository(PathBuf),

    #[error("{}:{line}:{column}: corrupt manifest: {message}", path.display())]
    ManifestCorrupt {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{}: unsupported manifest schema_version {found}", path.display())]
    UnsupportedSchema { path: PathBuf, found: u32 },

    #[error("repository is locked by another writer ({}): {holder}", path.display())]
    LockHeld { path: PathBuf, holder: String },

    #[error("save interrupted at {0:?}")]
    Interrupted(SavePoint),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Steps of a manifest save at which a fault can be injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SavePoint {
    BeforeTempWrite,
    /// Half of the new manifest has been written to the temp file.
    MidTempWrite,
    AfterTempWrite,
    BeforeRename,
    AfterRename,
}

impl SavePoint {
    pub const ALL: [SavePoint; 5] = [
        SavePoint::BeforeTempWrite,
        SavePoint::MidTempWrite,
        SavePoint::AfterTempWrite,
        SavePoint::BeforeRename,
        SavePoint::AfterRename,
    ];
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SaveOptions {
    /// Persist even when structural validation fails.
    pub allow_violations: bool,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    schema_version: u32,
    project: Project,
}

#[derive(Deserialize)]
struct ManifestHeader {
    schema_version: u32,
}

/// Deterministic manifest bytes: sorted keys, two-space indent, LF, trailing newline.
pub fn manifest_bytes(project: &Project) -> Vec<u8> {
    let doc = ManifestDoc {
        schema_version: MANIFEST_SCHEMA_VERSION,
        project: project.clone(),
    };
    to_canonical_json(&doc)
}

/// Serializes through `serde_json::Value`, whose maps are key-sorted.
pub(crate) fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("in-memory types always serialize");
    let mut out = serde_json::to_vec_pretty(&value).expect("values always serialize");
    out.push(b'\n');
    out
}

pub fn parse_manifest(path: &Path, bytes: &[u8]) -> Result<Project, StoreError> {
    let corrupt = |e: serde_json::Error| StoreError::ManifestCorrupt {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    };
    let header: ManifestHeader = serde_json::from_slice(bytes).map_err(corrupt)?;
    if header.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(StoreError::UnsupportedSchema {
            path: path.to_path_buf(),
            found: header.schema_version,
        });
    }
    let doc: ManifestDoc = serde_json::from_slice(bytes).map_err(corrupt)?;
    Ok(doc.project)
}

/// A project as read from disk, with any integrity problems found on the way.
#[derive(Debug, Clone)]
pub struct LoadedProject {
    pub project: Project,
    pub report: ValidationReport,
}

#[derive(Debug, Clone)]
pub struct Repository {
    root: PathBuf,
}

impl Repository {
    /// Creates the directory skeleton and an empty manifest.
    pub fn init(
        root: impl AsRef<Path>,
        name: &str,
        title: &str,
        ctx: &Context,
    ) -> Result<(Repository, Project)> {
        let root = root.as_ref();
        if !crate::model::is_valid_project_name(name) {
            return Err(Error::InvalidProjectName(name.to_string()));
        }
        if title.trim().is_empty() {
            return Err(Error::MissingField("title"));
        }
        if root.exists() {
            let mut entries = fs::read_dir(root).map_err(io_err(root))?;
            if entries.next().is_some() {
                return Err(StoreError::NotEmpty(root.to_path_buf()).into());
            }
        }
        for dir in [root.to_path_buf(), root.join(FILES_DIR), root.join(REPORTS_DIR)] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let repo = Repository {
            root: root.to_path_buf(),
        };
        let project = Project::new(name, title, ctx.now());
        let mut session = repo.lock()?;
        session.save(&project, SaveOptions::default())?;
        drop(session);
        Ok((repo, project))
    }

    /// Opens an existing repository rooted exactly at `root`.
    pub fn open(root: impl AsRef<Path>) -> Result<Repository, StoreError> {
        let root = root.as_ref();
        if !root.join(MANIFEST_FILE).is_file() {
            return Err(StoreError::ManifestMissing(root.to_path_buf()));
        }
        Ok(Repository {
            root: root.to_path_buf(),
        })
    }

    /// Walks up from `start` to the first directory holding a manifest.
    pub fn discover(start: impl AsRef<Path>) -> Result<Repository, StoreError> {
        let start = start.as_ref();
        let mut dir = Some(start);
        while let Some(d) = dir {
            if d.join(MANIFEST_FILE).is_file() {
                return Ok(Repository {
                    root: d.to_path_buf(),
                });
            }
            dir = d.parent();
        }
        Err(StoreError::NoRepository(start.to_path_buf()))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn lock_path(&self) -> PathBuf {
        self.root.join(LOCK_FILE)
    }

    /// Absolute path for a repository-relative reference.
    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn read_manifest(&self) -> Result<Project, StoreError> {
        let path = self.manifest_path();
        let bytes = fs::read(&path).map_err(|source| {
            if source.kind() == io::ErrorKind::NotFound {
                StoreError::ManifestMissing(self.root.clone())
            } else {
                StoreError::Io {
                    path: path.clone(),
                    source,
                }
            }
        })?;
        parse_manifest(&path, &bytes)
    }

    /// Reads and fully checks the project. Integrity problems do not fail the
    /// load; they come back in [`LoadedProject::report`].
    pub fn load(&self) -> Result<LoadedProject, StoreError> {
        let project = self.read_manifest()?;
        let report = self.check(&project);
        Ok(LoadedProject { project, report })
    }

    /// Structural validation plus file integrity: existence, checksums,
    /// orphans and fragment anchors.
    pub fn check(&self, project: &Project) -> ValidationReport {
        validate_project(project).merge(ValidationReport::from_violations(self.check_files(project)))
    }

    fn check_files(&self, project: &Project) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut referenced = BTreeSet::new();
        for activity in &project.activities {
            for artifact in &activity.artifacts {
                referenced.insert(artifact.file_ref.clone());
                match fs::read(self.resolve(&artifact.file_ref)) {
                    Err(_) => out.push(
                        Violation::new("artifact", artifact.id, Rule::MissingFile)
                            .with_detail(artifact.file_ref.clone()),
                    ),
                    Ok(bytes) => {
                        let actual = sha256_hex(&bytes);
                        if actual != artifact.checksum {
                            out.push(
                                Violation::new("artifact", artifact.id, Rule::ChecksumMismatch)
                                    .with_detail(format!("stored file hashes to {actual}")),
                            );
                        }
                    }
                }
            }
        }
        let files_dir = self.root.join(FILES_DIR);
        if let Ok(entries) = fs::read_dir(&files_dir) {
            let mut names: Vec<String> = entries
                .filter_map(|e| e.ok())
                .map(|e| format!("{FILES_DIR}/{}", e.file_name().to_string_lossy()))
                .collect();
            names.sort();
            for name in names {
                if !referenced.contains(&name) {
                    out.push(Violation::new("file", &name, Rule::OrphanFile));
                }
            }
        }
        for report in &project.reports {
            if !self.resolve(&report.path).is_file() {
                out.push(
                    Violation::new("report", report.id, Rule::MissingFile)
                        .with_detail(report.path.clone()),
                );
            }
        }
        for thread in &project.threads {
            for (index, entry) in thread.evidence.iter().enumerate() {
                let EntryItem::Evidence { target, .. } = &entry.item else {
                    continue;
                };
                let (Some(fragment), Some(artifact_id)) = (&target.fragment, target.artifact_id)
                else {
                    continue;
                };
                let Some((_, artifact)) = project.artifact(artifact_id) else {
                    continue;
                };
                match self.artifact_text(artifact) {
                    Ok(text) if fragment.matches(&text) => {}
                    Ok(_) => out.push(
                        Violation::new("thread", thread.id, Rule::FragmentDrift).with_detail(
                            format!("entry {index}: artifact {artifact_id} no longer contains the quoted text at [{}, {})", fragment.start, fragment.end),
                        ),
                    ),
                    Err(e) => out.push(
                        Violation::new("thread", thread.id, Rule::UnreadableText)
                            .with_detail(format!("entry {index}: {e}")),
                    ),
                }
            }
        }
        out
    }

    /// Decoded content of a text artifact.
    pub fn artifact_text(&self, artifact: &Artifact) -> Result<String> {
        if !artifact.media_class.is_text() {
            return Err(Error::NotText(artifact.id.to_string()));
        }
        self.read_text(&artifact.file_ref)
    }

    pub fn read_text(&self, rel: &str) -> Result<String> {
        let path = self.resolve(rel);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        String::from_utf8(bytes).map_err(|_| Error::NotUtf8 { path })
    }

    /// Takes the single-writer lock. Fails fast if another writer holds it.
    pub fn lock(&self) -> Result<WriteSession<'_>, StoreError> {
        let path = self.lock_path();
        let mut file = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                let holder = fs::read_to_string(&path).unwrap_or_default();
                return Err(StoreError::LockHeld {
                    path,
                    holder: holder.trim().to_string(),
                });
            }
            Err(e) => return Err(StoreError::Io { path, source: e }),
        };
        let holder = serde_json::json!({
            "pid": std::process::id(),
            "tool": concat!("tracekit ", env!("CARGO_PKG_VERSION")),
        });
        file.write_all(holder.to_string().as_bytes())
            .map_err(io_err(&path))?;
        Ok(WriteSession {
            repo: self,
            lock_path: path,
            staged: Vec::new(),
        })
    }
}

/// Exclusive write access to a repository. Files written through the session
/// are removed again unless a manifest save commits them; the lock is released
/// on drop.
#[derive(Debug)]
pub struct WriteSession<'r> {
    repo: &'r Repository,
    lock_path: PathBuf,
    staged: Vec<PathBuf>,
}

impl<'r> WriteSession<'r> {
    pub fn repository(&self) -> &'r Repository {
        self.repo
    }

    pub fn save(&mut self, project: &Project, options: SaveOptions) -> Result<()> {
        self.save_with_hook(project, options, &mut |_| Ok(()))
    }

    /// Like [`save`](Self::save), calling `hook` at every [`SavePoint`]. An
    /// error from the hook aborts the save at that point, as a crash would.
    pub fn save_with_hook(
        &mut self,
        project: &Project,
        options: SaveOptions,
        hook: &mut dyn FnMut(SavePoint) -> io::Result<()>,
    ) -> Result<()> {
        if !options.allow_violations {
            let report = validate_project(project);
            if !report.is_clean() {
                return Err(Error::Invalid(report));
            }
        }
        let bytes = manifest_bytes(project);
        let root = &self.repo.root;
        let temp = root.join(TEMP_MANIFEST_FILE);
        let manifest = root.join(MANIFEST_FILE);
        let abort = |point| move |_| StoreError::Interrupted(point);

        hook(SavePoint::BeforeTempWrite).map_err(abort(SavePoint::BeforeTempWrite))?;
        let mut file = File::create(&temp).map_err(io_err(&temp))?;
        let (head, tail) = bytes.split_at(bytes.len() / 2);
        file.write_all(head).map_err(io_err(&temp))?;
        hook(SavePoint::MidTempWrite).map_err(abort(SavePoint::MidTempWrite))?;
        file.write_all(tail).map_err(io_err(&temp))?;
        file.sync_all().map_err(io_err(&temp))?;
        drop(file);
        hook(SavePoint::AfterTempWrite).map_err(abort(SavePoint::AfterTempWrite))?;
        hook(SavePoint::BeforeRename).map_err(abort(SavePoint::BeforeRename))?;
        fs::rename(&temp, &manifest).map_err(io_err(&manifest))?;
        sync_dir(root);
        // The new manifest is durable from here on; staged files belong to it.
        self.staged.clear();
        hook(SavePoint::AfterRename).map_err(abort(SavePoint::AfterRename))?;
        Ok(())
    }

    /// Writes a new file under the repository. Existing files are never
    /// overwritten.
    pub fn put_file(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.repo.resolve(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let mut file = OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(io_err(&path))?;
        self.staged.push(path.clone());
        file.write_all(bytes).map_err(io_err(&path))?;
        file.sync_all().map_err(io_err(&path))?;
        Ok(())
    }

    /// Copies `source` into the file store and records it under `activity_id`.
    #[allow(clippy::too_many_arguments)]
    pub fn ingest_artifact(
        &mut self,
        project: &mut Project,
        ctx: &mut Context,
        activity_id: Uuid,
        source: &Path,
        kind: &str,
        description: &str,
        tags: &[String],
    ) -> Result<Uuid> {
        if project.activity(activity_id).is_none() {
            return Err(Error::NotFound {
                what: "activity",
                id: activity_id.to_string(),
            });
        }
        if kind.trim().is_empty() {
            return Err(Error::MissingField("kind"));
        }
        if description.trim().is_empty() {
            return Err(Error::MissingField("description"));
        }
        let ext = source
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        let media_class = MediaClass::from_extension(&ext)
            .filter(|_| ALLOWED_EXTENSIONS.contains(&ext.as_str()))
            .ok_or_else(|| Error::DisallowedFormat { ext: ext.clone() })?;
        let bytes = fs::read(source).map_err(io_err(source))?;
        if media_class.is_text() && std::str::from_utf8(&bytes).is_err() {
            return Err(Error::NotUtf8 {
                path: source.to_path_buf(),
            });
        }
        let id = ctx.mint_id();
        let file_ref = format!("{FILES_DIR}/{id}.{ext}");
        self.put_file(&file_ref, &bytes)?;
        project.intern_kind(kind);
        let tags = tags.iter().map(|t| project.intern_tag(t)).collect();
        let artifact = Artifact {
            id,
            kind: kind.to_string(),
            description: description.to_string(),
            tags,
            file_ref,
            media_class,
            checksum: sha256_hex(&bytes),
            private: false,
            cleared_for_export: false,
        };
        project
            .activity_mut(activity_id)
            .expect("checked above")
            .artifacts
            .push(artifact);
        Ok(id)
    }

    /// Removes files written since the last successful save.
    pub fn rollback(&mut self) {
        for path in self.staged.drain(..) {
            let _ = fs::remove_file(path);
        }
    }
}

impl Drop for WriteSession<'_> {
    fn drop(&mut self) {
        self.rollback();
        let _ = fs::remove_file(&self.lock_path);
    }
}

#[cfg(unix)]
fn sync_dir(dir: &Path) {
    if let Ok(d) = File::open(dir) {
        let _ = d.sync_all();
    }
}

#[cfg(not(unix))]
fn sync_dir(_dir: &Path) {}
