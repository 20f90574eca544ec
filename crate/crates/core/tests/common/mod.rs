#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use uuid::Uuid;

use tracekit::model::{
    Context, EntryItem, EvidenceTarget, Project, ThreadStatus, Timestamp,
};
use tracekit::store::{Repository, SaveOptions, WriteSession};
use tracekit::threading;

pub fn ts(s: &str) -> Timestamp {
    s.parse().expect("fixture timestamp")
}

/// Writes `name` with `contents` into `dir` and returns its path.
pub fn source_file(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join(name);
    fs::write(&path, contents).unwrap();
    path
}

/// Runs the in-process CLI and captures (exit, stdout, stderr).
pub fn trace(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("trace").chain(args.iter().copied());
    let code = tracekit::cli::run(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// Every file under `dir`, keyed by relative path.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub struct GoldenRun {
    pub steps: Vec<(String, i32)>,
    pub repo: PathBuf,
    pub bundle: PathBuf,
}

/// The scripted session: init, record, thread, cite, report, check, export,
/// verify-bundle. Every invocation runs under `--now`.
pub fn golden_session(work: &Path) -> GoldenRun {
    let repo = work.join("repo");
    let bundle = work.join("bundle");
    let sources = work.join("sources");
    let repo_s = repo.to_str().unwrap().to_string();
    let mut steps = Vec::new();
    let mut clock = 0u32;
    let mut step = |args: &[&str]| -> String {
        clock += 1;
        let now = format!("2022-03-01T10:{:02}:00Z", clock);
        let mut full = vec!["--repo", repo_s.as_str(), "--now", now.as_str()];
        full.extend_from_slice(args);
        let (code, out, err) = trace(&full);
        steps.push((format!("{} -> {}", args.join(" "), err.trim()), code));
        out.trim().to_string()
    };

    let transcript = source_file(
        &sources,
        "interview1.txt",
        "Ada Quill: could we auto-suggest leads?\nBoris Lind: traces of a process as we go.\n",
    );
    let sketch = source_file(&sources, "sketch.png", [0x89, b'P', b'N', b'G', 0, 1, 2, 3]);
    let memo = source_file(&sources, "memo.md", "# Memo\nTags as a tool for pre-threading.\n");
    let notes = source_file(&sources, "notes.txt", "When should you begin threading?\n");
    let table = source_file(&sources, "table.csv", "week,threads\n1,0\n2,3\n");

    step(&["init", "jen", "--title", "Traceability design study"]);
    let kickoff = step(&["activity", "add", "--title", "Kickoff meeting", "--occurred", "2021-04-01T15:00:00Z", "--tag", "threads"]);
    let workshop = step(&["activity", "add", "--title", "Design workshop", "--occurred", "2021-05-10", "--tag", "pre-threading"]);
    let interview = step(&["activity", "add", "--title", "Interview with Boris Lind", "--occurred", "2022-04-01", "--private"]);

    let t1 = step(&["artifact", "add", &kickoff, transcript.to_str().unwrap(), "--kind", "transcript", "--desc", "Kickoff recording transcript"]);
    step(&["artifact", "add", &kickoff, sketch.to_str().unwrap(), "--kind", "sketchbook page", "--desc", "Whiteboard sketch", "--cleared-for-export"]);
    let m = step(&["artifact", "add", &workshop, memo.to_str().unwrap(), "--kind", "memo", "--desc", "Memo on tags", "--tag", "pre-threading"]);
    step(&["artifact", "add", &workshop, notes.to_str().unwrap(), "--kind", "notes", "--desc", "Open question"]);
    step(&["artifact", "add", &interview, table.to_str().unwrap(), "--kind", "data", "--desc", "Thread counts"]);

    step(&["alias", "add", "Ada", "Quill"]);
    step(&["alias", "add", "Boris", "Lind"]);

    let thread = step(&["thread", "new", "Research Thread Concept", "--desc", "How the thread idea evolved"]);
    step(&["thread", "add", &thread, "--activity", &kickoff, "--why", "first mention of threads"]);
    step(&["thread", "add", &thread, "--activity", &kickoff, "--artifact", &t1, "--from", "0", "--to", "40", "--why", "Ada Quill asks the question"]);
    step(&["thread", "add", &thread, "--activity", &workshop, "--artifact", &m, "--why", "tags as pre-threading"]);
    step(&["thread", "add", &thread, "--activity", &workshop, "--why", "workshop follow-up"]);

    let cite_thread = step(&["cite", "thread", &thread]);
    let cite_activity = step(&["cite", "activity", &workshop[..8]]);
    let manuscript = source_file(
        &sources,
        "draft.md",
        format!(
            "# Introduction\nThreads trace insight {cite_thread}.\n\n# Findings\nTags helped seed threads {cite_activity}.\n"
        ),
    );
    let report = step(&["report", "add", manuscript.to_str().unwrap(), "--title", "Draft"]);
    step(&["report", "check", &report]);
    step(&["check"]);
    step(&["export", bundle.to_str().unwrap()]);
    step(&["verify-bundle", bundle.to_str().unwrap()]);

    GoldenRun { steps, repo, bundle }
}

/// Randomized operation sequences against a real repository. Rejected
/// operations must leave the project untouched.
pub struct Fuzzer {
    pub rng: ChaCha8Rng,
    pub ops_applied: usize,
    pub ops_rejected: usize,
    pub merges_checked: usize,
}

const LABELS: &[&str] = &["threads", "pre-threading", "convergence", "nlp", "Threads"];
const KINDS: &[&str] = &["transcript", "memo", "sketchbook page", "notes"];

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> Option<&'a T> {
    items.choose(rng)
}

/// (target, rationale with merge provenance removed) for every evidence entry.
pub fn evidence_multiset(project: &Project) -> Vec<(String, String)> {
    let mut all = Vec::new();
    for thread in &project.threads {
        for entry in &thread.evidence {
            if let EntryItem::Evidence { target, .. } = &entry.item {
                all.push((
                    serde_json::to_string(target).unwrap(),
                    strip_provenance(&entry.rationale).to_string(),
                ));
            }
        }
    }
    all.sort();
    all
}

fn strip_provenance(mut rationale: &str) -> &str {
    while let Some(rest) = rationale.strip_prefix("[merged from \"") {
        match rest.find("] ") {
            Some(end) => rationale = &rest[end + 2..],
            None => break,
        }
    }
    rationale
}

impl Fuzzer {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            ops_applied: 0,
            ops_rejected: 0,
            merges_checked: 0,
        }
    }

    fn time(&mut self) -> Timestamp {
        Timestamp::from_unix(1_600_000_000 + self.rng.gen_range(0..40) * 86_400).unwrap()
    }

    /// Applies one random operation. Returns an error description if an
    /// invariant broke.
    pub fn step(
        &mut self,
        session: &mut WriteSession<'_>,
        project: &mut Project,
        ctx: &mut Context,
        sources: &Path,
    ) -> Result<(), String> {
        let now = self.time();
        ctx.set_now(now);
        let before = project.clone();
        let activities: Vec<Uuid> = project.activities.iter().map(|a| a.id).collect();
        let artifacts: Vec<(Uuid, Uuid)> = project
            .activities
            .iter()
            .flat_map(|a| a.artifacts.iter().map(move |x| (a.id, x.id)))
            .collect();
        let threads: Vec<Uuid> = project.threads.iter().map(|t| t.id).collect();
        let active: Vec<Uuid> = project.threads.iter().filter(|t| t.is_active()).map(|t| t.id).collect();
        // A small share of ids point nowhere so rejections get exercised.
        let bogus = Uuid::from_u128(self.rng.gen());
        let thread_or_bogus = |rng: &mut ChaCha8Rng| {
            if rng.gen_bool(0.05) {
                bogus
            } else if rng.gen_bool(0.85) && !active.is_empty() {
                *pick(rng, &active).unwrap()
            } else {
                pick(rng, &threads).copied().unwrap_or(bogus)
            }
        };

        let op = self.rng.gen_range(0..10);
        let result: tracekit::Result<()> = match op {
            0 => {
                let at = self.time();
                let tags: Vec<String> = (0..self.rng.gen_range(0..3))
                    .map(|_| pick(&mut self.rng, LABELS).unwrap().to_string())
                    .collect();
                let title = if self.rng.gen_bool(0.05) { "" } else { "meeting" };
                let private = self.rng.gen_bool(0.2);
                project.add_activity(ctx, title, at, &tags, private).map(drop)
            }
            1 => {
                let activity = pick(&mut self.rng, &activities).copied().unwrap_or(bogus);
                let n: u32 = self.rng.gen();
                let (name, body): (String, Vec<u8>) = if self.rng.gen_bool(0.8) {
                    (format!("s{n}.txt"), format!("note {n}\nline two\n").into_bytes())
                } else {
                    (format!("s{n}.png"), n.to_le_bytes().to_vec())
                };
                let path = source_file(sources, &name, body);
                let kind = *pick(&mut self.rng, KINDS).unwrap();
                let desc = if self.rng.gen_bool(0.05) { " " } else { "a description" };
                session
                    .ingest_artifact(project, ctx, activity, &path, kind, desc, &[])
                    .map(drop)
            }
            2 => {
                let id = if self.rng.gen_bool(0.5) || artifacts.is_empty() {
                    pick(&mut self.rng, &activities).copied().unwrap_or(bogus)
                } else {
                    pick(&mut self.rng, &artifacts).unwrap().1
                };
                let label = pick(&mut self.rng, LABELS).unwrap().to_string();
                project.tag_entity(id, &[label])
            }
            3 => {
                let name = if self.rng.gen_bool(0.05) { "" } else { "thread" };
                threading::create_thread(project, ctx, name, "why it matters").map(drop)
            }
            4 | 5 => {
                let thread = thread_or_bogus(&mut self.rng);
                let target = match (self.rng.gen_range(0..3), pick(&mut self.rng, &artifacts)) {
                    (1, Some(&(act, art))) => EvidenceTarget::artifact(act, art),
                    (2, Some(&(act, art))) => {
                        match threading::extract_fragment(project, session.repository(), art, 0, 4) {
                            Ok(f) => EvidenceTarget::fragment(act, art, f),
                            Err(_) => EvidenceTarget::artifact(act, art),
                        }
                    }
                    _ => EvidenceTarget::activity(
                        pick(&mut self.rng, &activities).copied().unwrap_or(bogus),
                    ),
                };
                let why = if self.rng.gen_bool(0.05) { "" } else { "because" };
                threading::add_evidence(project, ctx, thread, target, why)
            }
            6 => {
                let absorber = thread_or_bogus(&mut self.rng);
                let absorbed = thread_or_bogus(&mut self.rng);
                let counts = |p: &Project| {
                    (
                        p.thread(absorber).map_or(0, |t| t.evidence.len()),
                        p.thread(absorbed).map_or(0, |t| t.evidence.len()),
                    )
                };
                let (a, b) = counts(project);
                let multiset = evidence_multiset(project);
                let r = threading::merge_threads(project, ctx, absorber, absorbed, "absorbed");
                if r.is_ok() {
                    self.merges_checked += 1;
                    let (a2, b2) = counts(project);
                    if a2 != a + b + 1 || b2 != 0 {
                        return Err(format!("merge counts: {a}+{b}+1 != {a2}, absorbed left {b2}"));
                    }
                    if evidence_multiset(project) != multiset {
                        return Err("merge changed the evidence multiset".into());
                    }
                    if project.thread(absorbed).unwrap().status != ThreadStatus::MergedAway {
                        return Err("absorbed thread not merged_away".into());
                    }
                }
                r
            }
            7 => {
                let source = thread_or_bogus(&mut self.rng);
                threading::branch_thread(project, ctx, source, "branch", "parallel probe").map(drop)
            }
            8 => {
                let thread = thread_or_bogus(&mut self.rng);
                threading::mark_dead_end(project, ctx, thread, "did not pan out")
            }
            _ => {
                let thread = thread_or_bogus(&mut self.rng);
                let len = project.thread(thread).map_or(0, |t| t.evidence.len());
                let index = self.rng.gen_range(0..len + 2);
                threading::remove_evidence(project, thread, index).map(drop)
            }
        };
        match result {
            Ok(()) => self.ops_applied += 1,
            Err(e) => {
                self.ops_rejected += 1;
                if *project != before {
                    return Err(format!("rejected op {op} ({e}) mutated the project"));
                }
            }
        }
        Ok(())
    }

    /// One sequence in a fresh repository: random ops, then save, reload,
    /// validate and check files.
    pub fn sequence(&mut self, work: &Path, len: usize) -> Result<(), String> {
        let root = work.join("repo");
        let sources = work.join("src");
        let seed: [u8; 8] = self.rng.gen();
        let mut ctx = Context::fixed(ts("2020-09-13"), &seed);
        let (repo, mut project) =
            Repository::init(&root, "fuzz", "fuzz", &ctx).map_err(|e| e.to_string())?;
        let mut session = repo.lock().map_err(|e| e.to_string())?;
        for _ in 0..len {
            self.step(&mut session, &mut project, &mut ctx, &sources)?;
            let report = tracekit::validate::validate_project(&project);
            if !report.is_clean() {
                return Err(format!("invalid after op: {report}"));
            }
        }
        session
            .save(&project, SaveOptions::default())
            .map_err(|e| e.to_string())?;
        drop(session);
        let loaded = repo.load().map_err(|e| e.to_string())?;
        if loaded.project != project {
            return Err("reloaded project differs".into());
        }
        if !loaded.report.is_clean() {
            return Err(format!("reloaded repository not clean: {}", loaded.report));
        }
        Ok(())
    }
}
