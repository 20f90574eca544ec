mod common;

use std::fs;
use std::path::Path;

use common::{golden_session, source_file, trace, tree};

fn at(repo: &Path) -> Vec<String> {
    vec!["--repo".into(), repo.to_str().unwrap().into(), "--now".into(), "2022-01-01T00:00:00Z".into()]
}

fn run(repo: &Path, args: &[&str]) -> (i32, String, String) {
    let mut full = at(repo);
    full.extend(args.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = full.iter().map(String::as_str).collect();
    trace(&refs)
}

fn init(dir: &Path) -> std::path::PathBuf {
    let repo = dir.join("repo");
    let (code, _, err) = run(&repo, &["init", "jen", "--title", "Study"]);
    assert_eq!(code, 0, "{err}");
    repo
}

#[test]
fn golden_session_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let one = golden_session(&dir.path().join("a"));
    let two = golden_session(&dir.path().join("b"));
    for (step, code) in &one.steps {
        assert_eq!(*code, 0, "{step}");
    }
    assert_eq!(
        fs::read(one.repo.join("trace.json")).unwrap(),
        fs::read(two.repo.join("trace.json")).unwrap()
    );
    assert_eq!(tree(&one.bundle), tree(&two.bundle));
}

#[test]
fn empty_rationale_is_refused_with_the_rule() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let (_, aid, _) = run(&repo, &["activity", "add", "--title", "m", "--occurred", "2021-01-01"]);
    let (_, tid, _) = run(&repo, &["thread", "new", "t", "--desc", "d"]);
    let before = fs::read(repo.join("trace.json")).unwrap();
    let (code, _, err) = run(&repo, &["thread", "add", tid.trim(), "--activity", aid.trim(), "--why", ""]);
    assert_eq!(code, 1);
    assert!(err.contains("rationale required"), "{err}");
    assert_eq!(fs::read(repo.join("trace.json")).unwrap(), before);
}

#[test]
fn failed_ingest_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let (_, aid, _) = run(&repo, &["activity", "add", "--title", "m", "--occurred", "2021-01-01"]);
    let f = source_file(&dir.path().join("src"), "a.txt", "text");
    let (code, _, err) = run(&repo, &["artifact", "add", aid.trim(), f.to_str().unwrap(), "--kind", "memo", "--desc", " "]);
    assert_eq!(code, 1);
    assert!(err.contains("description required"), "{err}");
    assert_eq!(fs::read_dir(repo.join("files")).unwrap().count(), 0);
    assert!(!repo.join(".trace.lock").exists());
}

#[test]
fn json_mode_emits_one_document() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let (code, out, _) = run(&repo, &["--json", "activity", "add", "--title", "m", "--occurred", "2021-01-01", "--tag", "x"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["ok"], true);
    assert_eq!(doc["command"], "activity add");
    let id = doc["result"]["id"].as_str().unwrap().to_string();

    let (code, out, _) = run(&repo, &["--json", "tag", "ls"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["result"][0]["label"], "x");
    assert_eq!(doc["result"][0]["uses"], 1);

    let (code, out, _) = run(&repo, &["--json", "cite", "activity", &id, "--url", "https://reader.example"]);
    assert_eq!(code, 0);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["result"]["citation"], format!("\\trrracer{{jen}}{{overview}}{{activity}}{{{id}}}"));
    assert!(doc["result"]["url"].as_str().unwrap().ends_with(&format!("granularity=activity&id={id}")));

    let (code, out, _) = run(&repo, &["--json", "thread", "merge", "aaaaaaaa", "bbbbbbbb", "--why", "x"]);
    assert_eq!(code, 1);
    let doc: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(doc["ok"], false);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    // Usage errors.
    assert_eq!(run(&repo, &["thread", "add"]).0, 2);
    assert_eq!(run(&repo, &["activity", "add", "--title", "x", "--occurred", "yesterday"]).0, 2);
    assert_eq!(run(&repo, &["cite", "thread", "abc"]).0, 2);
    // Domain rejections.
    assert_eq!(run(&repo, &["cite", "thread", "abcdef12"]).0, 1);
    assert_eq!(run(&dir.path().join("nowhere"), &["check"]).0, 1);
    assert_eq!(run(&repo, &["init", "jen", "--title", "again"]).0, 1);
    assert_eq!(run(&repo, &["check"]).0, 0);
    assert_eq!(trace(&["--help"]).0, 0);
}

#[test]
fn ambiguous_prefix_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    // Force a collision by hand-adding a twin that shares the first eight characters.
    let (_, a, _) = run(&repo, &["activity", "add", "--title", "m", "--occurred", "2021-01-01"]);
    let a = a.trim();
    let mut manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(repo.join("trace.json")).unwrap()).unwrap();
    let mut twin = manifest["project"]["activities"][0].clone();
    let twin_id = format!("{}{}", &a[..8], "-0000-4000-8000-000000000000");
    twin["id"] = twin_id.clone().into();
    manifest["project"]["activities"].as_array_mut().unwrap().push(twin);
    fs::write(repo.join("trace.json"), serde_json::to_string_pretty(&manifest).unwrap()).unwrap();
    let (code, _, err) = run(&repo, &["cite", "activity", &a[..8]]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("ambiguous"));
    assert_eq!(run(&repo, &["cite", "activity", &a[..12]]).0, 0);
}

#[test]
fn lock_held_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    fs::write(repo.join(".trace.lock"), "{\"pid\":1,\"tool\":\"other\"}").unwrap();
    let (code, _, err) = run(&repo, &["activity", "add", "--title", "m", "--occurred", "2021-01-01"]);
    assert_eq!(code, 1);
    assert!(err.contains("lock"), "{err}");
}

#[test]
fn report_check_fails_on_private_citation() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let (_, a, _) = run(&repo, &["activity", "add", "--title", "m", "--occurred", "2021-01-01", "--private"]);
    let (_, cite, _) = run(&repo, &["cite", "activity", a.trim()]);
    let draft = source_file(&dir.path().join("src"), "d.md", format!("# S\nsee {}\n", cite.trim()));
    let (_, rid, _) = run(&repo, &["report", "add", draft.to_str().unwrap(), "--title", "Draft"]);
    let (code, out, _) = run(&repo, &["report", "check", rid.trim()]);
    assert_eq!(code, 1);
    assert!(out.contains(&format!("cites private activity {}", a.trim())), "{out}");
}

#[test]
fn seed_lists_tagged_entities_chronologically() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let (_, late, _) = run(&repo, &["activity", "add", "--title", "late", "--occurred", "2021-03-01", "--tag", "convergence"]);
    let (_, early, _) = run(&repo, &["activity", "add", "--title", "early", "--occurred", "2021-01-01", "--tag", "Convergence"]);
    run(&repo, &["activity", "add", "--title", "other", "--occurred", "2021-02-01"]);
    let (code, out, _) = run(&repo, &["seed", "convergence"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains(early.trim()) && lines[1].contains(late.trim()));
}

#[test]
fn merge_branch_and_dead_end_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let repo = init(dir.path());
    let (_, a, _) = run(&repo, &["activity", "add", "--title", "m", "--occurred", "2021-01-01"]);
    let (_, big, _) = run(&repo, &["thread", "new", "patterns of evolution", "--desc", "d"]);
    let (_, small, _) = run(&repo, &["thread", "new", "convergence", "--desc", "d"]);
    let (big, small, a) = (big.trim(), small.trim(), a.trim());
    assert_eq!(run(&repo, &["thread", "add", small, "--activity", a, "--why", "early sketch"]).0, 0);
    assert_eq!(run(&repo, &["thread", "merge", big, small, "--why", "absorbed"]).0, 0);
    assert_eq!(run(&repo, &["thread", "add", small, "--activity", a, "--why", "late"]).0, 1);
    let (code, probe, _) = run(&repo, &["thread", "branch", big, "probe", "--desc", "parallel"]);
    assert_eq!(code, 0);
    assert_eq!(run(&repo, &["thread", "deadend", probe.trim(), "--why", "no leads"]).0, 0);
    assert_eq!(run(&repo, &["thread", "rm", big, "0"]).0, 0);
    assert_eq!(run(&repo, &["check"]).0, 0);
}
