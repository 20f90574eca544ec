//! The whole workflow through the `trace` command line, run in-process.
//!
//! `cargo run --example end_to_end`
//!
//! Each line printed is the command followed by its exit code and output.

use std::fs;

fn trace(args: &[String]) -> String {
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = tracekit::cli::run(std::iter::once("trace").chain(args.iter().copied()), &mut out, &mut err);
    let out = String::from_utf8_lossy(&out).trim().to_string();
    println!("$ trace {} -> {code}\n{out}{}", args[4..].join(" "), String::from_utf8_lossy(&err).trim());
    out
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    let repo = scratch.path().join("repo");
    let repo = repo.to_str().unwrap();
    let transcript = scratch.path().join("kickoff.txt");
    fs::write(&transcript, "We should leave traces of a process as we go.\n")?;
    let g = ["--repo", repo, "--now", "2022-03-01T10:00:00Z"];
    let with = |rest: &[&str]| -> Vec<String> { g.iter().chain(rest).map(|s| s.to_string()).collect() };

    trace(&with(&["init", "jen", "--title", "Traceability study"]));
    let activity = trace(&with(&["activity", "add", "--title", "Kickoff", "--occurred", "2021-04-01", "--tag", "threads"]));
    let artifact = trace(&with(&["artifact", "add", &activity, transcript.to_str().unwrap(), "--kind", "transcript", "--desc", "Kickoff transcript"]));
    let thread = trace(&with(&["thread", "new", "Research Thread Concept", "--desc", "How threads came about"]));
    trace(&with(&["thread", "add", &thread, "--artifact", &artifact, "--from", "16", "--to", "45", "--why", "first mention"]));
    let citation = trace(&with(&["cite", "thread", &thread[..8], "--url", "https://reader.example.org"]));

    let draft = scratch.path().join("draft.md");
    fs::write(&draft, format!("# Findings\nThreads began early {}.\n", citation.lines().next().unwrap()))?;
    let report = trace(&with(&["report", "add", draft.to_str().unwrap(), "--title", "Draft"]));
    trace(&with(&["report", "check", &report]));
    trace(&with(&["check"]));
    let bundle = scratch.path().join("bundle");
    trace(&with(&["export", bundle.to_str().unwrap()]));
    trace(&with(&["verify-bundle", bundle.to_str().unwrap()]));
    Ok(())
}
