//! Index a manuscript's citations by section and verify it.
//!
//! `cargo run --example report_index`

use std::fs;

use tracekit::citation::{Citation, CitedGranularity, View};
use tracekit::model::Context;
use tracekit::report::{index_report, ingest_report, verify_report};
use tracekit::store::{Repository, SaveOptions};
use tracekit::threading::create_thread;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    let mut ctx = Context::system();
    let (repo, mut project) = Repository::init(scratch.path().join("repo"), "jen", "Traceability study", &ctx)?;
    let mut session = repo.lock()?;
    let workshop = project.add_activity(&mut ctx, "Workshop", "2021-05-01".parse()?, &[], false)?;
    let interview = project.add_activity(&mut ctx, "Interview", "2021-05-03".parse()?, &[], true)?;
    let thread = create_thread(&mut project, &mut ctx, "Tags", "tags as pre-threading")?;

    let cite = |g, id: uuid::Uuid| Citation::new("jen", View::Paper, g, id.to_string()).to_string();
    let draft = format!(
        "# Method\nWe ran a workshop {}.\n\n# Findings\nTags helped {} and an interview said so {}.\n\
         A typo: \\trrracer{{jen}}{{paper}}{{thread}}\n",
        cite(CitedGranularity::Activity, workshop),
        cite(CitedGranularity::Thread, thread),
        cite(CitedGranularity::Activity, interview),
    );
    let path = scratch.path().join("draft.md");
    fs::write(&path, draft)?;
    let report = ingest_report(&mut session, &mut project, &mut ctx, &path, "Draft")?;
    session.save(&project, SaveOptions::default())?;
    drop(session);

    let index = index_report(&project, &repo, report)?;
    for section in &index.sections {
        println!("section {} {:?}: {} citations", section.ordinal, section.heading, section.citations.len());
    }
    for broken in &index.broken {
        println!("broken at {}: {}", broken.position, broken.reason);
    }
    let verdict = verify_report(&project, &repo, report)?;
    println!("pass: {}", verdict.pass);
    for problem in &verdict.problems {
        println!("  {problem}");
    }
    Ok(())
}
