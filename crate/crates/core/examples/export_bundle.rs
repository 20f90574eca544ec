//! Redact names, drop private material, export a bundle and verify it.
//!
//! `cargo run --example export_bundle`

use std::fs;

use tracekit::export::{export_bundle, register_alias, verify_bundle, ExportOptions, BUNDLE_FILE};
use tracekit::model::{Context, EvidenceTarget};
use tracekit::store::{Repository, SaveOptions};
use tracekit::threading::{add_evidence, create_thread};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    let notes = scratch.path().join("notes.txt");
    fs::write(&notes, "Ada Quill suggested we thread as we go.\n")?;

    let mut ctx = Context::system();
    let (repo, mut project) = Repository::init(scratch.path().join("repo"), "jen", "Traceability study", &ctx)?;
    let mut session = repo.lock()?;
    register_alias(&mut project, "Ada Quill", None)?;
    register_alias(&mut project, "Boris Lind", Some("Researcher B"))?;

    let meeting = project.add_activity(&mut ctx, "Meeting with Boris Lind", "2021-05-01".parse()?, &[], false)?;
    let private = project.add_activity(&mut ctx, "Interview", "2021-05-02".parse()?, &[], true)?;
    let note = session.ingest_artifact(&mut project, &mut ctx, meeting, &notes, "notes", "Notes by Ada Quill", &[])?;
    let thread = create_thread(&mut project, &mut ctx, "Threading as we go", "when to start threading")?;
    add_evidence(&mut project, &mut ctx, thread, EvidenceTarget::artifact(meeting, note), "Ada Quill proposed it")?;
    add_evidence(&mut project, &mut ctx, thread, EvidenceTarget::activity(private), "confirmed in an interview")?;
    session.save(&project, SaveOptions::default())?;
    drop(session);

    let out = scratch.path().join("bundle");
    let summary = export_bundle(&repo, &project, &out, ExportOptions::default())?;
    println!("{summary:#?}");
    let doc = fs::read_to_string(out.join(BUNDLE_FILE))?;
    println!("mentions Ada Quill: {}", doc.to_lowercase().contains("ada quill"));
    println!("mentions AQ: {}", doc.contains("AQ"));

    let verdict = verify_bundle(&out);
    println!("verify: {}", if verdict.pass { "pass" } else { "fail" });

    // Any edit after export is caught.
    fs::write(out.join(BUNDLE_FILE), doc.replace("Researcher B", "Boris Lind"))?;
    for violation in verify_bundle(&out).violations {
        println!("  {violation}");
    }
    Ok(())
}
