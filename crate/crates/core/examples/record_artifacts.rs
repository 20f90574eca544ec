//! Create a repository, record activities and ingest artifacts.
//!
//! `cargo run --example record_artifacts`

use std::fs;

use tracekit::model::Context;
use tracekit::store::{Repository, SaveOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    let sources = scratch.path().join("sources");
    fs::create_dir_all(&sources)?;
    fs::write(sources.join("interview1.txt"), "Could we auto-suggest leads from our notes?\n")?;
    fs::write(sources.join("sketch.png"), [0x89, b'P', b'N', b'G'])?;

    let mut ctx = Context::system();
    let (repo, mut project) = Repository::init(scratch.path().join("repo"), "jen", "Traceability study", &ctx)?;
    let mut session = repo.lock()?;

    let meeting = project.add_activity(&mut ctx, "Weekly meeting", "2021-04-06".parse()?, &["threads".into()], false)?;
    let interview = project.add_activity(&mut ctx, "Participant interview", "2021-04-08".parse()?, &[], true)?;

    let transcript = session.ingest_artifact(
        &mut project,
        &mut ctx,
        interview,
        &sources.join("interview1.txt"),
        "transcript",
        "Automatic transcript of the interview",
        &["nlp".into()],
    )?;
    let sketch = session.ingest_artifact(
        &mut project,
        &mut ctx,
        meeting,
        &sources.join("sketch.png"),
        "sketchbook page",
        "Whiteboard sketch of the thread view",
        &[],
    )?;
    project.set_cleared_for_export(sketch, true)?;

    // Kind and description are mandatory: this is refused before anything is written.
    let refused = session.ingest_artifact(&mut project, &mut ctx, meeting, &sources.join("sketch.png"), "memo", "", &[]);
    println!("empty description: {}", refused.unwrap_err());

    session.save(&project, SaveOptions::default())?;
    drop(session);

    let loaded = repo.load()?;
    println!("clean after reload: {}", loaded.report.is_clean());
    for activity in &loaded.project.activities {
        for artifact in &activity.artifacts {
            println!(
                "{} [{}] {} -> {} sha256:{}",
                activity.title,
                artifact.kind,
                artifact.media_class.as_str(),
                artifact.file_ref,
                &artifact.checksum[..12]
            );
        }
    }
    let (_, t) = loaded.project.artifact(transcript).expect("recorded");
    println!("transcript text: {:?}", repo.artifact_text(t)?);
    Ok(())
}
