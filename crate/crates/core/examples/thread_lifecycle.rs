//! Build threads from evidence, then merge, branch and abandon them.
//!
//! `cargo run --example thread_lifecycle`

use tracekit::model::{Context, EvidenceTarget, Project, Timing};
use tracekit::threading::{add_evidence, branch_thread, create_thread, mark_dead_end, merge_threads, seed_from_tag};
use tracekit::validate::validate_project;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ctx = Context::fixed("2021-06-01T09:00:00Z".parse()?, b"thread example");
    let mut project = Project::new("evobio", "Evolutionary biology design study", ctx.now());
    let tag = vec!["convergence".to_string()];

    let sketch = project.add_activity(&mut ctx, "Sketching session", "2021-03-02".parse()?, &tag, false)?;
    let meeting = project.add_activity(&mut ctx, "Collaborator meeting", "2021-04-15".parse()?, &tag, false)?;

    // Seed a thread from everything tagged so far.
    let convergence = create_thread(&mut project, &mut ctx, "convergence", "a standalone design direction")?;
    for candidate in seed_from_tag(&project, "convergence") {
        add_evidence(&mut project, &mut ctx, convergence, candidate.target, "tagged as convergence early on")?;
    }

    ctx.set_now("2021-09-01T09:00:00Z".parse()?);
    let later = project.add_activity(&mut ctx, "Design review", "2021-10-01".parse()?, &[], false)?;
    let patterns = create_thread(&mut project, &mut ctx, "patterns of evolution", "the broader design goal")?;
    add_evidence(&mut project, &mut ctx, patterns, EvidenceTarget::activity(meeting), "where the idea widened")?;
    ctx.set_now("2021-10-02T09:00:00Z".parse()?);
    add_evidence(&mut project, &mut ctx, patterns, EvidenceTarget::activity(later), "reported as the central focus")?;

    merge_threads(&mut project, &mut ctx, patterns, convergence, "convergence was absorbed into the broader concept")?;

    let probe = branch_thread(&mut project, &mut ctx, patterns, "NLP for entry points", "auto-suggest leads")?;
    add_evidence(&mut project, &mut ctx, probe, EvidenceTarget::activity(sketch), "initial brainstorm")?;
    mark_dead_end(&mut project, &mut ctx, probe, "the recommended leads did not guide the work")?;

    for thread in &project.threads {
        println!("{} ({}), {} entries", thread.name, thread.status, thread.evidence.len());
        for entry in &thread.evidence {
            let link = match entry.timing() {
                Some(Timing::Retroactive) => "dotted",
                Some(Timing::Forward) => "solid ",
                None => "note  ",
            };
            println!("  {link} {}", entry.rationale);
        }
    }
    println!("valid: {}", validate_project(&project).is_clean());
    Ok(())
}
