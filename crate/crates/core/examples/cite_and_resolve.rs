//! Format, parse, scan and resolve deep-link citations.
//!
//! `cargo run --example cite_and_resolve`

use tracekit::citation::{
    format_citation, parse_citation, parse_url_query, resolve_citation, scan_citations, url_form, Citation,
    CitedGranularity, View,
};
use tracekit::model::{Context, Project};
use tracekit::threading::create_thread;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut ctx = Context::fixed("2021-06-01T00:00:00Z".parse()?, b"cite example");
    let mut project = Project::new("jen", "Traceability study", ctx.now());
    let thread = create_thread(&mut project, &mut ctx, "Research Thread Concept", "how the idea evolved")?;

    let citation = Citation::new("jen", View::Overview, CitedGranularity::Thread, thread.to_string());
    let text = format_citation(&citation);
    println!("citation: {text}");
    println!("url:      {}", url_form(&citation, "https://reader.example.org"));
    println!("resolves: {:?}", resolve_citation(&project, &citation).map(|t| t.id()));

    // Citations copied from elsewhere parse even when the id is not a UUID.
    let foreign = parse_citation(r"\trrracer{jen}{paper}{artifact}{1-ynzmohY1iqCgi0Od5bA5bEUFtbJ-Jqr}")?;
    println!("foreign id: {}", foreign.citation.id);

    // Whitespace is tolerated but flagged; errors carry a character position.
    let loose = parse_citation(r"\trrracer{ jen }{overview}{thread}{abc}")?;
    println!("canonical: {}", loose.canonical);
    let err = parse_citation(r"\trrracer{jen}{sideways}{thread}{abc}").unwrap_err();
    println!("error at {}: {}", err.position, err.reason);

    let manuscript = format!("We traced it [{text}] and also [\\trrracer{{jen}}{{overview}}]");
    for hit in scan_citations(&manuscript) {
        println!("{}..{} ok={}", hit.start, hit.end, hit.parsed.is_ok());
    }

    let url = url_form(&citation, "https://reader.example.org/");
    assert_eq!(parse_url_query(&url)?, citation);
    Ok(())
}
