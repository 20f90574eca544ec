mod common;

use proptest::prelude::*;

use common::{source_file, ts};
use tracekit::citation::{
    format_citation, parse_citation, parse_url_query, scan_citations, url_form, Citation, CitedGranularity, View,
};
use tracekit::export::{export_bundle, redact_text, register_alias, verify_bundle, ExportOptions};
use tracekit::model::{initials, AliasEntry, Context, EvidenceGranularity, Project, Timestamp};
use tracekit::store::{Repository, SaveOptions};
use tracekit::threading::seed_from_tag;

fn field() -> impl Strategy<Value = String> {
    "[^{}\\s]{1,20}"
}

fn view() -> impl Strategy<Value = View> {
    prop_oneof![Just(View::Overview), Just(View::Paper)]
}

fn granularity() -> impl Strategy<Value = CitedGranularity> {
    prop_oneof![
        Just(CitedGranularity::Activity),
        Just(CitedGranularity::Artifact),
        Just(CitedGranularity::Thread)
    ]
}

fn citation() -> impl Strategy<Value = Citation> {
    (field(), view(), granularity(), field()).prop_map(|(p, v, g, id)| Citation::new(p, v, g, id))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn citation_text_round_trips(c in citation()) {
        let text = format_citation(&c);
        let parsed = parse_citation(&text).unwrap();
        prop_assert!(parsed.canonical);
        prop_assert_eq!(parsed.citation, c);
    }

    #[test]
    fn citation_url_round_trips(c in citation(), base in "https?://[a-z]{1,8}\\.org(/[a-z]{1,5}){0,2}") {
        prop_assert_eq!(parse_url_query(&url_form(&c, &base)).unwrap(), c);
    }

    #[test]
    fn scanner_finds_every_embedded_citation(
        cs in prop::collection::vec(citation(), 0..5),
        filler in "[a-z .,\n]{0,30}",
    ) {
        let text: String = cs.iter().map(|c| format!("{filler}{c}")).collect();
        let found: Vec<Citation> = scan_citations(&text)
            .into_iter()
            .map(|m| m.parsed.unwrap().citation)
            .collect();
        prop_assert_eq!(found, cs);
    }

    #[test]
    fn redaction_is_idempotent(
        names in prop::collection::btree_set("[A-Z][a-z]{2,6}( [A-Z][a-z]{2,8})?", 1..5),
        words in prop::collection::vec("[a-zA-Z]{1,8}", 0..30),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..10),
    ) {
        let mut project = Project::new("p", "t", ts("2021-01-01"));
        for name in &names {
            // Registration refuses replacements that reintroduce a name; skip those.
            let _ = register_alias(&mut project, name, None);
        }
        let registry: &[AliasEntry] = &project.alias_registry;
        prop_assume!(!registry.is_empty());
        let mut text = words.join(" ");
        for idx in &picks {
            let entry = idx.get(registry);
            text.push(' ');
            text.push_str(&entry.full_name.to_uppercase());
        }
        let once = redact_text(&text, registry);
        prop_assert_eq!(redact_text(&once, registry), once.clone());
        for entry in registry {
            prop_assert!(!once.to_lowercase().contains(&entry.full_name.to_lowercase()));
        }
    }

    #[test]
    fn initials_take_the_first_letter_of_each_word(words in prop::collection::vec("[a-zé][a-z]{0,6}", 1..4)) {
        let name = words.join("  ");
        let expected: String = words.iter().map(|w| w.chars().next().unwrap().to_uppercase().collect::<String>()).collect();
        prop_assert_eq!(initials(&name), expected);
    }

    #[test]
    fn seeding_matches_a_brute_force_scan(
        acts in prop::collection::vec((0i64..20, any::<bool>(), prop::collection::vec(any::<bool>(), 0..3)), 0..12),
    ) {
        let mut ctx = Context::fixed(ts("2021-01-01"), b"seed");
        let mut p = Project::new("p", "t", ctx.now());
        for (day, tagged, artifacts) in &acts {
            let tags = if *tagged { vec!["Convergence".to_string()] } else { vec![] };
            let at = Timestamp::from_unix(1_600_000_000 + day * 86_400).unwrap();
            let a = p.add_activity(&mut ctx, "a", at, &tags, false).unwrap();
            for tagged in artifacts {
                let id = ctx.mint_id();
                p.activity_mut(a).unwrap().artifacts.push(tracekit::model::Artifact {
                    id,
                    kind: "memo".into(),
                    description: "d".into(),
                    tags: if *tagged { ["convergence".to_string()].into() } else { Default::default() },
                    file_ref: format!("files/{id}.txt"),
                    media_class: tracekit::model::MediaClass::Text,
                    checksum: String::new(),
                    private: false,
                    cleared_for_export: false,
                });
            }
        }
        // Brute force: every tagged entity, sorted by (time, activity before artifact, ids).
        let mut expected = Vec::new();
        for a in &p.activities {
            if a.tags.iter().any(|t| t.eq_ignore_ascii_case("convergence")) {
                expected.push((a.occurred_at, 0, a.id, None));
            }
            for x in &a.artifacts {
                if x.tags.iter().any(|t| t.eq_ignore_ascii_case("convergence")) {
                    expected.push((a.occurred_at, 1, a.id, Some(x.id)));
                }
            }
        }
        expected.sort();
        let got: Vec<_> = seed_from_tag(&p, "CONVERGENCE")
            .into_iter()
            .map(|c| {
                let rank = match c.target.granularity {
                    EvidenceGranularity::Activity => 0,
                    _ => 1,
                };
                (c.occurred_at, rank, c.target.activity_id, c.target.artifact_id)
            })
            .collect();
        prop_assert_eq!(got, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Export of any clean project verifies, and exporting twice is byte-identical.
    #[test]
    fn export_verifies_and_is_deterministic(
        private_mask in prop::collection::vec(any::<bool>(), 1..5),
        mention in prop::collection::vec(any::<bool>(), 1..5),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut ctx = Context::fixed(ts("2021-06-01"), b"export");
        let (repo, mut project) = Repository::init(dir.path().join("repo"), "p", "t", &ctx).unwrap();
        let mut s = repo.lock().unwrap();
        register_alias(&mut project, "Ada Quill", None).unwrap();
        for (i, private) in private_mask.iter().enumerate() {
            let said = if mention.get(i).copied().unwrap_or(false) { "Ada Quill" } else { "someone" };
            let a = project.add_activity(&mut ctx, &format!("call with {said}"), ts("2021-05-01"), &[], *private).unwrap();
            let f = source_file(&dir.path().join("src"), &format!("{i}.txt"), format!("{said} spoke\n"));
            s.ingest_artifact(&mut project, &mut ctx, a, &f, "memo", said, &[]).unwrap();
        }
        s.save(&project, SaveOptions::default()).unwrap();
        drop(s);
        let (b1, b2) = (dir.path().join("b1"), dir.path().join("b2"));
        export_bundle(&repo, &project, &b1, ExportOptions::default()).unwrap();
        export_bundle(&repo, &project, &b2, ExportOptions::default()).unwrap();
        let verdict = verify_bundle(&b1);
        prop_assert!(verdict.pass, "{:?}", verdict.violations);
        prop_assert_eq!(common::tree(&b1), common::tree(&b2));
    }
}
