use std::collections::BTreeSet;
use std::io::Write;

use proptest::prelude::*;

use super::*;
use crate::store::load::FactsFormat;

fn write_temp(contents: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(contents.as_bytes()).unwrap();
    f
}

/// Naive oracle: scan every fact in scope, try each of its entities as the
/// hole filler, and compare canonical sequences positionally.
fn scan_match(
    g: &HyperGraph,
    scope: Scope,
    fact: &NAryFact,
    hole_pos: usize,
) -> BTreeSet<EntityId> {
    let mut out = BTreeSet::new();
    for split in scope.splits() {
        for stored in g.facts(split) {
            if stored.arity() != fact.arity() {
                continue;
            }
            let stored_seq = sequence_of(&stored.canonical());
            for q in 1..=stored.arity() {
                let candidate = stored.entity_at(q).unwrap();
                let completed = fact.with_entity_at(hole_pos, candidate);
                if sequence_of(&completed.canonical()) == stored_seq {
                    out.insert(candidate);
                }
            }
        }
    }
    out
}

#[test]
fn json_line_maps_fields_to_a_3ary_fact() {
    let file = write_temp(
        r#"{"s":"Q873","r":"P166","o":"Q905695","quals":[["P1686","Q837615"]]}"#,
    );
    let mut g = HyperGraph::new();
    let stats = g
        .load_facts(file.path(), Split::Train, FactsFormat::JsonLines)
        .unwrap();
    assert_eq!(stats.new_facts, 1);
    let fact = &g.facts(Split::Train)[0];
    assert_eq!(fact.arity(), 3);
    assert_eq!(g.entity_label(fact.subject), "Q873");
    assert_eq!(g.relation_label(fact.relation), "P166");
    assert_eq!(g.entity_label(fact.object), "Q905695");
    assert_eq!(g.relation_label(fact.qualifiers[0].0), "P1686");
    assert_eq!(g.entity_label(fact.qualifiers[0].1), "Q837615");
}

#[test]
fn empty_quals_is_a_binary_fact() {
    let file = write_temp(r#"{"s":"A","r":"r","o":"B","quals":[]}"#);
    let mut g = HyperGraph::new();
    g.load_facts(file.path(), Split::Train, FactsFormat::JsonLines)
        .unwrap();
    assert_eq!(g.facts(Split::Train)[0].arity(), 2);
}

#[test]
fn byte_identical_lines_are_counted_as_duplicates() {
    let file = write_temp(concat!(
        r#"{"s":"A","r":"r","o":"B","quals":[]}"#, "\n",
        r#"{"s":"A","r":"r","o":"C","quals":[]}"#, "\n",
        r#"{"s":"A","r":"r","o":"B","quals":[]}"#, "\n",
        r#"{"s":"D","r":"r","o":"B","quals":[]}"#, "\n",
        r#"{"s":"E","r":"r","o":"B","quals":[]}"#, "\n",
    ));
    let mut g = HyperGraph::new();
    let stats = g
        .load_facts(file.path(), Split::Train, FactsFormat::JsonLines)
        .unwrap();
    assert_eq!(stats.new_facts, 4);
    assert_eq!(stats.duplicates, 1);
}

#[test]
fn qualifier_order_does_not_affect_dedup() {
    let file = write_temp(concat!(
        r#"{"s":"A","r":"r","o":"B","quals":[["a1","V"],["a2","W"]]}"#, "\n",
        r#"{"s":"A","r":"r","o":"B","quals":[["a2","W"],["a1","V"]]}"#, "\n",
    ));
    let mut g = HyperGraph::new();
    let stats = g
        .load_facts(file.path(), Split::Train, FactsFormat::JsonLines)
        .unwrap();
    assert_eq!(stats.new_facts, 1);
    assert_eq!(stats.duplicates, 1);
}

#[test]
fn malformed_line_reports_line_number() {
    let file = write_temp(concat!(
        r#"{"s":"A","r":"r","o":"B","quals":[]}"#, "\n",
        r#"{"s":"A","r":"r"}"#, "\n",
    ));
    let mut g = HyperGraph::new();
    let err = g
        .load_facts(file.path(), Split::Train, FactsFormat::JsonLines)
        .unwrap_err();
    match err {
        NqeError::MalformedLine { line, .. } => assert_eq!(line, 2),
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn tsv_loader_reads_qualified_facts() {
    let file = write_temp("A\tr\tB\ta1\tV\nA\tr\tC\n");
    let mut g = HyperGraph::new();
    let stats = g
        .load_facts(file.path(), Split::Train, FactsFormat::Auto)
        .unwrap();
    assert_eq!(stats.new_facts, 2);
    assert_eq!(g.facts(Split::Train)[0].arity(), 3);
    assert_eq!(g.facts(Split::Train)[1].arity(), 2);
}

#[test]
fn tsv_even_field_count_is_malformed() {
    let file = write_temp("A\tr\tB\ta1\n");
    let mut g = HyperGraph::new();
    assert!(g
        .load_facts(file.path(), Split::Train, FactsFormat::Tsv)
        .is_err());
}

#[test]
fn reflexive_qualifiers_are_accepted_and_counted() {
    let file = write_temp(r#"{"s":"A","r":"r","o":"B","quals":[["a1","A"]]}"#);
    let mut g = HyperGraph::new();
    let stats = g
        .load_facts(file.path(), Split::Train, FactsFormat::JsonLines)
        .unwrap();
    assert_eq!(stats.new_facts, 1);
    assert_eq!(stats.reflexive_qualifiers, 1);
}

#[test]
fn sequence_of_triple_has_length_3() {
    let f = NAryFact::triple(EntityId(0), RelationId(0), EntityId(1));
    let seq = sequence_of(&f);
    assert_eq!(
        seq,
        vec![
            SeqElem::Entity(EntityId(0)),
            SeqElem::Relation(RelationId(0)),
            SeqElem::Entity(EntityId(1)),
        ]
    );
}

#[test]
fn sequence_of_3ary_interleaves_qualifier() {
    let mut f = NAryFact::triple(EntityId(0), RelationId(0), EntityId(1));
    f.qualifiers.push((RelationId(1), EntityId(2)));
    let seq = sequence_of(&f);
    assert_eq!(seq.len(), 5);
    // e3 = v1 per the alternating form
    assert_eq!(seq[3], SeqElem::Relation(RelationId(1)));
    assert_eq!(seq[4], SeqElem::Entity(EntityId(2)));
}

#[test]
fn sequence_of_4ary_has_relations_at_even_positions() {
    let mut f = NAryFact::triple(EntityId(0), RelationId(0), EntityId(1));
    f.qualifiers.push((RelationId(1), EntityId(2)));
    f.qualifiers.push((RelationId(2), EntityId(3)));
    let seq = sequence_of(&f);
    assert_eq!(seq.len(), 7);
    for (i, elem) in seq.iter().enumerate() {
        // 1-based even positions hold relations
        if (i + 1) % 2 == 0 {
            assert!(matches!(elem, SeqElem::Relation(_)), "position {}", i + 1);
        } else {
            assert!(matches!(elem, SeqElem::Entity(_)), "position {}", i + 1);
        }
    }
}

fn toy_graph() -> HyperGraph {
    // Labels A..E, relations r, r2, a1
    let mut g = HyperGraph::new();
    for label in ["A", "B", "C", "D", "E"] {
        g.entities.intern(label);
    }
    for label in ["r", "r2", "a1"] {
        g.relations.intern(label);
    }
    g
}

#[test]
fn match_pattern_single_fact() {
    let mut g = toy_graph();
    g.insert_fact(
        Split::Train,
        NAryFact::triple(EntityId(0), RelationId(0), EntityId(1)),
    );
    let pattern = NAryFact::triple(EntityId(0), RelationId(0), EntityId(0));
    let hits = g.match_pattern(Scope::TRAIN, &pattern, 2).unwrap();
    assert_eq!(hits, BTreeSet::from([EntityId(1)]));
}

#[test]
fn match_pattern_two_objects() {
    let mut g = toy_graph();
    g.insert_fact(
        Split::Train,
        NAryFact::triple(EntityId(0), RelationId(0), EntityId(1)),
    );
    g.insert_fact(
        Split::Train,
        NAryFact::triple(EntityId(0), RelationId(0), EntityId(2)),
    );
    let pattern = NAryFact::triple(EntityId(0), RelationId(0), EntityId(0));
    let hits = g.match_pattern(Scope::TRAIN, &pattern, 2).unwrap();
    assert_eq!(hits, BTreeSet::from([EntityId(1), EntityId(2)]));
}

#[test]
fn qualifier_pattern_never_matches_binary_facts() {
    let mut g = toy_graph();
    g.insert_fact(
        Split::Train,
        NAryFact::triple(EntityId(0), RelationId(0), EntityId(1)),
    );
    let mut pattern = NAryFact::triple(EntityId(0), RelationId(0), EntityId(1));
    pattern.qualifiers.push((RelationId(2), EntityId(0)));
    let hits = g.match_pattern(Scope::ALL, &pattern, 3).unwrap();
    assert!(hits.is_empty());
}

#[test]
fn sequence_pattern_rejects_relation_holes_and_multiple_holes() {
    let g = toy_graph();
    let err = g
        .match_sequence_pattern(
            Scope::ALL,
            &[
                PatternSlot::Entity(EntityId(0)),
                PatternSlot::Hole,
                PatternSlot::Entity(EntityId(1)),
            ],
        )
        .unwrap_err();
    assert!(matches!(err, NqeError::Pattern(_)));

    let err = g
        .match_sequence_pattern(
            Scope::ALL,
            &[
                PatternSlot::Hole,
                PatternSlot::Relation(RelationId(0)),
                PatternSlot::Hole,
            ],
        )
        .unwrap_err();
    assert!(matches!(err, NqeError::Pattern(_)));
}

#[test]
fn match_pattern_hole_out_of_range() {
    let g = toy_graph();
    let pattern = NAryFact::triple(EntityId(0), RelationId(0), EntityId(1));
    assert!(g.match_pattern(Scope::ALL, &pattern, 3).is_err());
    assert!(g.match_pattern(Scope::ALL, &pattern, 0).is_err());
}

#[test]
fn unknown_label_is_an_error() {
    let g = toy_graph();
    assert!(matches!(
        g.entity("nope"),
        Err(NqeError::UnknownLabel { .. })
    ));
}

#[test]
fn snapshot_roundtrip_preserves_digest() {
    let mut g = toy_graph();
    g.insert_fact(
        Split::Train,
        NAryFact::triple(EntityId(0), RelationId(0), EntityId(1)),
    );
    let mut f = NAryFact::triple(EntityId(2), RelationId(1), EntityId(3));
    f.qualifiers.push((RelationId(2), EntityId(4)));
    g.insert_fact(Split::Test, f);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.nqg");
    g.save_snapshot(&path).unwrap();
    let g2 = HyperGraph::load_snapshot(&path).unwrap();
    assert_eq!(g.digest(), g2.digest());
    assert_eq!(g2.facts(Split::Test)[0].arity(), 3);
}

// -- randomized properties --------------------------------------------------

fn arb_fact(n_entities: u32, n_relations: u32) -> impl Strategy<Value = NAryFact> {
    (
        0..n_entities,
        0..n_relations,
        0..n_entities,
        prop::collection::vec((0..n_relations, 0..n_entities), 0..3),
    )
        .prop_map(|(s, r, o, quals)| NAryFact {
            subject: EntityId(s),
            relation: RelationId(r),
            object: EntityId(o),
            qualifiers: quals
                .into_iter()
                .map(|(a, v)| (RelationId(a), EntityId(v)))
                .collect(),
        })
}

fn arb_graph() -> impl Strategy<Value = HyperGraph> {
    prop::collection::vec((arb_fact(25, 5), 0..3usize), 1..120).prop_map(|facts| {
        let mut g = HyperGraph::new();
        for i in 0..25 {
            g.entities.intern(&format!("e{i}"));
        }
        for i in 0..5 {
            g.relations.intern(&format!("r{i}"));
        }
        for (fact, split) in facts {
            g.insert_fact(Split::ALL[split], fact);
        }
        g
    })
}

proptest! {
    /// Every stored fact, holed at every entity position, recovers the
    /// removed entity.
    #[test]
    fn holes_recover_the_removed_entity(g in arb_graph()) {
        for split in Split::ALL {
            let scope = Scope::of(&[split]);
            for fact in g.facts(split) {
                for p in 1..=fact.arity() {
                    let hits = g.match_pattern(scope, fact, p).unwrap();
                    prop_assert!(hits.contains(&fact.entity_at(p).unwrap()));
                }
            }
        }
    }

    /// Index lookups agree with the naive positional scan for patterns made
    /// from stored facts (hits) and perturbed ones (mostly misses).
    #[test]
    fn index_matches_linear_scan(g in arb_graph(), perturb in 0..25u32) {
        let scope = Scope::ALL;
        for split in Split::ALL {
            for fact in g.facts(split) {
                for p in 1..=fact.arity() {
                    let via_index = g.match_pattern(scope, fact, p).unwrap();
                    prop_assert_eq!(via_index, scan_match(&g, scope, fact, p));

                    let twisted = fact.with_entity_at(p % fact.arity() + 1, EntityId(perturb));
                    let via_index = g.match_pattern(scope, &twisted, p).unwrap();
                    prop_assert_eq!(via_index, scan_match(&g, scope, &twisted, p));
                }
            }
        }
    }

    /// sequence_of is invertible, hence injective on deduplicated facts.
    #[test]
    fn sequence_roundtrip(fact in arb_fact(30, 6)) {
        let seq = sequence_of(&fact);
        prop_assert_eq!(seq.len(), 2 * fact.arity() - 1);
        let back = fact_from_sequence(&seq).unwrap();
        prop_assert_eq!(back, fact);
    }
}
