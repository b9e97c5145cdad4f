use std::collections::{BTreeSet, VecDeque};
use std::io::BufReader;
use std::sync::OnceLock;

use kbqa_core::{
    build_query_graph, extract_nodes, extract_relations, load_triples, normalize, AliasTable, Lexicon,
    MentionKind, PredicateAliases, PredicateDictionary, QueryGraph, SemanticStructure, Term,
    TripleFormat, TripleStore,
};
use kbqa_testkit::fixture;
use proptest::prelude::*;

struct Fixture {
    store: TripleStore,
    lexicon: Lexicon,
    dict: PredicateDictionary,
}

fn film() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let file = std::fs::File::open(fixture("filmdb-mini.tsv")).unwrap();
        let store = load_triples(BufReader::new(file), TripleFormat::Tsv, "filmdb-mini", "type").unwrap();
        let aliases = AliasTable::parse(&std::fs::read_to_string(fixture("filmdb-entities.tsv")).unwrap()).unwrap();
        let preds =
            PredicateAliases::parse(&std::fs::read_to_string(fixture("filmdb-predicates.tsv")).unwrap()).unwrap();
        let lexicon = Lexicon::build(&store, Some(&aliases), "en");
        let dict = PredicateDictionary::build(&store, Some(&preds));
        Fixture { store, lexicon, dict }
    })
}

const WORDS: &[&str] = &[
    "what", "which", "who", "is", "the", "of", "film", "films", "movie", "starring", "Keanu", "Reeves",
    "Keanu Reeves", "Keanu Reves", "Speed", "John Wick", "The Matrix", "Matrix", "length", "runtime",
    "directed", "by", "in", "120", "\"136\"", "longer", "than", "minutes", "acted", "and", "Wick",
];

fn question() -> impl Strategy<Value = String> {
    proptest::collection::vec(proptest::sample::select(WORDS), 1..10).prop_map(|w| w.join(" "))
}

fn graph_for(q: &str, threshold: f64) -> Option<(SemanticStructure, QueryGraph)> {
    let s = SemanticStructure::parse(q, "en").ok()?;
    let mentions = extract_nodes(q, &s, &film().lexicon, threshold);
    let g = build_query_graph(&s, &mentions).ok()?;
    Some((s, g))
}

fn reachable(g: &QueryGraph) -> BTreeSet<usize> {
    let mut seen = BTreeSet::from([g.target]);
    let mut queue = VecDeque::from([g.target]);
    while let Some(u) = queue.pop_front() {
        for e in g.incident_edges(u) {
            let v = e.other(u);
            if seen.insert(v) {
                queue.push_back(v);
            }
        }
    }
    seen
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn mentions_are_disjoint_sorted_and_thresholded(q in question(), t in 0.5f64..=1.0) {
        let s = SemanticStructure::parse(&q, "en").unwrap();
        let mentions = extract_nodes(&q, &s, &film().lexicon, t);
        for w in mentions.windows(2) {
            prop_assert!(w[0].span.1 <= w[1].span.0, "{:?}", mentions);
        }
        for m in &mentions {
            prop_assert_eq!(&q[m.span.0..m.span.1], m.surface.as_str());
            if matches!(m.kind, MentionKind::Variable | MentionKind::Literal) {
                prop_assert!(m.links.is_empty());
            } else {
                prop_assert!(!m.links.is_empty());
            }
            for l in &m.links {
                prop_assert!(l.score >= t && l.score <= 1.0);
                prop_assert!(film().store.contains_iri(&l.iri));
            }
            for w in m.links.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
        }
    }

    #[test]
    fn raising_the_threshold_never_adds(q in question(), a in 0.5f64..=1.0, b in 0.5f64..=1.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        let s = SemanticStructure::parse(&q, "en").unwrap();
        let key = |t: f64| -> BTreeSet<(usize, usize, String)> {
            extract_nodes(&q, &s, &film().lexicon, t)
                .into_iter()
                .flat_map(|m| {
                    let mut out = vec![(m.span.0, m.span.1, format!("{:?}", m.kind))];
                    out.extend(m.links.iter().map(|l| (m.span.0, m.span.1, l.iri.clone())));
                    out
                })
                .collect()
        };
        prop_assert!(key(hi).is_subset(&key(lo)));
    }

    #[test]
    fn exact_mode_links_equal_lexicon_keys(q in question()) {
        let s = SemanticStructure::parse(&q, "en").unwrap();
        let lex = &film().lexicon;
        for m in extract_nodes(&q, &s, lex, 1.0) {
            let key = normalize(&m.surface);
            match m.kind {
                MentionKind::Entity => prop_assert!(lex.entity_names().contains_key(&key)),
                MentionKind::Type => prop_assert!(lex.type_names().contains_key(&key)),
                _ => {}
            }
        }
    }

    #[test]
    fn query_graph_invariants(q in question()) {
        let Some((s, g)) = graph_for(&q, 0.8) else { return Ok(()); };
        prop_assert_eq!(g.nodes.iter().filter(|n| n.is_target).count(), 1);
        prop_assert!(g.nodes[g.target].is_target);
        let anchors: BTreeSet<usize> = g.nodes.iter().map(|n| n.anchor).collect();
        let mut pairs = BTreeSet::new();
        for e in &g.edges {
            let (a, b) = e.endpoints;
            prop_assert_ne!(a, b);
            prop_assert!(pairs.insert((a.min(b), a.max(b))), "duplicate edge");
            let path = s.tree_path(g.nodes[a].anchor, g.nodes[b].anchor);
            // A synthesized target can share its anchor with a mention.
            let interior = if path.len() >= 2 { &path[1..path.len() - 1] } else { &[][..] };
            // The simple-path rule: no third node's anchor in between.
            prop_assert!(interior.iter().all(|t| !anchors.contains(t)));
            prop_assert_eq!(e.phrase_tokens.as_slice(), interior);
        }
        prop_assert_eq!(reachable(&g).len(), g.nodes.len());
        let (_, again) = graph_for(&q, 0.8).unwrap();
        prop_assert_eq!(&g, &again);
    }

    #[test]
    fn relation_candidates_are_bounded_and_sorted(q in question(), m in 1usize..6) {
        let Some((s, g)) = graph_for(&q, 0.8) else { return Ok(()); };
        let fx = film();
        let filled = extract_relations(&g, &s, &fx.dict, &fx.store, m);
        for e in &filled.edges {
            prop_assert!(e.candidates.len() <= m);
            for c in &e.candidates {
                prop_assert!(c.score > 0.0 && c.score <= 1.0);
                prop_assert!(fx.store.is_predicate(&c.predicate));
            }
            for w in e.candidates.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
        }
    }

    #[test]
    fn kb_guided_candidates_connect_groundings(q in question()) {
        let Some((s, g)) = graph_for(&q, 0.8) else { return Ok(()); };
        let fx = film();
        let empty = PredicateDictionary::empty("filmdb-mini");
        let filled = extract_relations(&g, &s, &empty, &fx.store, 10);
        let grounds = |id: usize| -> Option<BTreeSet<Term>> {
            let n = &g.nodes[id];
            match n.kind {
                MentionKind::Variable => None,
                MentionKind::Literal => Some(BTreeSet::from([Term::Literal(
                    n.mention.literal_value.clone().unwrap_or_else(|| n.mention.surface.clone()),
                )])),
                MentionKind::Entity => Some(n.mention.links.iter().map(|l| Term::Iri(l.iri.clone())).collect()),
                MentionKind::Type => {
                    let classes: BTreeSet<Term> = n.mention.links.iter().map(|l| Term::Iri(l.iri.clone())).collect();
                    let mut out = classes.clone();
                    for t in fx.store.triples() {
                        if t.predicate == Term::Iri("type".into()) && classes.contains(&t.object) {
                            out.insert(t.subject.clone());
                        }
                    }
                    Some(out)
                }
            }
        };
        let ok = |set: &Option<BTreeSet<Term>>, t: &Term| set.as_ref().is_none_or(|s| s.contains(t));
        for e in &filled.edges {
            let (ga, gb) = (grounds(e.endpoints.0), grounds(e.endpoints.1));
            for c in &e.candidates {
                prop_assert_eq!(c.score, 0.5);
                let sound = fx.store.triples().any(|t| {
                    t.predicate == Term::Iri(c.predicate.clone())
                        && ((ok(&ga, &t.subject) && ok(&gb, &t.object))
                            || (ok(&gb, &t.subject) && ok(&ga, &t.object)))
                });
                prop_assert!(sound, "{} on edge {:?}", c.predicate, e.endpoints);
            }
        }
    }
}

fn conllu_graph() -> (SemanticStructure, QueryGraph) {
    let src = std::fs::read_to_string(fixture("keanu-length.conllu")).unwrap();
    let s = SemanticStructure::from_conllu(&src).unwrap();
    let mentions = extract_nodes(&s.question, &s, &film().lexicon, 0.8);
    let g = build_query_graph(&s, &mentions).unwrap();
    (s, g)
}

#[test]
fn length_question_mentions_and_edges() {
    let (s, g) = conllu_graph();
    let kinds: Vec<(&str, MentionKind)> = g.nodes.iter().map(|n| (n.mention.surface.as_str(), n.kind)).collect();
    assert_eq!(
        kinds,
        vec![
            ("What", MentionKind::Variable),
            ("film", MentionKind::Type),
            ("Keanu Reeves", MentionKind::Entity)
        ]
    );
    // Hand trace: DFS from "What" (token 0) reaches the "film" anchor (6)
    // via "length" (3) and stops there; from "film" it reaches "Keanu" (8)
    // via "starring" (7).
    let edges: Vec<((usize, usize), Vec<usize>)> =
        g.edges.iter().map(|e| (e.endpoints, e.phrase_tokens.clone())).collect();
    assert_eq!(edges, vec![((0, 1), vec![3]), ((1, 2), vec![7])]);

    let filled = extract_relations(&g, &s, &film().dict, &film().store, 5);
    assert_eq!(filled.edges[1].candidates[0].predicate, "starring");
    assert_eq!(filled.edges[1].candidates[0].score, 1.0);
    assert_eq!(filled.edges[0].candidates[0].predicate, "length");
}

#[test]
fn star_tree_connects_target_to_both() {
    // Root "x" with three children; mentions on tokens 1, 2, 3.
    let q = "x what film Speed";
    let heads = [None, Some(0), Some(0), Some(0)];
    let mut tokens = Vec::new();
    let mut start = 0;
    for (index, word) in q.split(' ').enumerate() {
        tokens.push(kbqa_core::Token {
            index,
            text: word.into(),
            head: heads[index],
            start,
            end: start + word.len(),
        });
        start += word.len() + 1;
    }
    let s = SemanticStructure::new(q, tokens).unwrap();
    let mentions = extract_nodes(q, &s, &film().lexicon, 0.8);
    assert_eq!(mentions.len(), 3);
    let g = build_query_graph(&s, &mentions).unwrap();
    let target = g.target;
    let at_target = g.incident_edges(target).count();
    assert_eq!(at_target, 2);
}

#[test]
fn literal_numbers_and_empty_questions() {
    let q = "films longer than 120 minutes";
    let s = SemanticStructure::parse(q, "en").unwrap();
    let mentions = extract_nodes(q, &s, &film().lexicon, 0.8);
    assert!(mentions.iter().any(|m| m.kind == MentionKind::Literal && m.surface == "120"));
    let q = "nothing here matches";
    let s = SemanticStructure::parse(q, "en").unwrap();
    assert!(extract_nodes(q, &s, &film().lexicon, 0.8).is_empty());
}
