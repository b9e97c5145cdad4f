//! Test support: fixture paths, a naive reference evaluator, an exhaustive
//! grounding enumerator and random generators for stores, queries and
//! query graphs.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use kbqa_core::extract::Link;
use kbqa_core::graph::{QueryEdge, QueryGraph, QueryNode};
use kbqa_core::kb::{Filter, QueryForm, SparqlQuery, TriplePattern, TripleStore};
use kbqa_core::matcher::{variable_names, EdgeBinding, NodeBinding};
use kbqa_core::{normalize, MentionCandidate, MentionKind, PredicateCandidate, Term, Triple};
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn fixture(name: &str) -> PathBuf {
    fixtures_dir().join(name)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Reference evaluator

/// All solutions of the basic graph pattern as variable → term maps, found
/// by scanning every triple for every pattern in textual order.
pub fn reference_solutions(
    triples: &[Triple],
    patterns: &[TriplePattern],
    filters: &[Filter],
) -> Vec<BTreeMap<String, Term>> {
    let mut out = Vec::new();
    let mut binding = BTreeMap::new();
    solve(triples, patterns, 0, &mut binding, &mut out, false);
    out.retain(|b| filters.iter().all(|f| filter_ok(f, b)));
    out
}

/// Whether the basic graph pattern has a solution; same scan as
/// [`reference_solutions`], stopping at the first one.
pub fn reference_has_solution(triples: &[Triple], patterns: &[TriplePattern]) -> bool {
    let mut out = Vec::new();
    solve(triples, patterns, 0, &mut BTreeMap::new(), &mut out, true);
    !out.is_empty()
}

fn solve(
    triples: &[Triple],
    patterns: &[TriplePattern],
    depth: usize,
    binding: &mut BTreeMap<String, Term>,
    out: &mut Vec<BTreeMap<String, Term>>,
    first_only: bool,
) {
    if depth == patterns.len() {
        out.push(binding.clone());
        return;
    }
    let p = &patterns[depth];
    for t in triples {
        let mut added = Vec::new();
        let mut ok = true;
        for (pat, value) in [(&p.subject, &t.subject), (&p.predicate, &t.predicate), (&p.object, &t.object)] {
            match pat {
                Term::Variable(name) => match binding.get(name) {
                    Some(bound) if bound != value => {
                        ok = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        binding.insert(name.clone(), value.clone());
                        added.push(name.clone());
                    }
                },
                constant => {
                    if constant != value {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if ok {
            solve(triples, patterns, depth + 1, binding, out, first_only);
        }
        for name in added {
            binding.remove(&name);
        }
        if first_only && !out.is_empty() {
            return;
        }
    }
}

fn filter_ok(filter: &Filter, binding: &BTreeMap<String, Term>) -> bool {
    let contains = |term: &Term, needle: &str| {
        let text = match term {
            Term::Iri(iri) => kbqa_core::term::local_name(iri).to_string(),
            Term::Literal(s) | Term::Variable(s) => s.clone(),
        };
        normalize(&text).contains(&normalize(needle))
    };
    match filter {
        Filter::Contains { var, needle } => binding.get(var).is_some_and(|t| contains(t, needle)),
        Filter::OrEquals { var, term, needle } => binding
            .get(var)
            .is_some_and(|t| t == term || contains(t, needle)),
    }
}

/// Projected rows (a bag) of a SELECT, or `None` rows and the truth value
/// of an ASK. LIMIT is ignored.
pub fn reference_rows(store: &TripleStore, query: &SparqlQuery) -> (Vec<Vec<Term>>, bool) {
    let triples: Vec<Triple> = store.triples().collect();
    let solutions = reference_solutions(&triples, &query.patterns, &query.filters);
    match &query.form {
        QueryForm::Ask => (Vec::new(), !solutions.is_empty()),
        QueryForm::Select {
            variables,
            distinct,
        } => {
            let mut rows: Vec<Vec<Term>> = solutions
                .iter()
                .map(|b| variables.iter().map(|v| b[v].clone()).collect())
                .collect();
            if *distinct {
                let set: BTreeSet<Vec<Term>> = rows.into_iter().collect();
                rows = set.into_iter().collect();
            }
            let truth = !rows.is_empty();
            (rows, truth)
        }
    }
}

/// Distinct projected rows of a SELECT query.
pub fn reference_row_set(store: &TripleStore, query: &SparqlQuery) -> BTreeSet<Vec<Term>> {
    reference_rows(store, query).0.into_iter().collect()
}

// ---------------------------------------------------------------------------
// Exhaustive grounding enumeration

/// One grounding found by [`exhaustive_groundings`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrounding {
    pub nodes: Vec<NodeBinding>,
    pub edges: Vec<EdgeBinding>,
    pub score: f64,
    pub patterns: BTreeSet<TriplePattern>,
}

fn oracle_node_options(node: &QueryNode, name: Option<&String>, store: &TripleStore) -> Vec<NodeBinding> {
    match node.kind {
        MentionKind::Variable => vec![NodeBinding::Variable {
            name: name.cloned().unwrap(),
        }],
        MentionKind::Literal => vec![NodeBinding::Literal {
            value: node
                .mention
                .literal_value
                .clone()
                .unwrap_or_else(|| node.mention.surface.clone()),
        }],
        MentionKind::Entity => node
            .mention
            .links
            .iter()
            .map(|l| NodeBinding::Entity {
                iri: l.iri.clone(),
                score: l.score,
            })
            .collect(),
        MentionKind::Type => {
            let mut out = Vec::new();
            for l in &node.mention.links {
                out.push(NodeBinding::Class {
                    class: l.iri.clone(),
                    variable: name.cloned().unwrap(),
                    score: l.score,
                });
            }
            let type_term = Term::Iri(store.type_predicate().to_string());
            for l in &node.mention.links {
                let class = Term::Iri(l.iri.clone());
                let mut members: Vec<String> = store
                    .triples()
                    .filter(|t| t.predicate == type_term && t.object == class)
                    .filter_map(|t| t.subject.as_iri().map(str::to_string))
                    .collect();
                members.sort();
                members.dedup();
                for m in members {
                    out.push(NodeBinding::Member {
                        iri: m,
                        class: l.iri.clone(),
                        link_score: l.score,
                    });
                }
            }
            out
        }
    }
}

fn oracle_edge_options(edge: &QueryEdge) -> Vec<EdgeBinding> {
    let mut out = vec![EdgeBinding::Membership];
    for c in &edge.candidates {
        for forward in [true, false] {
            out.push(EdgeBinding::Predicate {
                predicate: c.predicate.clone(),
                forward,
                score: c.score,
            });
        }
    }
    out
}

fn is_class(b: &NodeBinding) -> bool {
    matches!(b, NodeBinding::Class { .. })
}

fn plain_term(b: &NodeBinding) -> Term {
    match b {
        NodeBinding::Variable { name } => Term::Variable(name.clone()),
        NodeBinding::Literal { value } => Term::Literal(value.clone()),
        NodeBinding::Entity { iri, .. } | NodeBinding::Member { iri, .. } => Term::Iri(iri.clone()),
        NodeBinding::Class { variable, .. } => Term::Variable(variable.clone()),
    }
}

/// Patterns and query form of an assignment, or `None` if it breaks a rule.
fn oracle_query(
    graph: &QueryGraph,
    nodes: &[NodeBinding],
    edges: &[EdgeBinding],
    type_predicate: &str,
) -> Option<SparqlQuery> {
    let mut term: Vec<Term> = nodes.iter().map(plain_term).collect();
    let mut joined = BTreeSet::new();
    for (e, b) in graph.edges.iter().zip(edges) {
        if *b != EdgeBinding::Membership {
            continue;
        }
        if !e.phrase_tokens.is_empty() {
            return None;
        }
        let (a, c) = e.endpoints;
        let (class_node, partner) = match (is_class(&nodes[a]), is_class(&nodes[c])) {
            (true, false) => (a, c),
            (false, true) => (c, a),
            _ => return None,
        };
        if matches!(nodes[partner], NodeBinding::Literal { .. }) || !joined.insert(class_node) {
            return None;
        }
        term[class_node] = plain_term(&nodes[partner]);
    }
    let tp = Term::Iri(type_predicate.to_string());
    let mut patterns = Vec::new();
    for (i, b) in nodes.iter().enumerate() {
        match b {
            NodeBinding::Class { class, .. } => {
                patterns.push(TriplePattern::new(term[i].clone(), tp.clone(), Term::Iri(class.clone())))
            }
            NodeBinding::Member { iri, class, .. } => patterns.push(TriplePattern::new(
                Term::Iri(iri.clone()),
                tp.clone(),
                Term::Iri(class.clone()),
            )),
            _ => {}
        }
    }
    for (e, b) in graph.edges.iter().zip(edges) {
        if let EdgeBinding::Predicate { predicate, forward, .. } = b {
            let (s, o) = if *forward { e.endpoints } else { (e.endpoints.1, e.endpoints.0) };
            if matches!(term[s], Term::Literal(_)) {
                return None;
            }
            patterns.push(TriplePattern::new(term[s].clone(), Term::Iri(predicate.clone()), term[o].clone()));
        }
    }
    let target = term[graph.target].as_variable().unwrap().to_string();
    let uses_target = patterns
        .iter()
        .any(|p| p.terms().iter().any(|t| t.as_variable() == Some(target.as_str())));
    if uses_target {
        Some(SparqlQuery::select_distinct(target, patterns))
    } else if graph.nodes[graph.target].synthesized && !patterns.is_empty() {
        Some(SparqlQuery::ask(patterns))
    } else {
        patterns.push(TriplePattern::new(
            Term::Variable(target.clone()),
            Term::Variable("p".into()),
            Term::Variable("o".into()),
        ));
        Some(SparqlQuery::select_distinct(target, patterns))
    }
}

/// Every rule-respecting assignment of `graph` over `store` that has at
/// least one solution, enumerated as a plain Cartesian product.
pub fn exhaustive_groundings(graph: &QueryGraph, store: &TripleStore) -> Vec<OracleGrounding> {
    let names = variable_names(graph);
    let node_options: Vec<Vec<NodeBinding>> = graph
        .nodes
        .iter()
        .map(|n| oracle_node_options(n, names.get(&n.id), store))
        .collect();
    let edge_options: Vec<Vec<EdgeBinding>> = graph.edges.iter().map(oracle_edge_options).collect();
    let sizes: Vec<usize> = node_options
        .iter()
        .map(Vec::len)
        .chain(edge_options.iter().map(Vec::len))
        .collect();
    debug_assert_eq!(sizes.len(), graph.nodes.len() + graph.edges.len());
    let mut out = Vec::new();
    if sizes.contains(&0) {
        return out;
    }
    let triples: Vec<Triple> = store.triples().collect();
    let mut counter = vec![0usize; sizes.len()];
    loop {
        let nodes: Vec<NodeBinding> = (0..graph.nodes.len())
            .map(|i| node_options[i][counter[i]].clone())
            .collect();
        let edges: Vec<EdgeBinding> = (0..graph.edges.len())
            .map(|i| edge_options[i][counter[graph.nodes.len() + i]].clone())
            .collect();
        if let Some(query) = oracle_query(graph, &nodes, &edges, store.type_predicate()) {
            if reference_has_solution(&triples, &query.patterns) {
                let mut product = 1.0f64;
                for b in &nodes {
                    product *= match b {
                        NodeBinding::Variable { .. } | NodeBinding::Literal { .. } => 1.0,
                        NodeBinding::Entity { score, .. } | NodeBinding::Class { score, .. } => *score,
                        NodeBinding::Member { link_score, .. } => link_score * 0.9,
                    };
                }
                for b in &edges {
                    if let EdgeBinding::Predicate { score, .. } = b {
                        product *= score;
                    }
                }
                out.push(OracleGrounding {
                    nodes,
                    edges,
                    score: product.ln(),
                    patterns: query.patterns.into_iter().collect(),
                });
            }
        }
        // Odometer increment.
        let mut i = 0;
        loop {
            if i == sizes.len() {
                return out;
            }
            counter[i] += 1;
            if counter[i] < sizes[i] {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
}

// ---------------------------------------------------------------------------
// Random generators

#[derive(Debug, Clone, Copy)]
pub struct StoreShape {
    pub triples: usize,
    pub entities: usize,
    pub predicates: usize,
    pub classes: usize,
    pub literals: usize,
}

impl Default for StoreShape {
    fn default() -> Self {
        StoreShape {
            triples: 60,
            entities: 15,
            predicates: 4,
            classes: 3,
            literals: 6,
        }
    }
}

pub const RANDOM_TYPE_PREDICATE: &str = "type";

/// A random store over entities `e0…`, predicates `p0…`, classes `C0…`
/// and literals. About a quarter of the triples are class memberships.
pub fn random_store<R: Rng>(rng: &mut R, shape: StoreShape) -> TripleStore {
    let mut builder = TripleStore::builder("random", RANDOM_TYPE_PREDICATE);
    let entity = |i: usize| Term::Iri(format!("e{i}"));
    let mut attempts = 0;
    while builder.len() < shape.triples.max(1) && attempts < shape.triples * 20 + 20 {
        attempts += 1;
        let s = entity(rng.random_range(0..shape.entities.max(1)));
        let triple = if shape.classes > 0 && rng.random_bool(0.25) {
            Triple::new(
                s,
                Term::Iri(RANDOM_TYPE_PREDICATE.into()),
                Term::Iri(format!("C{}", rng.random_range(0..shape.classes))),
            )
        } else {
            let p = Term::Iri(format!("p{}", rng.random_range(0..shape.predicates.max(1))));
            let o = if shape.literals > 0 && rng.random_bool(0.3) {
                Term::Literal(format!("lit {}", rng.random_range(0..shape.literals)))
            } else {
                entity(rng.random_range(0..shape.entities.max(1)))
            };
            Triple::new(s, p, o)
        };
        builder.insert(triple.expect("generated terms are valid"));
    }
    builder.build().expect("non-empty")
}

fn random_constant<R: Rng>(rng: &mut R, store: &TripleStore, position: usize) -> Term {
    let triples: Vec<Triple> = store.triples().collect();
    if rng.random_bool(0.05) {
        return Term::Iri("absent".into());
    }
    let t = triples.choose(rng).expect("non-empty store");
    match position {
        0 => t.subject.clone(),
        1 => t.predicate.clone(),
        _ => t.object.clone(),
    }
}

/// A random connected query of 1–4 patterns. Every pattern after the first
/// shares a variable with an earlier one; predicates are mostly constants.
pub fn random_query<R: Rng>(rng: &mut R, store: &TripleStore) -> SparqlQuery {
    let n = rng.random_range(1..=4);
    let mut vars: Vec<String> = Vec::new();
    let mut patterns = Vec::new();
    for i in 0..n {
        let mut slots: Vec<Term> = Vec::new();
        let shared = if i == 0 { None } else { Some(*[0usize, 2].choose(rng).unwrap()) };
        for position in 0..3 {
            let term = if shared == Some(position) {
                Term::Variable(vars.choose(rng).unwrap().clone())
            } else if position == 1 {
                if rng.random_bool(0.85) {
                    random_constant(rng, store, 1)
                } else {
                    let v = format!("v{}", vars.len());
                    vars.push(v.clone());
                    Term::Variable(v)
                }
            } else if rng.random_bool(0.35) {
                random_constant(rng, store, position)
            } else if !vars.is_empty() && rng.random_bool(0.3) {
                Term::Variable(vars.choose(rng).unwrap().clone())
            } else {
                let v = format!("v{}", vars.len());
                vars.push(v.clone());
                Term::Variable(v)
            };
            slots.push(term);
        }
        if i == 0 && !slots.iter().any(Term::is_variable) {
            let v = format!("v{}", vars.len());
            vars.push(v.clone());
            slots[0] = Term::Variable(v);
        }
        let mut it = slots.into_iter();
        patterns.push(TriplePattern::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap()));
    }
    let used: Vec<String> = {
        let set: BTreeSet<String> = patterns
            .iter()
            .flat_map(|p| p.variables().map(str::to_string).collect::<Vec<_>>())
            .collect();
        set.into_iter().collect()
    };
    let mut filters = Vec::new();
    if !used.is_empty() && rng.random_bool(0.3) {
        let var = used.choose(rng).unwrap().clone();
        let needle = ["e1", "lit", "1", "p", "c"].choose(rng).unwrap().to_string();
        if rng.random_bool(0.5) {
            filters.push(Filter::Contains { var, needle });
        } else {
            let term = random_constant(rng, store, 2);
            filters.push(Filter::OrEquals { var, term, needle });
        }
    }
    let form = if used.is_empty() || rng.random_bool(0.1) {
        QueryForm::Ask
    } else {
        let k = rng.random_range(1..=used.len());
        let mut projected: Vec<String> = used.clone();
        projected.truncate(k);
        QueryForm::Select {
            variables: projected,
            distinct: rng.random_bool(0.6),
        }
    };
    SparqlQuery {
        form,
        patterns,
        filters,
        limit: None,
    }
}

fn random_score<R: Rng>(rng: &mut R) -> f64 {
    if rng.random_bool(0.4) {
        1.0
    } else {
        rng.random_range(0.5..1.0)
    }
}

fn mention(kind: MentionKind, surface: String, links: Vec<Link>, literal: Option<String>) -> MentionCandidate {
    MentionCandidate {
        span: (0, 0),
        surface,
        kind,
        literal_value: literal,
        links,
    }
}

/// A random query graph of 1–`max_nodes` nodes over `store`: node 0 is the
/// target variable (sometimes synthesized), edges form a random tree plus
/// occasionally one extra edge, candidates are drawn from the store's
/// predicates with random scores.
pub fn random_query_graph<R: Rng>(rng: &mut R, store: &TripleStore, max_nodes: usize) -> QueryGraph {
    let n = rng.random_range(1..=max_nodes.max(1));
    let entities = store.entities();
    let classes = store.classes();
    let predicates: Vec<&str> = store.predicates().collect();
    let literals: Vec<String> = store
        .triples()
        .filter_map(|t| match t.object {
            Term::Literal(s) => Some(s),
            _ => None,
        })
        .collect();
    let mut nodes = Vec::new();
    let synthesized = n > 1 && rng.random_bool(0.2);
    nodes.push(QueryNode {
        id: 0,
        kind: MentionKind::Variable,
        mention: mention(MentionKind::Variable, if synthesized { String::new() } else { "what".into() }, Vec::new(), None),
        anchor: 0,
        is_target: true,
        synthesized,
    });
    for id in 1..n {
        let roll = rng.random_range(0..10);
        let (kind, m) = if roll < 4 && !entities.is_empty() {
            let k = rng.random_range(0..=2);
            let mut links: Vec<Link> = entities
                .choose_multiple(rng, k)
                .map(|iri| Link {
                    iri: iri.to_string(),
                    score: random_score(rng),
                })
                .collect();
            if rng.random_bool(0.05) {
                links.push(Link {
                    iri: "absent".into(),
                    score: 0.7,
                });
            }
            (MentionKind::Entity, mention(MentionKind::Entity, format!("entity {id}"), links, None))
        } else if roll < 7 && !classes.is_empty() {
            let k = rng.random_range(1..=2.min(classes.len()));
            let links = classes
                .choose_multiple(rng, k)
                .map(|iri| Link {
                    iri: iri.to_string(),
                    score: random_score(rng),
                })
                .collect();
            (MentionKind::Type, mention(MentionKind::Type, format!("kind{id}"), links, None))
        } else if roll < 8 && !literals.is_empty() {
            let value = literals.choose(rng).unwrap().clone();
            (MentionKind::Literal, mention(MentionKind::Literal, value.clone(), Vec::new(), Some(value)))
        } else {
            (MentionKind::Variable, mention(MentionKind::Variable, format!("x{id}"), Vec::new(), None))
        };
        nodes.push(QueryNode {
            id,
            kind,
            mention: m,
            anchor: id,
            is_target: false,
            synthesized: false,
        });
    }
    let mut pairs: Vec<(usize, usize)> = (1..n).map(|v| (rng.random_range(0..v), v)).collect();
    if n >= 3 && rng.random_bool(0.2) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        let pair = (a.min(b), a.max(b));
        if a != b && !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }
    let edges = pairs
        .into_iter()
        .enumerate()
        .map(|(id, endpoints)| {
            let k = rng.random_range(1..=3.min(predicates.len()));
            let candidates = predicates
                .choose_multiple(rng, k)
                .map(|p| PredicateCandidate {
                    predicate: p.to_string(),
                    score: random_score(rng),
                })
                .collect();
            QueryEdge {
                id,
                endpoints,
                phrase_tokens: if rng.random_bool(0.5) { Vec::new() } else { vec![0] },
                candidates,
            }
        })
        .collect();
    QueryGraph {
        question: "random".into(),
        nodes,
        edges,
        target: 0,
    }
}
