//! Subgraph matching: grounds a query graph in the store and renders the
//! verified groundings as ranked SPARQL queries.
//!
//! Node rules: Entity nodes take one of their linked IRIs; Type nodes either
//! stay a variable constrained to the linked class or ground to a member of
//! that class; Variable and Literal nodes are kept as they are. Each edge
//! takes one of its candidate predicates in either direction, or, when it has
//! no phrase and joins a class-constrained Type node to a non-literal
//! partner, plain membership (the partner is the class member).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::MentionKind;
use crate::graph::{QueryGraph, QueryNode};
use crate::kb::{execute, QueryForm, SparqlQuery, TriplePattern, TripleStore};
use crate::term::Term;
use crate::text::normalize;

/// Member groundings of a Type node are discounted so the class reading
/// ranks first on ties.
pub const MEMBER_FACTOR: f64 = 0.9;
pub const DEFAULT_K: usize = 5;
pub const DEFAULT_MEMBER_LIMIT: usize = 256;
pub const DEFAULT_MAX_ASSIGNMENTS: usize = 200_000;
const FALLBACK_LIMIT: usize = 4_096;
const RESERVED_VARIABLES: [&str; 2] = ["p", "o"];
const SYNTHESIZED_NAME: &str = "answer";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum NodeBinding {
    Variable { name: String },
    Literal { value: String },
    Entity { iri: String, score: f64 },
    /// A Type node kept as a variable constrained to `class`.
    Class { class: String, variable: String, score: f64 },
    /// A Type node grounded to an entity of `class`.
    Member { iri: String, class: String, link_score: f64 },
}

impl NodeBinding {
    /// Component score; `None` for variables.
    pub fn score(&self) -> Option<f64> {
        match self {
            NodeBinding::Variable { .. } => None,
            NodeBinding::Literal { .. } => Some(1.0),
            NodeBinding::Entity { score, .. } | NodeBinding::Class { score, .. } => Some(*score),
            NodeBinding::Member { link_score, .. } => Some(link_score * MEMBER_FACTOR),
        }
    }

    /// The grounded term: the class IRI for a class constraint.
    pub fn term(&self) -> Term {
        match self {
            NodeBinding::Variable { name } => Term::Variable(name.clone()),
            NodeBinding::Literal { value } => Term::Literal(value.clone()),
            NodeBinding::Entity { iri, .. } | NodeBinding::Member { iri, .. } => {
                Term::Iri(iri.clone())
            }
            NodeBinding::Class { class, .. } => Term::Iri(class.clone()),
        }
    }

    /// The term standing for the node in query patterns.
    pub fn query_term(&self) -> Term {
        match self {
            NodeBinding::Class { variable, .. } => Term::Variable(variable.clone()),
            other => other.term(),
        }
    }

    pub fn is_class(&self) -> bool {
        matches!(self, NodeBinding::Class { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EdgeBinding {
    /// `forward` means the edge's first endpoint is the subject.
    Predicate { predicate: String, forward: bool, score: f64 },
    Membership,
}

impl EdgeBinding {
    pub fn score(&self) -> f64 {
        match self {
            EdgeBinding::Predicate { score, .. } => *score,
            EdgeBinding::Membership => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedNode {
    pub node: usize,
    pub surface: String,
    pub binding: NodeBinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedEdge {
    pub edge: usize,
    pub binding: EdgeBinding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedGraph {
    pub nodes: Vec<GroundedNode>,
    pub edges: Vec<GroundedEdge>,
    pub score: f64,
}

impl GroundedGraph {
    /// Sum of log component scores over non-variable nodes and all edges.
    pub fn compute_score(&self) -> f64 {
        let nodes: f64 = self
            .nodes
            .iter()
            .filter_map(|n| n.binding.score())
            .map(f64::ln)
            .sum();
        let edges: f64 = self.edges.iter().map(|e| e.binding.score().ln()).sum();
        nodes + edges
    }

    /// Stable identity of the assignment, used for deduplication and as the
    /// last sort key.
    pub fn key(&self) -> String {
        serde_json::to_string(&(&self.nodes, &self.edges)).unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateQuery {
    pub grounded: GroundedGraph,
    pub sparql: SparqlQuery,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    /// No grounding has a solution. `fallback` holds the best-scoring
    /// unverified groundings (Type nodes as class constraints only) for the
    /// relaxed stage.
    #[error("no verified grounding of the query graph")]
    NoMatch { fallback: Vec<CandidateQuery> },
    #[error("query graph has no nodes")]
    EmptyGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub k: usize,
    /// Maximum members of one class tried for a Type node.
    pub member_limit: usize,
    /// Upper bound on complete assignments examined per graph.
    pub max_assignments: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            k: DEFAULT_K,
            member_limit: DEFAULT_MEMBER_LIMIT,
            max_assignments: DEFAULT_MAX_ASSIGNMENTS,
        }
    }
}

fn sanitize(surface: &str) -> String {
    let mut out = String::new();
    for c in normalize(surface).chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c);
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

fn is_reserved(name: &str) -> bool {
    RESERVED_VARIABLES.contains(&name)
        || (name.len() > 1
            && name.starts_with('r')
            && name[1..].chars().all(|c| c.is_ascii_digit()))
}

/// Query variable names for Variable and Type nodes, unique per graph.
pub fn variable_names(graph: &QueryGraph) -> BTreeMap<usize, String> {
    let mut used = BTreeSet::new();
    let mut out = BTreeMap::new();
    for node in &graph.nodes {
        if !matches!(node.kind, MentionKind::Variable | MentionKind::Type) {
            continue;
        }
        let mut base = if node.synthesized {
            SYNTHESIZED_NAME.to_string()
        } else {
            sanitize(&node.mention.surface)
        };
        if base.is_empty() || !base.starts_with(|c: char| c.is_ascii_alphabetic()) {
            base = format!("n{}{}", node.id, if base.is_empty() { "" } else { "_" }) + &base;
        }
        let mut name = base.clone();
        let mut suffix = 2;
        while is_reserved(&name) || used.contains(&name) {
            name = format!("{base}_{suffix}");
            suffix += 1;
        }
        used.insert(name.clone());
        out.insert(node.id, name);
    }
    out
}

/// Candidate bindings of a node, in enumeration order.
fn node_options(
    node: &QueryNode,
    names: &BTreeMap<usize, String>,
    store: &TripleStore,
    member_limit: usize,
    with_members: bool,
) -> Vec<NodeBinding> {
    match node.kind {
        MentionKind::Variable => vec![NodeBinding::Variable {
            name: names[&node.id].clone(),
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
            let mut out: Vec<NodeBinding> = node
                .mention
                .links
                .iter()
                .map(|l| NodeBinding::Class {
                    class: l.iri.clone(),
                    variable: names[&node.id].clone(),
                    score: l.score,
                })
                .collect();
            if with_members {
                for link in &node.mention.links {
                    for member in store.members_of(&link.iri).into_iter().take(member_limit) {
                        out.push(NodeBinding::Member {
                            iri: member.to_string(),
                            class: link.iri.clone(),
                            link_score: link.score,
                        });
                    }
                }
            }
            out
        }
    }
}

/// Whether a membership edge is allowed between `a` and `b`: exactly one
/// side is a class constraint and the other is neither a literal nor a
/// class constraint. Returns the class-constrained side.
fn membership_side(a: &NodeBinding, b: &NodeBinding) -> Option<bool> {
    let allowed = |partner: &NodeBinding| {
        !matches!(partner, NodeBinding::Literal { .. } | NodeBinding::Class { .. })
    };
    match (a.is_class(), b.is_class()) {
        (true, false) if allowed(b) => Some(true),
        (false, true) if allowed(a) => Some(false),
        _ => None,
    }
}

/// Renders a complete assignment, or `None` when it puts a literal in
/// subject position.
pub fn render_query(
    graph: &QueryGraph,
    nodes: &[NodeBinding],
    edges: &[EdgeBinding],
    type_predicate: &str,
) -> Option<SparqlQuery> {
    // Class-constrained nodes joined by membership take the partner's term.
    let mut terms: Vec<Term> = nodes.iter().map(NodeBinding::query_term).collect();
    for (edge, binding) in graph.edges.iter().zip(edges) {
        if matches!(binding, EdgeBinding::Membership) {
            let (a, b) = edge.endpoints;
            if nodes[a].is_class() {
                terms[a] = nodes[b].query_term();
            } else {
                terms[b] = nodes[a].query_term();
            }
        }
    }
    let type_term = Term::Iri(type_predicate.to_string());
    let mut patterns = Vec::new();
    for (binding, term) in nodes.iter().zip(&terms) {
        match binding {
            NodeBinding::Class { class, .. } => patterns.push(TriplePattern::new(
                term.clone(),
                type_term.clone(),
                Term::Iri(class.clone()),
            )),
            NodeBinding::Member { iri, class, .. } => patterns.push(TriplePattern::new(
                Term::Iri(iri.clone()),
                type_term.clone(),
                Term::Iri(class.clone()),
            )),
            _ => {}
        }
    }
    for (edge, binding) in graph.edges.iter().zip(edges) {
        if let EdgeBinding::Predicate {
            predicate, forward, ..
        } = binding
        {
            let (a, b) = edge.endpoints;
            let (s, o) = if *forward { (a, b) } else { (b, a) };
            if terms[s].is_literal() {
                return None;
            }
            patterns.push(TriplePattern::new(
                terms[s].clone(),
                Term::Iri(predicate.clone()),
                terms[o].clone(),
            ));
        }
    }

    let target = terms[graph.target].clone();
    let target_name = target.as_variable().unwrap_or(SYNTHESIZED_NAME).to_string();
    let mentioned = patterns
        .iter()
        .any(|p| p.variables().any(|v| v == target_name));
    let query = if mentioned {
        SparqlQuery::select_distinct(target_name, patterns)
    } else if graph.target_node().synthesized && !patterns.is_empty() {
        SparqlQuery::ask(patterns)
    } else {
        patterns.push(TriplePattern::new(
            Term::Variable(target_name.clone()),
            Term::Variable("p".into()),
            Term::Variable("o".into()),
        ));
        SparqlQuery::select_distinct(target_name, patterns)
    };
    Some(query.canonical())
}

fn has_solution(store: &TripleStore, query: &SparqlQuery) -> bool {
    // Cheap screen: every pattern must match on its own.
    for pattern in &query.patterns {
        let fixed = |t: &Term| (!t.is_variable()).then(|| t.clone());
        let (s, p, o) = (fixed(&pattern.subject), fixed(&pattern.predicate), fixed(&pattern.object));
        if store.matching(s.as_ref(), p.as_ref(), o.as_ref()).is_empty() {
            return false;
        }
    }
    let mut probe = query.clone();
    if matches!(probe.form, QueryForm::Select { .. }) {
        probe.limit = Some(1);
    }
    execute(store, &probe).map(|r| !r.is_empty()).unwrap_or(false)
}

/// Backtracking state shared by the enumeration.
struct Search<'a> {
    graph: &'a QueryGraph,
    store: &'a TripleStore,
    node_options: Vec<Vec<NodeBinding>>,
    verify: bool,
    budget: usize,
    nodes: Vec<NodeBinding>,
    edges: Vec<EdgeBinding>,
    out: Vec<CandidateQuery>,
}

impl Search<'_> {
    fn assign_nodes(&mut self, index: usize) {
        if self.budget == 0 {
            return;
        }
        if index == self.graph.nodes.len() {
            self.assign_edges(0, &mut BTreeSet::new());
            return;
        }
        for option in self.node_options[index].clone() {
            self.nodes.push(option);
            self.assign_nodes(index + 1);
            self.nodes.pop();
        }
    }

    fn ground_pair_missing(&self, a: usize, b: usize, predicate: &str) -> bool {
        let (sa, sb) = (&self.nodes[a], &self.nodes[b]);
        if sa.is_class() || sb.is_class() {
            return false;
        }
        let (ta, tb) = (sa.query_term(), sb.query_term());
        if ta.is_variable() || tb.is_variable() {
            return false;
        }
        let p = Term::Iri(predicate.to_string());
        self.store
            .matching(Some(&ta), Some(&p), Some(&tb))
            .is_empty()
    }

    fn assign_edges(&mut self, index: usize, joined: &mut BTreeSet<usize>) {
        if self.budget == 0 {
            return;
        }
        if index == self.graph.edges.len() {
            self.complete();
            return;
        }
        let edge = &self.graph.edges[index];
        let (a, b) = edge.endpoints;
        if edge.phrase_tokens.is_empty() {
            if let Some(a_is_class) = membership_side(&self.nodes[a], &self.nodes[b]) {
                let class_node = if a_is_class { a } else { b };
                if joined.insert(class_node) {
                    self.edges.push(EdgeBinding::Membership);
                    self.assign_edges(index + 1, joined);
                    self.edges.pop();
                    joined.remove(&class_node);
                }
            }
        }
        for candidate in &edge.candidates {
            for forward in [true, false] {
                let (s, o) = if forward { (a, b) } else { (b, a) };
                if self.verify && self.ground_pair_missing(s, o, &candidate.predicate) {
                    continue;
                }
                self.edges.push(EdgeBinding::Predicate {
                    predicate: candidate.predicate.clone(),
                    forward,
                    score: candidate.score,
                });
                self.assign_edges(index + 1, joined);
                self.edges.pop();
            }
        }
    }

    fn complete(&mut self) {
        self.budget -= 1;
        let Some(sparql) =
            render_query(self.graph, &self.nodes, &self.edges, self.store.type_predicate())
        else {
            return;
        };
        if has_solution(self.store, &sparql) != self.verify {
            return;
        }
        let grounded = GroundedGraph {
            nodes: self
                .graph
                .nodes
                .iter()
                .zip(&self.nodes)
                .map(|(node, binding)| GroundedNode {
                    node: node.id,
                    surface: node.mention.surface.clone(),
                    binding: binding.clone(),
                })
                .collect(),
            edges: self
                .graph
                .edges
                .iter()
                .zip(&self.edges)
                .map(|(edge, binding)| GroundedEdge {
                    edge: edge.id,
                    binding: binding.clone(),
                })
                .collect(),
            score: 0.0,
        };
        let score = grounded.compute_score();
        self.out.push(CandidateQuery {
            grounded: GroundedGraph { score, ..grounded },
            text: sparql.to_string(),
            sparql,
            score,
        });
    }
}

/// Score descending, then rendered query, then assignment key.
pub fn rank(candidates: &mut Vec<CandidateQuery>) {
    let mut seen = BTreeSet::new();
    candidates.retain(|c| seen.insert(c.grounded.key()));
    candidates.sort_by(|x, y| {
        y.score
            .partial_cmp(&x.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| x.text.cmp(&y.text))
            .then_with(|| x.grounded.key().cmp(&y.grounded.key()))
    });
}

#[derive(Debug, Clone, Copy)]
pub struct Matcher<'a> {
    store: &'a TripleStore,
    config: MatchConfig,
}

impl<'a> Matcher<'a> {
    pub fn new(store: &'a TripleStore, config: MatchConfig) -> Self {
        Matcher { store, config }
    }

    fn search(&self, graph: &QueryGraph, verify: bool, budget: usize) -> Vec<CandidateQuery> {
        let names = variable_names(graph);
        let node_options = graph
            .nodes
            .iter()
            .map(|n| node_options(n, &names, self.store, self.config.member_limit, verify))
            .collect();
        let mut search = Search {
            graph,
            store: self.store,
            node_options,
            verify,
            budget,
            nodes: Vec::new(),
            edges: Vec::new(),
            out: Vec::new(),
        };
        search.assign_nodes(0);
        let mut out = search.out;
        rank(&mut out);
        out
    }

    /// Every verified grounding, ranked, before top-k truncation.
    pub fn enumerate_verified(&self, graph: &QueryGraph) -> Vec<CandidateQuery> {
        self.search(graph, true, self.config.max_assignments)
    }

    /// Best unverified groundings with Type nodes as class constraints.
    pub fn fallback(&self, graph: &QueryGraph) -> Vec<CandidateQuery> {
        let mut out = self.search(graph, false, FALLBACK_LIMIT);
        out.truncate(self.config.k);
        out
    }

    /// Top-k verified candidate queries, best first.
    pub fn match_graph(&self, graph: &QueryGraph) -> Result<Vec<CandidateQuery>, MatchError> {
        if graph.nodes.is_empty() {
            return Err(MatchError::EmptyGraph);
        }
        let mut out = self.enumerate_verified(graph);
        if out.is_empty() {
            return Err(MatchError::NoMatch {
                fallback: self.fallback(graph),
            });
        }
        out.truncate(self.config.k.max(1));
        Ok(out)
    }
}
