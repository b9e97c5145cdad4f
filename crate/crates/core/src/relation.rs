//! Relation extraction: candidate predicates with scores for every
//! query-graph edge.
//!
//! Three sources of evidence are combined per edge:
//! - the lowest common ancestor of the two anchors and its dependents on the
//!   connecting path (weight `w`);
//! - the path tokens and their one-hop neighbours (`0.9 * w`);
//! - when neither yields anything, every predicate that actually connects
//!   candidate groundings of the endpoints in the store (`0.5`).

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::extract::{MentionKind, ServiceError};
use crate::graph::{QueryGraph, QueryNode};
use crate::kb::TripleStore;
use crate::structure::SemanticStructure;
use crate::term::{local_name, Term};
use crate::text::normalize;

pub const PATH_DISCOUNT: f64 = 0.9;
pub const KB_GUIDED_SCORE: f64 = 0.5;
pub const DEFAULT_ALIAS_WEIGHT: f64 = 0.9;
pub const DEFAULT_TOP_M: usize = 5;
const MAX_PHRASE_NGRAM: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredicateCandidate {
    pub predicate: String,
    pub score: f64,
}

/// Natural-language phrase → weighted predicates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredicateDictionary {
    dataset_id: String,
    entries: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Splits `releaseDate` into `release Date`.
fn split_camel(name: &str) -> String {
    let mut out = String::with_capacity(name.len() + 4);
    let mut prev_lower = false;
    for c in name.chars() {
        if c.is_uppercase() && prev_lower {
            out.push(' ');
        }
        prev_lower = c.is_lowercase() || c.is_ascii_digit();
        out.push(c);
    }
    out
}

impl PredicateDictionary {
    /// Keys every predicate by its normalized local name (weight 1.0) and
    /// merges alias rows `phrase \t predicate \t weight`.
    pub fn build(store: &TripleStore, aliases: Option<&PredicateAliases>) -> Self {
        let mut dict = PredicateDictionary {
            dataset_id: store.dataset_id().to_string(),
            entries: BTreeMap::new(),
        };
        for predicate in store.predicates() {
            let local = local_name(predicate);
            dict.insert(normalize(local), predicate, 1.0);
            dict.insert(normalize(&split_camel(local)), predicate, 1.0);
        }
        if let Some(aliases) = aliases {
            for (phrase, predicate, weight) in &aliases.rows {
                if store.is_predicate(predicate) {
                    dict.insert(normalize(phrase), predicate, *weight);
                }
            }
        }
        dict
    }

    /// An empty dictionary for a dataset.
    pub fn empty(dataset_id: impl Into<String>) -> Self {
        PredicateDictionary {
            dataset_id: dataset_id.into(),
            entries: BTreeMap::new(),
        }
    }

    fn insert(&mut self, key: String, predicate: &str, weight: f64) {
        if key.is_empty() {
            return;
        }
        let slot = self
            .entries
            .entry(key)
            .or_default()
            .entry(predicate.to_string())
            .or_insert(weight);
        if weight > *slot {
            *slot = weight;
        }
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Weighted predicates for a phrase (normalized before lookup).
    pub fn lookup(&self, phrase: &str) -> Vec<(&str, f64)> {
        self.entries
            .get(&normalize(phrase))
            .map(|m| m.iter().map(|(p, w)| (p.as_str(), *w)).collect())
            .unwrap_or_default()
    }
}

/// Rows of a predicate alias file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredicateAliases {
    pub rows: Vec<(String, String, f64)>,
}

impl PredicateAliases {
    /// Reads `phrase \t predicate_iri [\t weight]`; weight defaults to 0.9
    /// and must lie in (0, 1].
    pub fn parse(source: &str) -> Result<Self, (usize, String)> {
        let mut rows = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let columns: Vec<&str> = line.split('\t').map(str::trim).collect();
            let (phrase, iri, weight) = match columns.as_slice() {
                [phrase, iri] => (*phrase, *iri, DEFAULT_ALIAS_WEIGHT),
                [phrase, iri, weight] => {
                    let weight: f64 = weight
                        .parse()
                        .map_err(|_| (i + 1, format!("bad weight {weight:?}")))?;
                    (*phrase, *iri, weight)
                }
                _ => return Err((i + 1, "expected `phrase<TAB>predicate[<TAB>weight]`".into())),
            };
            if !(weight > 0.0 && weight <= 1.0) {
                return Err((i + 1, format!("weight {weight} outside (0, 1]")));
            }
            if phrase.is_empty() || iri.is_empty() {
                return Err((i + 1, "empty column".into()));
            }
            let iri = iri.trim_start_matches('<').trim_end_matches('>');
            rows.push((phrase.to_string(), iri.to_string(), weight));
        }
        Ok(PredicateAliases { rows })
    }
}

/// Token-text n-grams (n ≤ 3) over runs of consecutive indexes in `tokens`.
fn phrase_keys(structure: &SemanticStructure, tokens: &BTreeSet<usize>) -> Vec<String> {
    let sorted: Vec<usize> = tokens.iter().copied().collect();
    let mut keys = Vec::new();
    for (i, &first) in sorted.iter().enumerate() {
        let mut text = structure.tokens[first].text.clone();
        keys.push(text.clone());
        for n in 1..MAX_PHRASE_NGRAM {
            match sorted.get(i + n) {
                Some(&next) if next == first + n => {
                    text.push(' ');
                    text.push_str(&structure.tokens[next].text);
                    keys.push(text.clone());
                }
                _ => break,
            }
        }
    }
    keys
}

fn collect(
    dict: &PredicateDictionary,
    keys: &[String],
    factor: f64,
    out: &mut BTreeMap<String, f64>,
) {
    for key in keys {
        for (predicate, weight) in dict.lookup(key) {
            let score = factor * weight;
            let slot = out.entry(predicate.to_string()).or_insert(score);
            if score > *slot {
                *slot = score;
            }
        }
    }
}

/// Terms a query node could ground to; `None` is a wildcard.
fn groundings(node: &QueryNode, store: &TripleStore) -> Option<BTreeSet<Term>> {
    match node.kind {
        MentionKind::Variable => None,
        MentionKind::Literal => {
            let value = node
                .mention
                .literal_value
                .clone()
                .unwrap_or_else(|| node.mention.surface.clone());
            Some(BTreeSet::from([Term::Literal(value)]))
        }
        MentionKind::Entity => Some(
            node.mention
                .links
                .iter()
                .map(|l| Term::Iri(l.iri.clone()))
                .collect(),
        ),
        MentionKind::Type => {
            let mut out = BTreeSet::new();
            for link in &node.mention.links {
                out.insert(Term::Iri(link.iri.clone()));
                for member in store.members_of(&link.iri) {
                    out.insert(Term::Iri(member.to_string()));
                }
            }
            Some(out)
        }
    }
}

/// Predicates connecting some grounding of `a` with some grounding of `b`,
/// in either direction.
pub fn connecting_predicates(
    a: &QueryNode,
    b: &QueryNode,
    store: &TripleStore,
) -> BTreeSet<String> {
    let (ga, gb) = (groundings(a, store), groundings(b, store));
    let mut out = BTreeSet::new();
    let mut scan = |from: &Option<BTreeSet<Term>>, to: &Option<BTreeSet<Term>>| match (from, to) {
        (Some(subjects), _) => {
            for s in subjects {
                for t in store.matching(Some(s), None, None) {
                    if to.as_ref().is_none_or(|objects| objects.contains(&t.object)) {
                        out.insert(t.predicate.as_iri().unwrap_or_default().to_string());
                    }
                }
            }
        }
        (None, Some(objects)) => {
            for o in objects {
                for t in store.matching(None, None, Some(o)) {
                    out.insert(t.predicate.as_iri().unwrap_or_default().to_string());
                }
            }
        }
        (None, None) => {
            out.extend(store.predicates().map(str::to_string));
        }
    };
    scan(&ga, &gb);
    scan(&gb, &ga);
    out
}

/// Fills the candidate predicates of every edge of `graph`.
pub fn extract_relations(
    graph: &QueryGraph,
    structure: &SemanticStructure,
    dict: &PredicateDictionary,
    store: &TripleStore,
    top_m: usize,
) -> QueryGraph {
    let mut out = graph.clone();
    for edge in &mut out.edges {
        let (a, b) = (&graph.nodes[edge.endpoints.0], &graph.nodes[edge.endpoints.1]);
        let phrase: BTreeSet<usize> = edge.phrase_tokens.iter().copied().collect();
        let mut scores: BTreeMap<String, f64> = BTreeMap::new();

        let lca = structure.lowest_common_ancestor(a.anchor, b.anchor);
        let mut ancestor_tokens = BTreeSet::from([lca]);
        ancestor_tokens.extend(phrase.iter().copied().filter(|&t| structure.head(t) == Some(lca)));
        collect(dict, &phrase_keys(structure, &ancestor_tokens), 1.0, &mut scores);

        let mut path_keys = phrase_keys(structure, &phrase);
        let neighbors: BTreeSet<usize> = phrase
            .iter()
            .flat_map(|&t| structure.neighbors(t))
            .filter(|t| !phrase.contains(t))
            .collect();
        path_keys.extend(neighbors.iter().map(|&t| structure.tokens[t].text.clone()));
        collect(dict, &path_keys, PATH_DISCOUNT, &mut scores);

        if scores.is_empty() {
            for predicate in connecting_predicates(a, b, store) {
                scores.insert(predicate, KB_GUIDED_SCORE);
            }
        }

        let mut candidates: Vec<PredicateCandidate> = scores
            .into_iter()
            .map(|(predicate, score)| PredicateCandidate { predicate, score })
            .collect();
        candidates.sort_by(|x, y| {
            y.score
                .partial_cmp(&x.score)
                .unwrap_or(Ordering::Equal)
                .then_with(|| x.predicate.cmp(&y.predicate))
        });
        candidates.truncate(top_m);
        edge.candidates = candidates;
    }
    out
}

/// A dataset-related relation-extraction service.
pub trait RelationExtractor: Send + Sync {
    fn extract(
        &self,
        question: &str,
        graph: &QueryGraph,
        structure: &SemanticStructure,
        top_m: usize,
    ) -> Result<QueryGraph, ServiceError>;
}

/// In-process extractor backed by a [`PredicateDictionary`].
#[derive(Debug, Clone)]
pub struct DictionaryRelationExtractor {
    dict: Arc<PredicateDictionary>,
    store: Arc<TripleStore>,
}

impl DictionaryRelationExtractor {
    pub fn new(dict: Arc<PredicateDictionary>, store: Arc<TripleStore>) -> Self {
        DictionaryRelationExtractor { dict, store }
    }
}

impl RelationExtractor for DictionaryRelationExtractor {
    fn extract(
        &self,
        _question: &str,
        graph: &QueryGraph,
        structure: &SemanticStructure,
        top_m: usize,
    ) -> Result<QueryGraph, ServiceError> {
        Ok(extract_relations(graph, structure, &self.dict, &self.store, top_m))
    }
}
