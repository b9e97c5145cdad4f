//! Node extraction: detects Entity / Type / Literal / Variable mentions and
//! links entity and type mentions to knowledge-base IRIs.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::TripleStore;
use crate::structure::{self, SemanticStructure};
use crate::text::{normalize, normalized_similarity, similarity_bound};

/// Longest token n-gram considered as a mention.
pub const MAX_MENTION_TOKENS: usize = 6;
pub const DEFAULT_THRESHOLD: f64 = 0.8;

/// Failure of a dataset-related service (in-process or remote).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("{service} service unavailable: {message}")]
    Unavailable { service: String, message: String },
    #[error("{service} service returned an invalid response: {message}")]
    Protocol { service: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Entity,
    Type,
    Literal,
    Variable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub iri: String,
    pub score: f64,
}

/// A detected mention. `span` is a byte range of the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionCandidate {
    pub span: (usize, usize),
    pub surface: String,
    pub kind: MentionKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub literal_value: Option<String>,
    #[serde(default)]
    pub links: Vec<Link>,
}

impl MentionCandidate {
    pub fn variable(span: (usize, usize), surface: impl Into<String>) -> Self {
        MentionCandidate {
            span,
            surface: surface.into(),
            kind: MentionKind::Variable,
            literal_value: None,
            links: Vec::new(),
        }
    }

    pub fn best_score(&self) -> Option<f64> {
        self.links.first().map(|l| l.score)
    }
}

/// Extra surface forms for IRIs, read from `surface \t iri` lines.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AliasTable {
    pub rows: Vec<(String, String)>,
}

impl AliasTable {
    pub fn parse(source: &str) -> Result<Self, (usize, String)> {
        let mut rows = Vec::new();
        for (i, line) in source.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let columns: Vec<&str> = line.split('\t').map(str::trim).collect();
            match columns.as_slice() {
                [surface, iri] if !surface.is_empty() && !iri.is_empty() => {
                    let iri = iri.trim_start_matches('<').trim_end_matches('>');
                    rows.push((surface.to_string(), iri.to_string()));
                }
                _ => return Err((i + 1, "expected `surface<TAB>iri`".to_string())),
            }
        }
        Ok(AliasTable { rows })
    }
}

#[derive(Debug, Clone, Default)]
struct NameIndex {
    names: BTreeMap<String, BTreeSet<String>>,
    by_length: BTreeMap<usize, Vec<String>>,
}

impl NameIndex {
    fn insert(&mut self, key: String, iri: &str) {
        if key.is_empty() {
            return;
        }
        let entry = self.names.entry(key.clone()).or_default();
        if entry.is_empty() {
            self.by_length.entry(key.chars().count()).or_default().push(key);
        }
        entry.insert(iri.to_string());
    }

    /// IRIs whose name scores at least `threshold` against `norm`, with the
    /// best score per IRI.
    fn lookup(&self, norm: &str, threshold: f64) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        if threshold >= 1.0 {
            if let Some(iris) = self.names.get(norm) {
                for iri in iris {
                    out.insert(iri.clone(), 1.0);
                }
            }
            return out;
        }
        let len = norm.chars().count();
        let lengths = self
            .by_length
            .iter()
            .filter(|(l, _)| similarity_bound(len, **l) >= threshold);
        for keys in lengths.map(|(_, k)| k) {
            for key in keys {
                let score = normalized_similarity(norm, key);
                if score >= threshold {
                    for iri in &self.names[key] {
                        let best = out.entry(iri.clone()).or_insert(score);
                        if score > *best {
                            *best = score;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Normalized names of a dataset's entities and types.
#[derive(Debug, Clone)]
pub struct Lexicon {
    dataset_id: String,
    entities: NameIndex,
    types: NameIndex,
    wh_words: Vec<String>,
}

impl Lexicon {
    /// Entity names come from every entity IRI's labels, type names from
    /// objects of `type_predicate` triples; aliases whose IRI is absent from
    /// the store are ignored.
    pub fn build(store: &TripleStore, aliases: Option<&AliasTable>, language: &str) -> Self {
        let mut entities = NameIndex::default();
        let mut types = NameIndex::default();
        let classes: BTreeSet<&str> = store.classes().into_iter().collect();
        for (label, iris) in store.label_index() {
            for iri in iris {
                entities.insert(label.clone(), iri);
                if classes.contains(iri.as_str()) {
                    types.insert(label.clone(), iri);
                }
            }
        }
        if let Some(aliases) = aliases {
            for (surface, iri) in &aliases.rows {
                if !store.contains_iri(iri) || store.is_predicate(iri) {
                    continue;
                }
                let key = normalize(surface);
                if classes.contains(iri.as_str()) {
                    types.insert(key, iri);
                } else {
                    entities.insert(key, iri);
                }
            }
        }
        Lexicon {
            dataset_id: store.dataset_id().to_string(),
            entities,
            types,
            wh_words: structure::wh_words(language)
                .iter()
                .map(|w| w.to_string())
                .collect(),
        }
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn entity_names(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entities.names
    }

    pub fn type_names(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.types.names
    }

    pub fn is_wh_word(&self, norm: &str) -> bool {
        self.wh_words.iter().any(|w| w == norm)
    }
}

fn is_number(text: &str) -> bool {
    let mut digits = 0;
    for c in text.chars() {
        match c {
            '0'..='9' => digits += 1,
            '.' | ',' => {}
            _ => return false,
        }
    }
    digits > 0 && text.starts_with(|c: char| c.is_ascii_digit())
}

fn is_quote(text: &str) -> bool {
    matches!(text, "\"" | "\u{201c}" | "\u{201d}" | "\u{300c}" | "\u{300d}")
}

struct Candidate {
    first: usize,
    last: usize,
    score: f64,
    rank: u8,
    mention: MentionCandidate,
}

fn kind_rank(kind: MentionKind) -> u8 {
    match kind {
        MentionKind::Literal => 0,
        MentionKind::Variable => 1,
        MentionKind::Type => 2,
        MentionKind::Entity => 3,
    }
}

fn sorted_links(links: BTreeMap<String, f64>) -> Vec<Link> {
    let mut out: Vec<Link> = links
        .into_iter()
        .map(|(iri, score)| Link { iri, score })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.iri.cmp(&b.iri))
    });
    out
}

/// Scans token n-grams (up to [`MAX_MENTION_TOKENS`]) for mentions.
///
/// Overlaps are resolved greedily by score, then longer span, then
/// leftmost; Type beats Entity on the same span and score. Wh-words become
/// Variables, quoted strings and bare numbers become Literals.
pub fn extract_nodes(
    question: &str,
    structure: &SemanticStructure,
    lexicon: &Lexicon,
    threshold: f64,
) -> Vec<MentionCandidate> {
    let tokens = &structure.tokens;
    let norms: Vec<String> = tokens.iter().map(|t| normalize(&t.text)).collect();
    let mut candidates: Vec<Candidate> = Vec::new();

    let mut open: Option<usize> = None;
    for (i, token) in tokens.iter().enumerate() {
        if !is_quote(&token.text) {
            continue;
        }
        match open.take() {
            None => open = Some(i),
            Some(o) => {
                let (start, end) = (tokens[o].start, token.end);
                candidates.push(Candidate {
                    first: o,
                    last: i,
                    score: 1.0,
                    rank: 0,
                    mention: MentionCandidate {
                        span: (start, end),
                        surface: question[start..end].to_string(),
                        kind: MentionKind::Literal,
                        literal_value: Some(question[tokens[o].end..token.start].to_string()),
                        links: Vec::new(),
                    },
                });
            }
        }
    }

    for first in 0..tokens.len() {
        if norms[first].is_empty() {
            continue;
        }
        for last in first..tokens.len().min(first + MAX_MENTION_TOKENS) {
            if norms[last].is_empty() || tokens[first..=last].iter().any(|t| is_quote(&t.text)) {
                continue;
            }
            let (start, end) = (tokens[first].start, tokens[last].end);
            let surface = &question[start..end];
            let norm = normalize(surface);
            let single = first == last;
            let mut push = |kind: MentionKind, score: f64, links: Vec<Link>, literal: Option<String>| {
                candidates.push(Candidate {
                    first,
                    last,
                    score,
                    rank: kind_rank(kind),
                    mention: MentionCandidate {
                        span: (start, end),
                        surface: surface.to_string(),
                        kind,
                        literal_value: literal,
                        links,
                    },
                });
            };
            if single && is_number(&tokens[first].text) {
                push(MentionKind::Literal, 1.0, Vec::new(), Some(surface.to_string()));
            }
            if lexicon.is_wh_word(&norm) {
                push(MentionKind::Variable, 1.0, Vec::new(), None);
            }
            let entity_links = lexicon.entities.lookup(&norm, threshold);
            let type_links = lexicon.types.lookup(&norm, threshold);
            let best = |links: &BTreeMap<String, f64>| links.values().copied().fold(f64::NAN, f64::max);
            let (best_entity, best_type) = (best(&entity_links), best(&type_links));
            if !type_links.is_empty() && !(best_entity > best_type) {
                push(MentionKind::Type, best_type, sorted_links(type_links), None);
            } else if !entity_links.is_empty() {
                push(MentionKind::Entity, best_entity, sorted_links(entity_links), None);
            }
        }
    }

    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| (b.last - b.first).cmp(&(a.last - a.first)))
            .then_with(|| {
                let len = |c: &Candidate| c.mention.span.1 - c.mention.span.0;
                len(b).cmp(&len(a))
            })
            .then_with(|| a.first.cmp(&b.first))
            .then_with(|| a.rank.cmp(&b.rank))
    });
    let mut taken = vec![false; tokens.len()];
    let mut accepted: Vec<MentionCandidate> = Vec::new();
    for c in candidates {
        if taken[c.first..=c.last].iter().any(|&t| t) {
            continue;
        }
        taken[c.first..=c.last].iter_mut().for_each(|t| *t = true);
        accepted.push(c.mention);
    }
    accepted.sort_by_key(|m| m.span.0);
    accepted
}

/// A dataset-related node-extraction service.
pub trait NodeExtractor: Send + Sync {
    fn extract(
        &self,
        question: &str,
        structure: &SemanticStructure,
        language: &str,
        threshold: f64,
    ) -> Result<Vec<MentionCandidate>, ServiceError>;
}

/// In-process extractor backed by a [`Lexicon`].
#[derive(Debug, Clone)]
pub struct LexiconExtractor {
    lexicon: std::sync::Arc<Lexicon>,
}

impl LexiconExtractor {
    pub fn new(lexicon: std::sync::Arc<Lexicon>) -> Self {
        LexiconExtractor { lexicon }
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl NodeExtractor for LexiconExtractor {
    fn extract(
        &self,
        question: &str,
        structure: &SemanticStructure,
        _language: &str,
        threshold: f64,
    ) -> Result<Vec<MentionCandidate>, ServiceError> {
        Ok(extract_nodes(question, structure, &self.lexicon, threshold))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{load_triples, TripleFormat};

    const FILMS: &str = "The_Matrix\ttype\tfilm
John_Wick\ttype\tfilm
Speed\ttype\tfilm
The_Matrix\tstarring\tKeanu_Reeves
John_Wick\tstarring\tKeanu_Reeves
The_Matrix\tlength\t\"136\"
John_Wick\tlength\t\"101\"
Speed\tlength\t\"116\"
";

    fn lexicon(aliases: Option<&AliasTable>) -> Lexicon {
        let store = load_triples(FILMS.as_bytes(), TripleFormat::Tsv, "films", "type").unwrap();
        Lexicon::build(&store, aliases, "en")
    }

    fn run(question: &str, threshold: f64) -> Vec<MentionCandidate> {
        let s = SemanticStructure::parse(question, "en").unwrap();
        extract_nodes(question, &s, &lexicon(None), threshold)
    }

    #[test]
    fn lexicon_contents() {
        let lex = lexicon(None);
        assert!(lex.entity_names()["keanu reeves"].contains("Keanu_Reeves"));
        assert!(lex.type_names()["film"].contains("film"));
        assert!(!lex.type_names().contains_key("keanu reeves"));
        assert!(!lex.entity_names().contains_key("starring"));
    }

    #[test]
    fn aliases_merge() {
        let aliases = AliasTable::parse("Neo actor\tKeanu_Reeves\nghost\tNobody\n").unwrap();
        let lex = lexicon(Some(&aliases));
        assert!(lex.entity_names()["neo actor"].contains("Keanu_Reeves"));
        assert!(!lex.entity_names().contains_key("ghost"));
        let empty = lexicon(Some(&AliasTable::default()));
        assert_eq!(empty.entity_names(), lexicon(None).entity_names());
        assert!(AliasTable::parse("only one column\n").is_err());
    }

    #[test]
    fn length_question_mentions() {
        let q = "What is the length of the film starring Keanu Reeves";
        let mentions = run(q, 0.85);
        let got: Vec<(&str, MentionKind)> =
            mentions.iter().map(|m| (m.surface.as_str(), m.kind)).collect();
        assert_eq!(
            got,
            vec![
                ("What", MentionKind::Variable),
                ("film", MentionKind::Type),
                ("Keanu Reeves", MentionKind::Entity),
            ]
        );
        assert_eq!(mentions[2].links, vec![Link { iri: "Keanu_Reeves".into(), score: 1.0 }]);
        assert_eq!(&q[mentions[2].span.0..mentions[2].span.1], "Keanu Reeves");
    }

    #[test]
    fn literals_and_empty() {
        let mentions = run("films longer than 120 minutes", 0.85);
        let literal = mentions.iter().find(|m| m.kind == MentionKind::Literal).unwrap();
        assert_eq!(literal.surface, "120");
        assert_eq!(literal.literal_value.as_deref(), Some("120"));
        assert!(run("tell me a joke", 0.85).is_empty());
        let quoted = run("which film is called \"The Matrix\"", 0.85);
        let literal = quoted.iter().find(|m| m.kind == MentionKind::Literal).unwrap();
        assert_eq!(literal.literal_value.as_deref(), Some("The Matrix"));
    }

    #[test]
    fn fuzzy_links_respect_threshold() {
        let mentions = run("films with Keanu Reevs", 0.8);
        let keanu = mentions.iter().find(|m| m.kind == MentionKind::Entity).unwrap();
        assert_eq!(keanu.links[0].iri, "Keanu_Reeves");
        assert!(keanu.links[0].score < 1.0 && keanu.links[0].score >= 0.8);
        assert!(run("films with Keanu Reevs", 1.0)
            .iter()
            .all(|m| m.kind != MentionKind::Entity));
    }
}
