use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::KbError;
use crate::term::{local_name, Term, Triple};
use crate::text::normalize;

pub(crate) type TermId = u32;
type Key = (TermId, TermId, TermId);

/// Counts reported per dataset: triples, entities and predicates.
///
/// Entities are the distinct IRIs in subject or object position that are
/// never used as a predicate. Class IRIs are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbStats {
    pub triples: usize,
    pub entities: usize,
    pub predicates: usize,
}

/// Immutable dictionary-encoded triple store with SPO, POS and OSP indexes.
#[derive(Debug, Clone)]
pub struct TripleStore {
    dataset_id: String,
    type_predicate: String,
    terms: Vec<Term>,
    ids: HashMap<Term, TermId>,
    spo: BTreeSet<Key>,
    pos: BTreeSet<Key>,
    osp: BTreeSet<Key>,
    labels: BTreeMap<String, BTreeSet<String>>,
    predicates: BTreeSet<TermId>,
}

/// Accumulates distinct triples, then builds the indexes once.
#[derive(Debug, Clone)]
pub struct StoreBuilder {
    dataset_id: String,
    type_predicate: String,
    triples: BTreeSet<Triple>,
}

impl StoreBuilder {
    pub fn new(dataset_id: impl Into<String>, type_predicate: impl Into<String>) -> Self {
        StoreBuilder {
            dataset_id: dataset_id.into(),
            type_predicate: type_predicate.into(),
            triples: BTreeSet::new(),
        }
    }

    /// Returns false when the triple was already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        self.triples.insert(triple)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn build(self) -> Result<TripleStore, KbError> {
        if self.triples.is_empty() {
            return Err(KbError::EmptyDataset(self.dataset_id));
        }
        let mut store = TripleStore {
            dataset_id: self.dataset_id,
            type_predicate: self.type_predicate,
            terms: Vec::new(),
            ids: HashMap::new(),
            spo: BTreeSet::new(),
            pos: BTreeSet::new(),
            osp: BTreeSet::new(),
            labels: BTreeMap::new(),
            predicates: BTreeSet::new(),
        };
        for triple in self.triples {
            let s = store.intern(triple.subject);
            let p = store.intern(triple.predicate);
            let o = store.intern(triple.object);
            store.spo.insert((s, p, o));
            store.pos.insert((p, o, s));
            store.osp.insert((o, s, p));
            store.predicates.insert(p);
        }
        store.build_labels();
        Ok(store)
    }
}

fn full_range(a: TermId) -> RangeInclusive<Key> {
    (a, 0, 0)..=(a, TermId::MAX, TermId::MAX)
}

fn pair_range(a: TermId, b: TermId) -> RangeInclusive<Key> {
    (a, b, 0)..=(a, b, TermId::MAX)
}

fn is_label_predicate(iri: &str) -> bool {
    local_name(iri).eq_ignore_ascii_case("label")
}

impl TripleStore {
    pub fn builder(dataset_id: impl Into<String>, type_predicate: impl Into<String>) -> StoreBuilder {
        StoreBuilder::new(dataset_id, type_predicate)
    }

    /// Builds a store from already-parsed triples.
    pub fn from_triples(
        dataset_id: impl Into<String>,
        type_predicate: impl Into<String>,
        triples: impl IntoIterator<Item = Triple>,
    ) -> Result<Self, KbError> {
        let mut builder = StoreBuilder::new(dataset_id, type_predicate);
        for triple in triples {
            builder.insert(triple);
        }
        builder.build()
    }

    fn intern(&mut self, term: Term) -> TermId {
        if let Some(&id) = self.ids.get(&term) {
            return id;
        }
        let id = self.terms.len() as TermId;
        self.terms.push(term.clone());
        self.ids.insert(term, id);
        id
    }

    fn build_labels(&mut self) {
        let mut labels: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for iri in self.entities() {
            let key = normalize(local_name(iri));
            if !key.is_empty() {
                labels.entry(key).or_default().insert(iri.to_string());
            }
        }
        for &(s, p, o) in &self.spo {
            let (Term::Iri(predicate), Term::Literal(label)) = (&self.terms[p as usize], &self.terms[o as usize]) else {
                continue;
            };
            if is_label_predicate(predicate) {
                let key = normalize(label);
                if let (false, Term::Iri(subject)) = (key.is_empty(), &self.terms[s as usize]) {
                    labels.entry(key).or_default().insert(subject.clone());
                }
            }
        }
        self.labels = labels;
    }

    pub fn dataset_id(&self) -> &str {
        &self.dataset_id
    }

    pub fn type_predicate(&self) -> &str {
        &self.type_predicate
    }

    pub fn len(&self) -> usize {
        self.spo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spo.is_empty()
    }

    pub(crate) fn id_of(&self, term: &Term) -> Option<TermId> {
        self.ids.get(term).copied()
    }

    pub(crate) fn term(&self, id: TermId) -> &Term {
        &self.terms[id as usize]
    }

    fn decode(&self, (s, p, o): Key) -> Triple {
        Triple {
            subject: self.term(s).clone(),
            predicate: self.term(p).clone(),
            object: self.term(o).clone(),
        }
    }

    /// All triples in subject-predicate-object id order.
    pub fn triples(&self) -> impl Iterator<Item = Triple> + '_ {
        self.spo.iter().map(|&key| self.decode(key))
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        match (
            self.id_of(&triple.subject),
            self.id_of(&triple.predicate),
            self.id_of(&triple.object),
        ) {
            (Some(s), Some(p), Some(o)) => self.spo.contains(&(s, p, o)),
            _ => false,
        }
    }

    /// Id-level pattern scan; `None` positions are unbound. Results are
    /// `(subject, predicate, object)` ids.
    pub(crate) fn scan_ids(
        &self,
        s: Option<TermId>,
        p: Option<TermId>,
        o: Option<TermId>,
    ) -> Box<dyn Iterator<Item = Key> + '_> {
        match (s, p, o) {
            (Some(s), Some(p), Some(o)) => {
                Box::new(self.spo.contains(&(s, p, o)).then_some((s, p, o)).into_iter())
            }
            (Some(s), Some(p), None) => Box::new(self.spo.range(pair_range(s, p)).copied()),
            (Some(s), None, None) => Box::new(self.spo.range(full_range(s)).copied()),
            (None, Some(p), Some(o)) => {
                Box::new(self.pos.range(pair_range(p, o)).map(|&(p, o, s)| (s, p, o)))
            }
            (None, Some(p), None) => {
                Box::new(self.pos.range(full_range(p)).map(|&(p, o, s)| (s, p, o)))
            }
            (Some(s), None, Some(o)) => {
                Box::new(self.osp.range(pair_range(o, s)).map(|&(o, s, p)| (s, p, o)))
            }
            (None, None, Some(o)) => {
                Box::new(self.osp.range(full_range(o)).map(|&(o, s, p)| (s, p, o)))
            }
            (None, None, None) => Box::new(self.spo.iter().copied()),
        }
    }

    /// Triples matching a pattern where `None` is a wildcard.
    pub fn matching(
        &self,
        subject: Option<&Term>,
        predicate: Option<&Term>,
        object: Option<&Term>,
    ) -> Vec<Triple> {
        let lookup = |term: Option<&Term>| match term {
            None => Some(None),
            Some(term) => self.id_of(term).map(Some),
        };
        let (Some(s), Some(p), Some(o)) = (lookup(subject), lookup(predicate), lookup(object)) else {
            return Vec::new();
        };
        self.scan_ids(s, p, o).map(|key| self.decode(key)).collect()
    }

    /// Distinct predicate IRIs.
    pub fn predicates(&self) -> impl Iterator<Item = &str> + '_ {
        self.predicates
            .iter()
            .filter_map(|&p| self.term(p).as_iri())
    }

    /// Distinct IRIs in subject or object position that are not predicates,
    /// in sorted order.
    pub fn entities(&self) -> Vec<&str> {
        let mut out = BTreeSet::new();
        for &(s, _, o) in &self.spo {
            for id in [s, o] {
                if self.predicates.contains(&id) {
                    continue;
                }
                if let Term::Iri(iri) = self.term(id) {
                    out.insert(iri.as_str());
                }
            }
        }
        out.into_iter().collect()
    }

    /// Objects of `type_predicate` triples.
    pub fn classes(&self) -> Vec<&str> {
        let Some(tp) = self.id_of(&Term::Iri(self.type_predicate.clone())) else {
            return Vec::new();
        };
        let mut out = BTreeSet::new();
        for &(_, o, _) in self.pos.range(full_range(tp)) {
            if let Term::Iri(iri) = self.term(o) {
                out.insert(iri.as_str());
            }
        }
        out.into_iter().collect()
    }

    pub fn is_class(&self, iri: &str) -> bool {
        let (Some(tp), Some(class)) = (
            self.id_of(&Term::Iri(self.type_predicate.clone())),
            self.id_of(&Term::Iri(iri.to_string())),
        ) else {
            return false;
        };
        self.pos.range(pair_range(tp, class)).next().is_some()
    }

    /// Subjects typed with `class`, sorted.
    pub fn members_of(&self, class: &str) -> Vec<&str> {
        let (Some(tp), Some(class)) = (
            self.id_of(&Term::Iri(self.type_predicate.clone())),
            self.id_of(&Term::Iri(class.to_string())),
        ) else {
            return Vec::new();
        };
        let mut out: Vec<&str> = self
            .pos
            .range(pair_range(tp, class))
            .filter_map(|&(_, _, s)| self.term(s).as_iri())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn contains_iri(&self, iri: &str) -> bool {
        self.ids.contains_key(&Term::Iri(iri.to_string()))
    }

    pub fn is_predicate(&self, iri: &str) -> bool {
        self.id_of(&Term::Iri(iri.to_string()))
            .is_some_and(|id| self.predicates.contains(&id))
    }

    /// Normalized label → IRIs carrying it.
    pub fn label_index(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.labels
    }

    pub fn iris_for_label(&self, label: &str) -> Option<&BTreeSet<String>> {
        self.labels.get(&normalize(label))
    }

    pub fn stats(&self) -> KbStats {
        KbStats {
            triples: self.len(),
            entities: self.entities().len(),
            predicates: self.predicates.len(),
        }
    }
}
