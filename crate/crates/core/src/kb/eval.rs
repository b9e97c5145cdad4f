use std::collections::{HashMap, HashSet};
use std::ops::ControlFlow;

use super::sparql::{Filter, QueryForm, ResultSet, SparqlQuery};
use super::store::{TermId, TripleStore};
use super::KbError;
use crate::term::Term;
use crate::text::normalize;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Const(TermId),
    Var(usize),
}

struct Compiled {
    patterns: Vec<[Slot; 3]>,
    /// Filters indexed by the variable slot they constrain.
    filters: Vec<Vec<Filter>>,
    names: Vec<String>,
}

/// True iff `term` satisfies `filter` (variable already substituted).
pub(crate) fn filter_holds(filter: &Filter, term: &Term) -> bool {
    match filter {
        Filter::Contains { needle, .. } => contains(term, needle),
        Filter::OrEquals {
            term: expected,
            needle,
            ..
        } => term == expected || contains(term, needle),
    }
}

fn contains(term: &Term, needle: &str) -> bool {
    normalize(term.string_form()).contains(&normalize(needle))
}

/// Evaluates a query of the supported subset against `store`.
///
/// Solutions of the basic graph pattern are enumerated by an index nested
/// loop join that always extends the pattern with the most bound positions.
pub fn execute(store: &TripleStore, query: &SparqlQuery) -> Result<ResultSet, KbError> {
    query.validate()?;
    let (columns, distinct) = match &query.form {
        QueryForm::Select {
            variables,
            distinct,
        } => (variables.clone(), *distinct),
        QueryForm::Ask => (Vec::new(), true),
    };
    let ask = matches!(query.form, QueryForm::Ask);
    let Some(compiled) = compile(store, query) else {
        // A constant absent from the store: no solutions.
        return Ok(empty_result(columns, ask));
    };
    let column_slots: Vec<usize> = columns
        .iter()
        .map(|c| compiled.names.iter().position(|n| n == c).expect("validated"))
        .collect();

    let mut rows: Vec<Vec<Term>> = Vec::new();
    let mut seen: HashSet<Vec<TermId>> = HashSet::new();
    let mut found = false;
    let limit = query.limit;
    if limit == Some(0) {
        return Ok(empty_result(columns, ask));
    }
    let mut bindings = vec![None; compiled.names.len()];
    let mut done = vec![false; compiled.patterns.len()];
    let _ = join(store, &compiled, &mut bindings, &mut done, &mut |bindings| {
        found = true;
        if ask {
            return ControlFlow::Break(());
        }
        let ids: Vec<TermId> = column_slots
            .iter()
            .map(|&slot| bindings[slot].expect("all pattern variables bound"))
            .collect();
        if distinct && !seen.insert(ids.clone()) {
            return ControlFlow::Continue(());
        }
        rows.push(ids.iter().map(|&id| store.term(id).clone()).collect());
        if limit.is_some_and(|l| rows.len() >= l) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    });
    Ok(if ask {
        ResultSet {
            columns,
            rows: Vec::new(),
            truth: Some(found),
        }
    } else {
        ResultSet {
            columns,
            rows,
            truth: None,
        }
    })
}

fn empty_result(columns: Vec<String>, ask: bool) -> ResultSet {
    ResultSet {
        columns: if ask { Vec::new() } else { columns },
        rows: Vec::new(),
        truth: ask.then_some(false),
    }
}

fn compile(store: &TripleStore, query: &SparqlQuery) -> Option<Compiled> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut patterns = Vec::with_capacity(query.patterns.len());
    for pattern in &query.patterns {
        let mut slots = [Slot::Var(0); 3];
        for (slot, term) in slots.iter_mut().zip(pattern.terms()) {
            *slot = match term {
                Term::Variable(name) => {
                    let next = names.len();
                    let i = *index.entry(name.as_str()).or_insert(next);
                    if i == next {
                        names.push(name.clone());
                    }
                    Slot::Var(i)
                }
                constant => Slot::Const(store.id_of(constant)?),
            };
        }
        patterns.push(slots);
    }
    let mut filters = vec![Vec::new(); names.len()];
    for filter in &query.filters {
        filters[index[filter.var()]].push(filter.clone());
    }
    Some(Compiled {
        patterns,
        filters,
        names,
    })
}

fn resolve(slot: Slot, bindings: &[Option<TermId>]) -> Option<TermId> {
    match slot {
        Slot::Const(id) => Some(id),
        Slot::Var(i) => bindings[i],
    }
}

fn join(
    store: &TripleStore,
    compiled: &Compiled,
    bindings: &mut Vec<Option<TermId>>,
    done: &mut Vec<bool>,
    emit: &mut dyn FnMut(&[Option<TermId>]) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let next = (0..compiled.patterns.len())
        .filter(|&i| !done[i])
        .max_by_key(|&i| {
            let bound = compiled.patterns[i]
                .iter()
                .filter(|&&slot| resolve(slot, bindings).is_some())
                .count();
            (bound, std::cmp::Reverse(i))
        });
    let Some(next) = next else {
        return emit(bindings);
    };
    let pattern = compiled.patterns[next];
    let [s, p, o] = pattern.map(|slot| resolve(slot, bindings));
    done[next] = true;
    for (ts, tp, to) in store.scan_ids(s, p, o) {
        let mut newly_bound: Vec<usize> = Vec::new();
        let mut consistent = true;
        for (slot, value) in pattern.iter().zip([ts, tp, to]) {
            if let Slot::Var(i) = *slot {
                match bindings[i] {
                    Some(existing) if existing != value => {
                        consistent = false;
                        break;
                    }
                    Some(_) => {}
                    None => {
                        bindings[i] = Some(value);
                        newly_bound.push(i);
                    }
                }
            }
        }
        if consistent {
            consistent = newly_bound.iter().all(|&i| {
                let term = store.term(bindings[i].expect("just bound"));
                compiled.filters[i].iter().all(|f| filter_holds(f, term))
            });
        }
        let flow = if consistent {
            join(store, compiled, bindings, done, emit)
        } else {
            ControlFlow::Continue(())
        };
        for i in newly_bound {
            bindings[i] = None;
        }
        if flow.is_break() {
            done[next] = false;
            return flow;
        }
    }
    done[next] = false;
    ControlFlow::Continue(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::{load_triples, TripleFormat, TriplePattern};

    const FILMS: &str = "The_Matrix\ttype\tfilm
John_Wick\ttype\tfilm
Speed\ttype\tfilm
The_Matrix\tstarring\tKeanu_Reeves
John_Wick\tstarring\tKeanu_Reeves
The_Matrix\tlength\t\"136\"
John_Wick\tlength\t\"101\"
Speed\tlength\t\"116\"
";

    fn store() -> TripleStore {
        load_triples(FILMS.as_bytes(), TripleFormat::Tsv, "films", "type").unwrap()
    }

    fn lit_rows(rs: &ResultSet) -> Vec<String> {
        let mut out: Vec<String> = rs
            .rows
            .iter()
            .map(|r| r[0].string_form().to_string())
            .collect();
        out.sort();
        out
    }

    #[test]
    fn keanu_film_lengths() {
        let q: SparqlQuery = "SELECT DISTINCT ?x { ?f <type> <film> . ?f <starring> <Keanu_Reeves> . ?f <length> ?x }"
            .parse()
            .unwrap();
        let rs = execute(&store(), &q).unwrap();
        assert_eq!(lit_rows(&rs), vec!["101", "136"]);
        assert_eq!(rs.columns, vec!["x"]);
    }

    #[test]
    fn ask_and_empty_join() {
        let q: SparqlQuery = "ASK { ?f <starring> <Speed> }".parse().unwrap();
        assert_eq!(execute(&store(), &q).unwrap().truth, Some(false));
        let q: SparqlQuery = "ASK { ?f <starring> <Nobody> }".parse().unwrap();
        assert_eq!(execute(&store(), &q).unwrap().truth, Some(false));
        let q: SparqlQuery = "ASK { <Speed> <type> ?c }".parse().unwrap();
        assert_eq!(execute(&store(), &q).unwrap().truth, Some(true));
    }

    #[test]
    fn full_scan_and_limit() {
        let q: SparqlQuery = "SELECT ?s { ?s ?p ?o }".parse().unwrap();
        assert_eq!(execute(&store(), &q).unwrap().rows.len(), 8);
        let q: SparqlQuery = "SELECT DISTINCT ?s { ?s ?p ?o }".parse().unwrap();
        assert_eq!(execute(&store(), &q).unwrap().rows.len(), 3);
        let q: SparqlQuery = "SELECT DISTINCT ?s { ?s ?p ?o } LIMIT 2".parse().unwrap();
        assert_eq!(execute(&store(), &q).unwrap().rows.len(), 2);
        let q: SparqlQuery = "SELECT ?s { ?s ?p ?o } LIMIT 0".parse().unwrap();
        assert!(execute(&store(), &q).unwrap().rows.is_empty());
    }

    #[test]
    fn repeated_variable_in_pattern() {
        let store = load_triples(
            "a\tp\ta\na\tp\tb\n".as_bytes(),
            TripleFormat::Tsv,
            "d",
            "type",
        )
        .unwrap();
        let q: SparqlQuery = "SELECT ?x { ?x <p> ?x }".parse().unwrap();
        let rs = execute(&store, &q).unwrap();
        assert_eq!(rs.rows, vec![vec![Term::Iri("a".into())]]);
    }

    #[test]
    fn containment_filters() {
        let q = SparqlQuery {
            filters: vec![Filter::OrEquals {
                var: "r0".into(),
                term: Term::Iri("Keanu_Reevs".into()),
                needle: "Keanu Reeves".into(),
            }],
            ..SparqlQuery::select_distinct(
                "f",
                vec![TriplePattern::new(
                    Term::Variable("f".into()),
                    Term::Iri("starring".into()),
                    Term::Variable("r0".into()),
                )],
            )
        };
        let rs = execute(&store(), &q).unwrap();
        assert_eq!(rs.rows.len(), 2);
        let q: SparqlQuery = "SELECT ?x { ?f <length> ?x FILTER(CONTAINS(norm(?x), \"13\")) }"
            .parse()
            .unwrap();
        assert_eq!(lit_rows(&execute(&store(), &q).unwrap()), vec!["136"]);
    }

    #[test]
    fn invalid_projection() {
        let q = SparqlQuery::select_distinct("nope", vec![]);
        assert!(matches!(execute(&store(), &q), Err(KbError::InvalidQuery(_))));
    }
}
