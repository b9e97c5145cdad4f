use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::KbError;
use crate::term::{escape_literal, unescape_literal, Term};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl TriplePattern {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Self {
        TriplePattern {
            subject,
            predicate,
            object,
        }
    }

    pub fn terms(&self) -> [&Term; 3] {
        [&self.subject, &self.predicate, &self.object]
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms().into_iter().filter_map(Term::as_variable)
    }

    fn sort_key(&self) -> (String, String, String) {
        (
            self.subject.to_string(),
            self.predicate.to_string(),
            self.object.to_string(),
        )
    }
}

impl fmt::Display for TriplePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// The filters the pipeline emits. Containment compares normalized string
/// forms (see [`Term::string_form`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Filter {
    Contains { var: String, needle: String },
    /// `?var = term || CONTAINS(norm(?var), needle)`
    OrEquals {
        var: String,
        term: Term,
        needle: String,
    },
}

impl Filter {
    pub fn var(&self) -> &str {
        match self {
            Filter::Contains { var, .. } | Filter::OrEquals { var, .. } => var,
        }
    }
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('"');
    escape_literal(text, &mut out);
    out.push('"');
    out
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Filter::Contains { var, needle } => {
                write!(f, "FILTER(CONTAINS(norm(?{var}), {}))", quote(needle))
            }
            Filter::OrEquals { var, term, needle } => write!(
                f,
                "FILTER(?{var} = {term} || CONTAINS(norm(?{var}), {}))",
                quote(needle)
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryForm {
    Select { variables: Vec<String>, distinct: bool },
    Ask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparqlQuery {
    pub form: QueryForm,
    pub patterns: Vec<TriplePattern>,
    pub filters: Vec<Filter>,
    pub limit: Option<usize>,
}

impl SparqlQuery {
    pub fn select_distinct(variable: impl Into<String>, patterns: Vec<TriplePattern>) -> Self {
        SparqlQuery {
            form: QueryForm::Select {
                variables: vec![variable.into()],
                distinct: true,
            },
            patterns,
            filters: Vec::new(),
            limit: None,
        }
    }

    pub fn ask(patterns: Vec<TriplePattern>) -> Self {
        SparqlQuery {
            form: QueryForm::Ask,
            patterns,
            filters: Vec::new(),
            limit: None,
        }
    }

    /// Patterns deduplicated and sorted by their (subject, predicate,
    /// object) text; filters deduplicated and sorted by rendering.
    pub fn canonical(mut self) -> Self {
        let mut seen = BTreeSet::new();
        self.patterns.retain(|p| seen.insert(p.clone()));
        self.patterns.sort_by_cached_key(TriplePattern::sort_key);
        let mut seen = BTreeSet::new();
        self.filters.retain(|f| seen.insert(f.clone()));
        self.filters.sort_by_cached_key(ToString::to_string);
        self
    }

    pub fn pattern_variables(&self) -> BTreeSet<&str> {
        self.patterns.iter().flat_map(TriplePattern::variables).collect()
    }

    /// Checks that projected and filtered variables are bound by a pattern.
    pub fn validate(&self) -> Result<(), KbError> {
        let bound = self.pattern_variables();
        if let QueryForm::Select { variables, .. } = &self.form {
            if variables.is_empty() {
                return Err(KbError::InvalidQuery("empty projection".into()));
            }
            if let Some(v) = variables.iter().find(|v| !bound.contains(v.as_str())) {
                return Err(KbError::InvalidQuery(format!(
                    "projected variable ?{v} occurs in no pattern"
                )));
            }
        }
        if let Some(f) = self.filters.iter().find(|f| !bound.contains(f.var())) {
            return Err(KbError::InvalidQuery(format!(
                "filtered variable ?{} occurs in no pattern",
                f.var()
            )));
        }
        Ok(())
    }

    /// Canonical text: header line, one pattern per line in sorted order,
    /// then filters, the closing brace, and an optional `LIMIT`.
    pub fn render(&self) -> String {
        let canonical = self.clone().canonical();
        canonical.to_string()
    }
}

impl fmt::Display for SparqlQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.form {
            QueryForm::Select {
                variables,
                distinct,
            } => {
                f.write_str("SELECT ")?;
                if *distinct {
                    f.write_str("DISTINCT ")?;
                }
                for v in variables {
                    write!(f, "?{v} ")?;
                }
                f.write_str("WHERE {\n")?;
            }
            QueryForm::Ask => f.write_str("ASK WHERE {\n")?,
        }
        for pattern in &self.patterns {
            writeln!(f, "{pattern}")?;
        }
        for filter in &self.filters {
            writeln!(f, "{filter}")?;
        }
        f.write_str("}")?;
        if let Some(limit) = self.limit {
            write!(f, "\nLIMIT {limit}")?;
        }
        Ok(())
    }
}

impl FromStr for SparqlQuery {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let tokens = tokenize(s)?;
        Parser { tokens, pos: 0 }.query()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Iri(String),
    Var(String),
    Literal(String),
    Number(usize),
    Punct(&'static str),
}

const UNSUPPORTED: &[&str] = &[
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "ORDER", "GROUP",
    "HAVING", "OFFSET", "PREFIX", "BASE", "CONSTRUCT", "DESCRIBE", "FROM", "REDUCED", "INSERT",
    "DELETE", "REGEX", "NOT", "EXISTS",
];

fn syntax(message: impl Into<String>) -> KbError {
    KbError::Parse {
        line: 0,
        message: message.into(),
    }
}

fn tokenize(input: &str) -> Result<Vec<Tok>, KbError> {
    let mut tokens = Vec::new();
    let mut rest = input;
    loop {
        rest = rest.trim_start();
        let Some(c) = rest.chars().next() else {
            break;
        };
        match c {
            '<' => {
                let end = rest.find('>').ok_or_else(|| syntax("unterminated IRI"))?;
                tokens.push(Tok::Iri(rest[1..end].to_string()));
                rest = &rest[end + 1..];
            }
            '"' => {
                let (text, used) =
                    unescape_literal(&rest[1..]).ok_or_else(|| syntax("malformed string"))?;
                tokens.push(Tok::Literal(text));
                rest = &rest[1 + used..];
            }
            '?' | '$' => {
                let body = &rest[1..];
                let end = body
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .unwrap_or(body.len());
                if end == 0 {
                    if c == '?' && tokens.last() == Some(&Tok::Word("SELECT".into())) {
                        return Err(KbError::UnsupportedFeature("SELECT *".into()));
                    }
                    return Err(syntax("empty variable name"));
                }
                tokens.push(Tok::Var(body[..end].to_string()));
                rest = &body[end..];
            }
            '|' if rest.starts_with("||") => {
                tokens.push(Tok::Punct("||"));
                rest = &rest[2..];
            }
            '{' | '}' | '.' | '(' | ')' | ',' | '=' => {
                let punct = match c {
                    '{' => "{",
                    '}' => "}",
                    '.' => ".",
                    '(' => "(",
                    ')' => ")",
                    ',' => ",",
                    _ => "=",
                };
                tokens.push(Tok::Punct(punct));
                rest = &rest[1..];
            }
            '*' => return Err(KbError::UnsupportedFeature("SELECT *".into())),
            c if c.is_ascii_digit() => {
                let end = rest
                    .find(|c: char| !c.is_ascii_digit())
                    .unwrap_or(rest.len());
                let n = rest[..end]
                    .parse()
                    .map_err(|_| syntax("number out of range"))?;
                tokens.push(Tok::Number(n));
                rest = &rest[end..];
            }
            c if c.is_ascii_alphabetic() => {
                let end = rest
                    .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
                    .unwrap_or(rest.len());
                let word = rest[..end].to_ascii_uppercase();
                if UNSUPPORTED.contains(&word.as_str()) {
                    return Err(KbError::UnsupportedFeature(word));
                }
                if rest[end..].starts_with(':') {
                    return Err(KbError::UnsupportedFeature("prefixed names".into()));
                }
                tokens.push(Tok::Word(word));
                rest = &rest[end..];
            }
            other => return Err(syntax(format!("unexpected character {other:?}"))),
        }
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Tok> {
        let tok = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        tok
    }

    fn is_word(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w == word)
    }

    fn expect_punct(&mut self, punct: &str) -> Result<(), KbError> {
        match self.next() {
            Some(Tok::Punct(p)) if p == punct => Ok(()),
            other => Err(syntax(format!("expected {punct:?}, found {other:?}"))),
        }
    }

    fn expect_word(&mut self, word: &str) -> Result<(), KbError> {
        match self.next() {
            Some(Tok::Word(w)) if w == word => Ok(()),
            Some(Tok::Word(w)) => Err(KbError::UnsupportedFeature(w)),
            other => Err(syntax(format!("expected {word}, found {other:?}"))),
        }
    }

    fn query(mut self) -> Result<SparqlQuery, KbError> {
        let form = match self.next() {
            Some(Tok::Word(w)) if w == "SELECT" => {
                let distinct = self.is_word("DISTINCT");
                if distinct {
                    self.pos += 1;
                }
                let mut variables = Vec::new();
                while let Some(Tok::Var(v)) = self.peek() {
                    variables.push(v.clone());
                    self.pos += 1;
                }
                if variables.is_empty() {
                    return Err(syntax("SELECT without variables"));
                }
                QueryForm::Select {
                    variables,
                    distinct,
                }
            }
            Some(Tok::Word(w)) if w == "ASK" => QueryForm::Ask,
            Some(Tok::Word(w)) => return Err(KbError::UnsupportedFeature(w)),
            other => return Err(syntax(format!("expected SELECT or ASK, found {other:?}"))),
        };
        if self.is_word("WHERE") {
            self.pos += 1;
        }
        self.expect_punct("{")?;
        let mut patterns = Vec::new();
        let mut filters = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Punct("}")) => {
                    self.pos += 1;
                    break;
                }
                Some(Tok::Punct(".")) => {
                    self.pos += 1;
                }
                Some(Tok::Word(w)) if w == "FILTER" => {
                    self.pos += 1;
                    filters.push(self.filter()?);
                }
                Some(Tok::Word(w)) => return Err(KbError::UnsupportedFeature(w.clone())),
                Some(Tok::Punct("{")) => {
                    return Err(KbError::UnsupportedFeature("nested group".into()))
                }
                Some(_) => {
                    let subject = self.term()?;
                    let predicate = self.term()?;
                    let object = self.term()?;
                    patterns.push(TriplePattern::new(subject, predicate, object));
                    match self.peek() {
                        Some(Tok::Punct(".")) | Some(Tok::Punct("}")) => {}
                        Some(Tok::Word(w)) if w == "FILTER" => {}
                        other => {
                            return Err(syntax(format!("expected '.' after pattern, found {other:?}")))
                        }
                    }
                }
                None => return Err(syntax("unterminated group")),
            }
        }
        let mut limit = None;
        if self.is_word("LIMIT") {
            self.pos += 1;
            match self.next() {
                Some(Tok::Number(n)) => limit = Some(n),
                other => return Err(syntax(format!("expected number after LIMIT, found {other:?}"))),
            }
        }
        match self.next() {
            None => {}
            Some(Tok::Word(w)) => return Err(KbError::UnsupportedFeature(w)),
            Some(other) => return Err(syntax(format!("trailing input {other:?}"))),
        }
        Ok(SparqlQuery {
            form,
            patterns,
            filters,
            limit,
        })
    }

    fn term(&mut self) -> Result<Term, KbError> {
        match self.next() {
            Some(Tok::Iri(iri)) => Term::iri(iri).map_err(|e| syntax(e.to_string())),
            Some(Tok::Var(v)) => Term::variable(v).map_err(|e| syntax(e.to_string())),
            Some(Tok::Literal(text)) => Ok(Term::Literal(text)),
            Some(Tok::Word(w)) if w == "A" => Err(KbError::UnsupportedFeature("'a' shorthand".into())),
            other => Err(syntax(format!("expected term, found {other:?}"))),
        }
    }

    fn var(&mut self) -> Result<String, KbError> {
        match self.next() {
            Some(Tok::Var(v)) => Ok(v),
            other => Err(syntax(format!("expected variable, found {other:?}"))),
        }
    }

    fn filter(&mut self) -> Result<Filter, KbError> {
        self.expect_punct("(")?;
        let filter = if self.is_word("CONTAINS") {
            let (var, needle) = self.contains()?;
            Filter::Contains { var, needle }
        } else {
            let var = self.var()?;
            self.expect_punct("=")?;
            let term = self.term()?;
            self.expect_punct("||")?;
            let (other, needle) = self.contains()?;
            if other != var {
                return Err(KbError::UnsupportedFeature(
                    "disjunction over different variables".into(),
                ));
            }
            Filter::OrEquals { var, term, needle }
        };
        self.expect_punct(")")?;
        Ok(filter)
    }

    fn contains(&mut self) -> Result<(String, String), KbError> {
        self.expect_word("CONTAINS")?;
        self.expect_punct("(")?;
        let var = if self.is_word("NORM") {
            self.pos += 1;
            self.expect_punct("(")?;
            let v = self.var()?;
            self.expect_punct(")")?;
            v
        } else {
            self.var()?
        };
        self.expect_punct(",")?;
        let needle = match self.next() {
            Some(Tok::Literal(text)) => text,
            other => return Err(syntax(format!("expected string, found {other:?}"))),
        };
        self.expect_punct(")")?;
        Ok((var, needle))
    }
}

/// Solutions of a query: one binding per column per row for `SELECT`,
/// `truth` for `ASK`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<bool>,
}

impl ResultSet {
    /// True when a `SELECT` returned no rows or an `ASK` returned false.
    pub fn is_empty(&self) -> bool {
        match self.truth {
            Some(truth) => !truth,
            None => self.rows.is_empty(),
        }
    }

    pub fn row_set(&self) -> BTreeSet<Vec<Term>> {
        self.rows.iter().cloned().collect()
    }
}
