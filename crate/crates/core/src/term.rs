use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TermError {
    #[error("invalid IRI {0:?}")]
    InvalidIri(String),
    #[error("invalid variable name {0:?}")]
    InvalidVariable(String),
    #[error("cannot parse term {0:?}")]
    Syntax(String),
}

/// A node of the fact base or of a query pattern.
///
/// `Variable` never occurs in stored triples.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Iri(String),
    Literal(String),
    Variable(String),
}

impl Term {
    pub fn iri(text: impl Into<String>) -> Result<Self, TermError> {
        let text = text.into();
        if is_valid_iri(&text) {
            Ok(Term::Iri(text))
        } else {
            Err(TermError::InvalidIri(text))
        }
    }

    pub fn literal(lexical: impl Into<String>) -> Self {
        Term::Literal(lexical.into())
    }

    pub fn variable(name: impl Into<String>) -> Result<Self, TermError> {
        let name = name.into();
        if is_valid_variable(&name) {
            Ok(Term::Variable(name))
        } else {
            Err(TermError::InvalidVariable(name))
        }
    }

    pub fn is_iri(&self) -> bool {
        matches!(self, Term::Iri(_))
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, Term::Variable(_))
    }

    pub fn is_literal(&self) -> bool {
        matches!(self, Term::Literal(_))
    }

    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(iri) => Some(iri),
            _ => None,
        }
    }

    pub fn as_variable(&self) -> Option<&str> {
        match self {
            Term::Variable(name) => Some(name),
            _ => None,
        }
    }

    /// Text used by containment filters: the local name of an IRI, the
    /// lexical form of a literal.
    pub fn string_form(&self) -> &str {
        match self {
            Term::Iri(iri) => local_name(iri),
            Term::Literal(lexical) => lexical,
            Term::Variable(name) => name,
        }
    }
}

/// Last non-empty segment of an IRI after `/`, `#` or `:`.
pub fn local_name(iri: &str) -> &str {
    iri.rsplit(['/', '#', ':'])
        .find(|segment| !segment.is_empty())
        .unwrap_or(iri)
}

pub fn is_valid_iri(text: &str) -> bool {
    !text.is_empty()
        && !text
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '<' | '>' | '"'))
}

pub fn is_valid_variable(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn escape_literal(lexical: &str, out: &mut String) {
    for c in lexical.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
}

/// Reads a quoted literal body starting right after the opening quote.
/// Returns the unescaped text and the byte length consumed, closing quote
/// included.
pub(crate) fn unescape_literal(input: &str) -> Option<(String, usize)> {
    let mut out = String::new();
    let mut chars = input.char_indices();
    while let Some((i, c)) = chars.next() {
        match c {
            '"' => return Some((out, i + 1)),
            '\\' => {
                let (_, esc) = chars.next()?;
                match esc {
                    '"' => out.push('"'),
                    '\\' => out.push('\\'),
                    '\'' => out.push('\''),
                    'n' => out.push('\n'),
                    'r' => out.push('\r'),
                    't' => out.push('\t'),
                    'u' | 'U' => {
                        let width = if esc == 'u' { 4 } else { 8 };
                        let mut code = String::with_capacity(width);
                        for _ in 0..width {
                            code.push(chars.next()?.1);
                        }
                        let value = u32::from_str_radix(&code, 16).ok()?;
                        out.push(char::from_u32(value)?);
                    }
                    _ => return None,
                }
            }
            c => out.push(c),
        }
    }
    None
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(iri) => write!(f, "<{iri}>"),
            Term::Literal(lexical) => {
                let mut out = String::with_capacity(lexical.len() + 2);
                out.push('"');
                escape_literal(lexical, &mut out);
                out.push('"');
                f.write_str(&out)
            }
            Term::Variable(name) => write!(f, "?{name}"),
        }
    }
}

impl FromStr for Term {
    type Err = TermError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(rest) = s.strip_prefix('<') {
            let iri = rest
                .strip_suffix('>')
                .ok_or_else(|| TermError::Syntax(s.to_string()))?;
            Term::iri(iri)
        } else if let Some(rest) = s.strip_prefix('"') {
            match unescape_literal(rest) {
                Some((lexical, used)) if used == rest.len() => Ok(Term::Literal(lexical)),
                _ => Err(TermError::Syntax(s.to_string())),
            }
        } else if let Some(name) = s.strip_prefix('?') {
            Term::variable(name)
        } else {
            Err(TermError::Syntax(s.to_string()))
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Term {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// A stored fact. Subject and predicate are IRIs; the object is an IRI or a
/// literal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl Triple {
    pub fn new(subject: Term, predicate: Term, object: Term) -> Result<Self, TermError> {
        if !subject.is_iri() {
            return Err(TermError::InvalidIri(subject.to_string()));
        }
        if !predicate.is_iri() {
            return Err(TermError::InvalidIri(predicate.to_string()));
        }
        if object.is_variable() {
            return Err(TermError::Syntax(object.to_string()));
        }
        Ok(Triple {
            subject,
            predicate,
            object,
        })
    }
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}
