use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::store::{StoreBuilder, TripleStore};
use super::KbError;
use crate::term::{unescape_literal, Term, Triple};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TripleFormat {
    NTriples,
    Tsv,
}

impl FromStr for TripleFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nt" | "ntriples" | "n-triples" => Ok(TripleFormat::NTriples),
            "tsv" => Ok(TripleFormat::Tsv),
            other => Err(format!("unknown triple format {other:?}")),
        }
    }
}

/// Reads every triple of `source` into a new store. Duplicate lines collapse.
pub fn load_triples(
    source: impl BufRead,
    format: TripleFormat,
    dataset_id: &str,
    type_predicate: &str,
) -> Result<TripleStore, KbError> {
    let mut builder = StoreBuilder::new(dataset_id, type_predicate);
    for (index, line) in source.lines().enumerate() {
        let line = line?;
        if let Some(triple) = parse_triple_line(&line, format).map_err(|message| KbError::Parse {
            line: index + 1,
            message,
        })? {
            builder.insert(triple);
        }
    }
    builder.build()
}

/// Parses one line; blank lines and `#` comments yield `None`.
pub fn parse_triple_line(line: &str, format: TripleFormat) -> Result<Option<Triple>, String> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return Ok(None);
    }
    match format {
        TripleFormat::NTriples => parse_ntriples(trimmed).map(Some),
        TripleFormat::Tsv => parse_tsv(line.trim_end_matches(['\r', '\n'])).map(Some),
    }
}

fn parse_ntriples(line: &str) -> Result<Triple, String> {
    let mut rest = line;
    let subject = read_nt_term(&mut rest)?;
    let predicate = read_nt_term(&mut rest)?;
    let object = read_nt_term(&mut rest)?;
    let tail = rest.trim();
    if tail != "." {
        return Err(format!("expected terminating '.', found {tail:?}"));
    }
    Triple::new(subject, predicate, object).map_err(|e| e.to_string())
}

fn read_nt_term(rest: &mut &str) -> Result<Term, String> {
    let input = rest.trim_start();
    if let Some(body) = input.strip_prefix('<') {
        let end = body.find('>').ok_or("unterminated IRI")?;
        let term = Term::iri(&body[..end]).map_err(|e| e.to_string())?;
        *rest = &body[end + 1..];
        Ok(term)
    } else if let Some(body) = input.strip_prefix('"') {
        let (lexical, used) = unescape_literal(body).ok_or("malformed literal")?;
        let mut after = &body[used..];
        // Datatypes and language tags are dropped; comparison is lexical.
        if let Some(tag) = after.strip_prefix('@') {
            let end = tag
                .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
                .unwrap_or(tag.len());
            after = &tag[end..];
        } else if let Some(datatype) = after.strip_prefix("^^<") {
            let end = datatype.find('>').ok_or("unterminated datatype IRI")?;
            after = &datatype[end + 1..];
        }
        *rest = after;
        Ok(Term::Literal(lexical))
    } else if input.starts_with("_:") {
        Err("blank nodes are not supported".to_string())
    } else {
        Err(format!("unexpected token at {:?}", truncate(input)))
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(24) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn parse_tsv(line: &str) -> Result<Triple, String> {
    let columns: Vec<&str> = line.split('\t').collect();
    if columns.len() != 3 {
        return Err(format!("expected 3 tab-separated columns, found {}", columns.len()));
    }
    let subject = tsv_iri(columns[0])?;
    let predicate = tsv_iri(columns[1])?;
    let object_text = columns[2].trim();
    let object = if let Some(body) = object_text.strip_prefix('"') {
        match unescape_literal(body) {
            Some((lexical, used)) if used == body.len() => Term::Literal(lexical),
            _ => return Err(format!("malformed literal {object_text:?}")),
        }
    } else {
        tsv_iri(object_text)?
    };
    Triple::new(subject, predicate, object).map_err(|e| e.to_string())
}

fn tsv_iri(text: &str) -> Result<Term, String> {
    let text = text.trim();
    let bare = text
        .strip_prefix('<')
        .and_then(|t| t.strip_suffix('>'))
        .unwrap_or(text);
    Term::iri(bare).map_err(|e| e.to_string())
}
