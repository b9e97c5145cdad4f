//! Per-dataset in-memory triple store and the SPARQL subset the pipeline
//! emits: basic graph patterns, `DISTINCT`, `LIMIT`, and containment /
//! equality filters.

mod eval;
mod ingest;
mod sparql;
mod store;

use thiserror::Error;

pub use eval::execute;
pub use ingest::{load_triples, parse_triple_line, TripleFormat};
pub use sparql::{Filter, QueryForm, ResultSet, SparqlQuery, TriplePattern};
pub use store::{KbStats, StoreBuilder, TripleStore};

#[derive(Debug, Error)]
pub enum KbError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset {0:?} contains no triples")]
    EmptyDataset(String),
    #[error("unsupported query feature: {0}")]
    UnsupportedFeature(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
