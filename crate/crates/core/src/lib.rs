//! Semantic-parsing question answering over pluggable knowledge bases.
//!
//! The pipeline turns a natural-language question into ranked SPARQL queries:
//! node extraction links mentions to the knowledge base, the query-graph
//! builder connects them along the semantic structure of the question,
//! relation extraction attaches candidate predicates to every edge, and the
//! subgraph matcher grounds the graph and renders the queries. Answers are
//! collected progressively: exact execution first, then a relaxed rewrite,
//! then an optional LLM fallback.

pub mod answer;
pub mod extract;
pub mod graph;
pub mod kb;
pub mod matcher;
pub mod relation;
pub mod structure;
pub mod term;
pub mod text;

pub use answer::{
    build_llm_prompt, rewrite_approximate, Answer, HttpLlmClient, LlmClient, LlmConfig, LlmError,
    Pipeline, PipelineConfig, PipelineError, PipelineTrace, PromptError, PromptTemplate, Stage,
    StageAttempt,
};
pub use extract::{
    extract_nodes, AliasTable, Lexicon, LexiconExtractor, Link, MentionCandidate, MentionKind,
    NodeExtractor, ServiceError,
};
pub use graph::{build_query_graph, select_target, GraphError, QueryEdge, QueryGraph, QueryNode};
pub use kb::{
    execute, load_triples, Filter, KbError, KbStats, QueryForm, ResultSet, SparqlQuery, TripleFormat,
    TriplePattern, TripleStore,
};
pub use matcher::{
    CandidateQuery, EdgeBinding, GroundedGraph, MatchConfig, MatchError, Matcher, NodeBinding,
};
pub use relation::{
    extract_relations, DictionaryRelationExtractor, PredicateAliases, PredicateCandidate,
    PredicateDictionary, RelationExtractor,
};
pub use structure::{ParseBank, SemanticStructure, StructureError, Token};
pub use term::{Term, TermError, Triple};
pub use text::{normalize, similarity};
