//! Progressive answer collection: exact execution of the candidate queries,
//! then their relaxed rewrites, then an LLM fallback whose text is always
//! reported as unverified.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{MentionCandidate, NodeExtractor, ServiceError};
use crate::graph::{build_query_graph, GraphError, QueryGraph};
use crate::kb::{execute, Filter, KbError, ResultSet, SparqlQuery, TriplePattern, TripleStore};
use crate::matcher::{CandidateQuery, MatchConfig, MatchError, Matcher, NodeBinding};
use crate::relation::RelationExtractor;
use crate::structure::{ParseBank, SemanticStructure, StructureError};
use crate::term::Term;
use crate::text::normalize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Stage {
    Exact,
    Approximate,
    Llm,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Exact => "Exact",
            Stage::Approximate => "Approximate",
            Stage::Llm => "Llm",
        })
    }
}

/// Relaxes the fuzzily linked terms and all literals of a candidate query.
///
/// Each such term is replaced by a fresh variable `?rN` constrained by
/// `?rN = term || CONTAINS(norm(?rN), surface)`, so every solution of the
/// original query stays a solution of the rewrite.
pub fn rewrite_approximate(candidate: &CandidateQuery) -> SparqlQuery {
    let mut relax: Vec<(Term, String)> = Vec::new();
    let mut push = |term: Term, needle: String| {
        if !relax.iter().any(|(t, _)| *t == term) {
            relax.push((term, needle));
        }
    };
    for node in &candidate.grounded.nodes {
        let surface = normalize(&node.surface);
        match &node.binding {
            NodeBinding::Entity { iri, score } if *score < 1.0 => {
                push(Term::Iri(iri.clone()), surface)
            }
            NodeBinding::Class { class, score, .. } if *score < 1.0 => {
                push(Term::Iri(class.clone()), surface)
            }
            NodeBinding::Member {
                iri,
                class,
                link_score,
            } if *link_score < 1.0 => {
                push(Term::Iri(iri.clone()), surface.clone());
                push(Term::Iri(class.clone()), surface);
            }
            NodeBinding::Literal { value } => push(Term::Literal(value.clone()), normalize(value)),
            _ => {}
        }
    }
    let mut query = candidate.sparql.clone();
    let mut filters = Vec::new();
    let mut fresh = 0;
    for (term, needle) in relax {
        let used = query
            .patterns
            .iter()
            .any(|p| p.subject == term || p.object == term);
        if !used {
            continue;
        }
        let var = format!("r{fresh}");
        fresh += 1;
        let replacement = Term::Variable(var.clone());
        let swap = |t: &Term| if *t == term { replacement.clone() } else { t.clone() };
        query.patterns = query
            .patterns
            .iter()
            .map(|p| TriplePattern::new(swap(&p.subject), p.predicate.clone(), swap(&p.object)))
            .collect();
        filters.push(Filter::OrEquals { var, term, needle });
    }
    if filters.is_empty() {
        return candidate.sparql.clone();
    }
    query.filters.extend(filters);
    query.canonical()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("unterminated placeholder at byte {0}")]
    Unterminated(usize),
}

pub const PLACEHOLDERS: [&str; 4] = ["question", "dataset_name", "entities", "attempted_queries"];

pub const DEFAULT_TEMPLATE: &str = "The knowledge base \"{dataset_name}\" could not answer the question below.
Linked entities: {entities}
Queries tried without result:
{attempted_queries}

Give a helpful open-domain answer to the question. State explicitly that the answer does not come from the knowledge base and may be unreliable.

Question: {question}
";

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Slot(String),
}

/// A prompt with `{name}` placeholders; `{{` and `}}` are literal braces.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pieces: Vec<Piece>,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::parse(DEFAULT_TEMPLATE).expect("default template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self, PromptError> {
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut rest = source;
        let mut offset = 0;
        while let Some(pos) = rest.find(['{', '}']) {
            text.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if tail.starts_with("{{") || tail.starts_with("}}") {
                text.push_str(&tail[..1]);
                rest = &tail[2..];
                offset += pos + 2;
                continue;
            }
            if tail.starts_with('}') {
                // A lone closing brace is kept verbatim.
                text.push('}');
                rest = &tail[1..];
                offset += pos + 1;
                continue;
            }
            let end = tail.find('}').ok_or(PromptError::Unterminated(offset + pos))?;
            let name = &tail[1..end];
            if !PLACEHOLDERS.contains(&name) {
                return Err(PromptError::UnknownPlaceholder(name.to_string()));
            }
            if !text.is_empty() {
                pieces.push(Piece::Text(std::mem::take(&mut text)));
            }
            pieces.push(Piece::Slot(name.to_string()));
            rest = &tail[end + 1..];
            offset += pos + end + 1;
        }
        text.push_str(rest);
        if !text.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(PromptTemplate { pieces })
    }

    pub fn render(&self, values: &BTreeMap<&str, String>) -> String {
        let mut out = String::new();
        for piece in &self.pieces {
            match piece {
                Piece::Text(text) => out.push_str(text),
                Piece::Slot(name) => out.push_str(values.get(name.as_str()).map_or("", String::as_str)),
            }
        }
        out
    }
}

/// Fills the template from the intermediate results recorded in `trace`.
pub fn build_llm_prompt(question: &str, trace: &PipelineTrace, template: &PromptTemplate) -> String {
    let entities: Vec<String> = trace
        .mentions
        .iter()
        .filter_map(|m| {
            m.links
                .first()
                .map(|l| format!("{} -> <{}> ({:.2})", m.surface, l.iri, l.score))
        })
        .collect();
    let attempted: Vec<&str> = trace.attempts.iter().map(|a| a.query.as_str()).collect();
    let values = BTreeMap::from([
        ("question", question.to_string()),
        ("dataset_name", trace.dataset_name.clone()),
        (
            "entities",
            if entities.is_empty() {
                "none".to_string()
            } else {
                entities.join("; ")
            },
        ),
        (
            "attempted_queries",
            if attempted.is_empty() {
                "none".to_string()
            } else {
                attempted.join("\n\n")
            },
        ),
    ]);
    template.render(&values)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("LLM unavailable: {0}")]
    Unavailable(String),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    pub url: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
}

fn default_model() -> String {
    "default".into()
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_retries() -> u32 {
    1
}
fn default_max_concurrent() -> usize {
    4
}

impl LlmConfig {
    pub fn new(url: impl Into<String>) -> Self {
        LlmConfig {
            url: url.into(),
            model: default_model(),
            api_key: None,
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
            max_concurrent: default_max_concurrent(),
        }
    }
}

/// Counting semaphore bounding outbound requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

/// Chat-completion client: posts `{model, messages}` and reads the first
/// choice's message content.
#[derive(Debug)]
pub struct HttpLlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    permits: Permits,
}

impl HttpLlmClient {
    pub fn new(config: LlmConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build();
        HttpLlmClient {
            agent: ureq::Agent::new_with_config(agent_config),
            permits: Permits {
                free: Mutex::new(config.max_concurrent.max(1)),
                released: Condvar::new(),
            },
            config,
        }
    }

    fn attempt(&self, prompt: &str) -> Result<String, LlmError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut request = self.agent.post(&self.config.url);
        if let Some(key) = &self.config.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(&body)
            .map_err(|e| LlmError::Unavailable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(LlmError::Unavailable(format!("status {}", status.as_u16())));
        }
        let value: serde_json::Value = response
            .body_mut()
            .read_json()
            .map_err(|e| LlmError::Unavailable(format!("bad response body: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError::Unavailable("response has no choices[0].message.content".into()))
    }
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let _permit = self.permits.acquire();
        let mut last = LlmError::Unavailable("no attempt made".into());
        for _ in 0..=self.config.retries {
            match self.attempt(prompt) {
                Ok(text) => return Ok(text),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub stage: Stage,
    pub rows: ResultSet,
    pub llm_text: Option<String>,
    pub chosen_query: Option<CandidateQuery>,
    /// The query whose rows are returned (the rewrite for Approximate).
    pub executed_query: Option<String>,
    pub verified: bool,
    /// Set when the LLM stage was reached but the LLM could not be used.
    pub llm_unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageAttempt {
    pub stage: Stage,
    /// Index into the trace's candidate list.
    pub candidate: usize,
    pub query: String,
    pub rows: usize,
    /// True for candidates from the lowered-threshold rerun.
    #[serde(default)]
    pub relaxed_rerun: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    pub structure_us: u64,
    pub extraction_us: u64,
    pub graph_us: u64,
    pub relations_us: u64,
    pub matching_us: u64,
    pub answering_us: u64,
    pub total_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question: String,
    pub dataset_id: String,
    pub dataset_name: String,
    pub structure: Option<SemanticStructure>,
    pub mentions: Vec<MentionCandidate>,
    pub graph: Option<QueryGraph>,
    pub graph_with_relations: Option<QueryGraph>,
    /// True when the candidates are verified groundings, false when they
    /// are the unverified fallback.
    pub candidates_verified: bool,
    pub candidates: Vec<CandidateQuery>,
    pub attempts: Vec<StageAttempt>,
    pub prompt: Option<String>,
    pub timings: Timings,
}

impl PipelineTrace {
    fn new(question: &str, pipeline: &Pipeline) -> Self {
        PipelineTrace {
            question: question.to_string(),
            dataset_id: pipeline.dataset_id.clone(),
            dataset_name: pipeline.dataset_name.clone(),
            structure: None,
            mentions: Vec::new(),
            graph: None,
            graph_with_relations: None,
            candidates_verified: false,
            candidates: Vec::new(),
            attempts: Vec::new(),
            prompt: None,
            timings: Timings::default(),
        }
    }

    /// The trace with all timings zeroed, for comparisons.
    pub fn without_timings(&self) -> Self {
        PipelineTrace {
            timings: Timings::default(),
            ..self.clone()
        }
    }

    pub fn attempts_in(&self, stage: Stage) -> impl Iterator<Item = &StageAttempt> {
        self.attempts.iter().filter(move |a| a.stage == stage)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Kb(#[from] KbError),
    /// Nothing answered and no LLM is configured.
    #[error("no query produced an answer and no LLM is configured")]
    NoMatch { trace: Box<PipelineTrace> },
}

impl PipelineError {
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Structure(_) => "PARSE_ERROR",
            PipelineError::Service(_) => "SERVICE_UNAVAILABLE",
            PipelineError::Kb(_) => "QUERY_ERROR",
            PipelineError::NoMatch { .. } => "NO_MATCH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub threshold: f64,
    pub k: usize,
    pub top_m: usize,
    pub member_limit: usize,
    /// When set, stage 2 also reruns extraction and matching at this lower
    /// threshold after the rewrites fail.
    pub relaxed_threshold: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: crate::extract::DEFAULT_THRESHOLD,
            k: crate::matcher::DEFAULT_K,
            top_m: crate::relation::DEFAULT_TOP_M,
            member_limit: crate::matcher::DEFAULT_MEMBER_LIMIT,
            relaxed_threshold: None,
        }
    }
}

/// Everything needed to answer questions over one dataset.
#[derive(Clone)]
pub struct Pipeline {
    pub dataset_id: String,
    pub dataset_name: String,
    pub language: String,
    pub store: Arc<TripleStore>,
    pub ne: Arc<dyn NodeExtractor>,
    pub re: Arc<dyn RelationExtractor>,
    pub parse_bank: Option<Arc<ParseBank>>,
    pub llm: Option<Arc<dyn LlmClient>>,
    pub template: PromptTemplate,
    pub config: PipelineConfig,
}

impl fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Pipeline")
            .field("dataset_id", &self.dataset_id)
            .field("language", &self.language)
            .field("triples", &self.store.len())
            .field("llm", &self.llm.is_some())
            .field("config", &self.config)
            .finish()
    }
}

fn micros(since: Instant) -> u64 {
    since.elapsed().as_micros() as u64
}

impl Pipeline {
    pub fn new(
        store: Arc<TripleStore>,
        ne: Arc<dyn NodeExtractor>,
        re: Arc<dyn RelationExtractor>,
    ) -> Self {
        Pipeline {
            dataset_id: store.dataset_id().to_string(),
            dataset_name: store.dataset_id().to_string(),
            language: "en".into(),
            store,
            ne,
            re,
            parse_bank: None,
            llm: None,
            template: PromptTemplate::default(),
            config: PipelineConfig::default(),
        }
    }

    /// Semantic structure from, in order: an explicit CoNLL-U parse, the
    /// dataset's parse bank, the built-in heuristic parser.
    pub fn structure_for(
        &self,
        question: &str,
        conllu: Option<&str>,
    ) -> Result<SemanticStructure, StructureError> {
        if let Some(source) = conllu {
            return SemanticStructure::from_conllu_for(source, question);
        }
        if let Some(parsed) = self.parse_bank.as_ref().and_then(|b| b.lookup(question)) {
            return Ok(parsed);
        }
        SemanticStructure::parse(question, &self.language)
    }

    /// Mentions → query graph → relations → candidate queries. Returns the
    /// candidates and whether they are verified.
    fn candidates(
        &self,
        question: &str,
        structure: &SemanticStructure,
        threshold: f64,
        trace: &mut PipelineTrace,
    ) -> Result<(Vec<CandidateQuery>, bool), PipelineError> {
        let started = Instant::now();
        let mentions = self.ne.extract(question, structure, &self.language, threshold)?;
        trace.timings.extraction_us += micros(started);
        trace.mentions = mentions.clone();

        let started = Instant::now();
        let graph = match build_query_graph(structure, &mentions) {
            Ok(graph) => graph,
            Err(GraphError::NoNodes) => return Ok((Vec::new(), false)),
            Err(e @ GraphError::UnanchoredMention { .. }) => {
                return Err(ServiceError::Protocol {
                    service: "node extraction".into(),
                    message: e.to_string(),
                }
                .into())
            }
        };
        trace.timings.graph_us += micros(started);
        trace.graph = Some(graph.clone());

        let started = Instant::now();
        let graph = self.re.extract(question, &graph, structure, self.config.top_m)?;
        trace.timings.relations_us += micros(started);
        trace.graph_with_relations = Some(graph.clone());

        let started = Instant::now();
        let matcher = Matcher::new(
            &self.store,
            MatchConfig {
                k: self.config.k,
                member_limit: self.config.member_limit,
                ..MatchConfig::default()
            },
        );
        let result = match matcher.match_graph(&graph) {
            Ok(candidates) => (candidates, true),
            Err(MatchError::NoMatch { fallback }) => (fallback, false),
            Err(MatchError::EmptyGraph) => (Vec::new(), false),
        };
        trace.timings.matching_us += micros(started);
        Ok(result)
    }

    /// Runs the stages over `candidates`, recording every execution.
    /// Returns the answer of the first stage with rows.
    fn run_query_stages(
        &self,
        candidates: &[CandidateQuery],
        offset: usize,
        relaxed_rerun: bool,
        trace: &mut PipelineTrace,
    ) -> Result<Option<Answer>, PipelineError> {
        if !relaxed_rerun {
            for (i, candidate) in candidates.iter().enumerate() {
                let rows = execute(&self.store, &candidate.sparql)?;
                trace.attempts.push(StageAttempt {
                    stage: Stage::Exact,
                    candidate: offset + i,
                    query: candidate.text.clone(),
                    rows: rows.rows.len(),
                    relaxed_rerun,
                });
                if !rows.is_empty() {
                    return Ok(Some(Answer {
                        stage: Stage::Exact,
                        rows,
                        llm_text: None,
                        chosen_query: Some(candidate.clone()),
                        executed_query: Some(candidate.text.clone()),
                        verified: true,
                        llm_unavailable: None,
                    }));
                }
            }
        }
        for (i, candidate) in candidates.iter().enumerate() {
            let rewritten = rewrite_approximate(candidate);
            let rows = execute(&self.store, &rewritten)?;
            let text = rewritten.to_string();
            trace.attempts.push(StageAttempt {
                stage: Stage::Approximate,
                candidate: offset + i,
                query: text.clone(),
                rows: rows.rows.len(),
                relaxed_rerun,
            });
            if !rows.is_empty() {
                return Ok(Some(Answer {
                    stage: Stage::Approximate,
                    rows,
                    llm_text: None,
                    chosen_query: Some(candidate.clone()),
                    executed_query: Some(text),
                    verified: true,
                    llm_unavailable: None,
                }));
            }
        }
        Ok(None)
    }

    /// Answers a question, optionally with an explicit CoNLL-U parse.
    pub fn answer(
        &self,
        question: &str,
        conllu: Option<&str>,
    ) -> Result<(Answer, PipelineTrace), PipelineError> {
        let total = Instant::now();
        let mut trace = PipelineTrace::new(question, self);

        let started = Instant::now();
        let structure = self.structure_for(question, conllu)?;
        trace.timings.structure_us = micros(started);
        trace.structure = Some(structure.clone());

        let (candidates, verified) =
            self.candidates(question, &structure, self.config.threshold, &mut trace)?;
        trace.candidates_verified = verified;
        trace.candidates = candidates.clone();

        let started = Instant::now();
        let mut answer = self.run_query_stages(&candidates, 0, false, &mut trace)?;
        if answer.is_none() {
            if let Some(lower) = self.config.relaxed_threshold.filter(|t| *t < self.config.threshold) {
                let mut scratch = trace.clone();
                let (more, _) = self.candidates(question, &structure, lower, &mut scratch)?;
                trace.timings = scratch.timings;
                let offset = trace.candidates.len();
                trace.candidates.extend(more.iter().cloned());
                answer = self.run_query_stages(&more, offset, true, &mut trace)?;
            }
        }
        let answer = match answer {
            Some(answer) => answer,
            None => {
                let Some(llm) = &self.llm else {
                    trace.timings.answering_us = micros(started);
                    trace.timings.total_us = micros(total);
                    return Err(PipelineError::NoMatch {
                        trace: Box::new(trace),
                    });
                };
                let prompt = build_llm_prompt(question, &trace, &self.template);
                trace.prompt = Some(prompt.clone());
                let (llm_text, llm_unavailable) = match llm.complete(&prompt) {
                    Ok(text) => (Some(text), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                Answer {
                    stage: Stage::Llm,
                    rows: ResultSet::default(),
                    llm_text,
                    chosen_query: None,
                    executed_query: None,
                    verified: false,
                    llm_unavailable,
                }
            }
        };
        trace.timings.answering_us = micros(started);
        trace.timings.total_us = micros(total);
        Ok((answer, trace))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::{Lexicon, LexiconExtractor};
    use crate::kb::{load_triples, TripleFormat};
    use crate::relation::{DictionaryRelationExtractor, PredicateDictionary};

    const FILMS: &str = "The_Matrix\ttype\tfilm
John_Wick\ttype\tfilm
Speed\ttype\tfilm
The_Matrix\tstarring\tKeanu_Reeves
John_Wick\tstarring\tKeanu_Reeves
The_Matrix\tlength\t\"136\"
John_Wick\tlength\t\"101\"
Speed\tlength\t\"116\"
";

    struct Echo;
    impl LlmClient for Echo {
        fn complete(&self, _prompt: &str) -> Result<String, LlmError> {
            Ok("MOCK".into())
        }
    }

    struct Down;
    impl LlmClient for Down {
        fn complete(&self, _prompt: &str) -> Result<String, LlmError> {
            Err(LlmError::Unavailable("connection refused".into()))
        }
    }

    fn pipeline(kb: &str) -> Pipeline {
        let store = Arc::new(load_triples(kb.as_bytes(), TripleFormat::Tsv, "films", "type").unwrap());
        let lexicon = Arc::new(Lexicon::build(&store, None, "en"));
        let dict = Arc::new(PredicateDictionary::build(&store, None));
        Pipeline::new(
            store.clone(),
            Arc::new(LexiconExtractor::new(lexicon)),
            Arc::new(DictionaryRelationExtractor::new(dict, store)),
        )
    }

    fn values(rows: &ResultSet) -> Vec<String> {
        let mut out: Vec<String> = rows.rows.iter().map(|r| r[0].string_form().to_string()).collect();
        out.sort();
        out
    }

    #[test]
    fn exact_stage() {
        let p = pipeline(FILMS);
        let (answer, trace) = p
            .answer("What is the length of the film starring Keanu Reeves", None)
            .unwrap();
        assert_eq!(answer.stage, Stage::Exact);
        assert!(answer.verified);
        assert_eq!(values(&answer.rows), ["101", "136"]);
        assert_eq!(trace.attempts.len(), 1);
        assert!(trace.candidates_verified);
    }

    #[test]
    fn approximate_stage_after_mutation() {
        let mutated = FILMS.replace("Keanu_Reeves", "Keanu_Reeves_Jr") + "Keanu_Reves\ttype\tperson\n";
        let mut p = pipeline(&mutated);
        p.config.threshold = 0.85;
        let (answer, trace) = p
            .answer("What is the length of the film starring Keanu Reeves", None)
            .unwrap();
        assert_eq!(answer.stage, Stage::Approximate);
        assert_eq!(values(&answer.rows), ["101", "136"]);
        assert!(trace.attempts_in(Stage::Exact).all(|a| a.rows == 0));
        assert!(answer.executed_query.unwrap().contains("CONTAINS(norm(?r0), \"keanu reeves\")"));
    }

    #[test]
    fn llm_stage_and_unavailable_marker() {
        let mut p = pipeline(FILMS);
        let question = "who won the 2018 world cup";
        assert!(matches!(p.answer(question, None), Err(PipelineError::NoMatch { .. })));
        p.llm = Some(Arc::new(Echo));
        let (answer, trace) = p.answer(question, None).unwrap();
        assert_eq!(answer.stage, Stage::Llm);
        assert_eq!(answer.llm_text.as_deref(), Some("MOCK"));
        assert!(!answer.verified);
        assert!(trace.prompt.unwrap().contains(question));
        p.llm = Some(Arc::new(Down));
        let (answer, _) = p.answer(question, None).unwrap();
        assert_eq!(answer.stage, Stage::Llm);
        assert_eq!(answer.llm_text, None);
        assert!(answer.llm_unavailable.is_some());
    }

    #[test]
    fn rewrite_relaxes_fuzzy_terms_only() {
        let p = pipeline(FILMS);
        let store = &p.store;
        let question = "What is the length of the film starring Keanu Reeves";
        let (answer, _) = p.answer(question, None).unwrap();
        let exact = answer.chosen_query.unwrap();
        assert_eq!(rewrite_approximate(&exact), exact.sparql);

        let mut fuzzy = exact.clone();
        for node in &mut fuzzy.grounded.nodes {
            if let NodeBinding::Entity { score, .. } = &mut node.binding {
                *score = 0.9;
            }
        }
        let rewritten = rewrite_approximate(&fuzzy);
        assert_eq!(
            rewritten.to_string(),
            "SELECT DISTINCT ?what WHERE {\n?film <length> ?what .\n?film <starring> ?r0 .\n?film <type> <film> .\nFILTER(?r0 = <Keanu_Reeves> || CONTAINS(norm(?r0), \"keanu reeves\"))\n}"
        );
        let a = execute(store, &exact.sparql).unwrap().row_set();
        let b = execute(store, &rewritten).unwrap().row_set();
        assert!(a.is_subset(&b));
    }

    #[test]
    fn prompt_templates() {
        let p = pipeline(FILMS);
        let trace = PipelineTrace::new("q?", &p);
        let t = PromptTemplate::parse("{question}").unwrap();
        assert_eq!(build_llm_prompt("q?", &trace, &t), "q?");
        let t = PromptTemplate::parse("{{literal}} {dataset_name}").unwrap();
        assert_eq!(build_llm_prompt("q?", &trace, &t), "{literal} films");
        assert_eq!(
            PromptTemplate::parse("hi {bogus}"),
            Err(PromptError::UnknownPlaceholder("bogus".into()))
        );
        assert_eq!(PromptTemplate::parse("hi {question"), Err(PromptError::Unterminated(3)));
        let text = build_llm_prompt("q?", &trace, &PromptTemplate::default());
        assert!(text.contains("may be unreliable"));
        assert!(text.contains("q?"));
    }

    #[test]
    fn unreachable_llm_endpoint() {
        let mut config = LlmConfig::new("http://127.0.0.1:9/v1/chat/completions");
        config.timeout_ms = 500;
        config.retries = 0;
        let client = HttpLlmClient::new(config);
        assert!(matches!(client.complete("hi"), Err(LlmError::Unavailable(_))));
    }
}
