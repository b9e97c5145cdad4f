#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::routing::post;
use axum::{Json, Router};
use kbqa_core::{HttpLlmClient, LlmClient, LlmConfig, PromptTemplate, Term};
use kbqa_gateway::{DatasetDescriptor, Registry, ServerHandle};
use kbqa_testkit::fixture;
use serde_json::Value;

pub const LENGTH_QUESTION: &str = "What is the length of the film starring Keanu Reeves";
pub const OUT_OF_DOMAIN: &str = "who won the 2018 world cup";

pub fn descriptor(file: &str) -> DatasetDescriptor {
    DatasetDescriptor::from_path(&fixture(file)).expect("fixture descriptor")
}

pub fn agent() -> ureq::Agent {
    ureq::Agent::new_with_config(
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(20)))
            .build(),
    )
}

pub fn get(url: &str) -> (u16, Value) {
    let mut r = agent().get(url).call().expect("transport");
    (r.status().as_u16(), r.body_mut().read_json().expect("json body"))
}

pub fn post_json(url: &str, body: &Value) -> (u16, Value) {
    let mut r = agent().post(url).send_json(body).expect("transport");
    (r.status().as_u16(), r.body_mut().read_json().expect("json body"))
}

pub fn post_raw(url: &str, body: &str) -> (u16, Value) {
    let mut r = agent()
        .post(url)
        .header("Content-Type", "application/json")
        .send(body)
        .expect("transport");
    (r.status().as_u16(), r.body_mut().read_json().expect("json body"))
}

pub fn delete(url: &str) -> (u16, Value) {
    let mut r = agent().delete(url).call().expect("transport");
    (r.status().as_u16(), r.body_mut().read_json().expect("json body"))
}

/// A chat-completion endpoint that always answers `reply`.
pub fn mock_llm(reply: &'static str) -> ServerHandle {
    let app = Router::new().route(
        "/",
        post(move |Json(request): Json<Value>| async move {
            assert!(request["messages"][0]["content"].is_string());
            Json(serde_json::json!({
                "choices": [{"message": {"role": "assistant", "content": reply}}]
            }))
        }),
    );
    ServerHandle::spawn("127.0.0.1:0", app).expect("bind mock llm")
}

pub fn llm_client(url: &str) -> Arc<dyn LlmClient> {
    Arc::new(HttpLlmClient::new(LlmConfig {
        timeout_ms: 5000,
        retries: 0,
        ..LlmConfig::new(format!("{url}/"))
    }))
}

pub fn registry_with(llm: Option<Arc<dyn LlmClient>>, files: &[&str]) -> Arc<Registry> {
    let registry = Arc::new(Registry::new(llm, PromptTemplate::default()));
    for f in files {
        registry.register(descriptor(f)).expect("register fixture");
    }
    registry
}

/// Lengths of films starring `actor` in a TSV fixture, by a nested loop
/// over its lines.
pub fn brute_force_lengths(tsv: &str, actor: &str) -> BTreeSet<String> {
    let text = std::fs::read_to_string(fixture(tsv)).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').collect())
        .collect();
    let mut out = BTreeSet::new();
    for a in &rows {
        for b in &rows {
            for c in &rows {
                if a[1] == "type"
                    && a[2] == "film"
                    && b[0] == a[0]
                    && b[1] == "starring"
                    && b[2] == actor
                    && c[0] == a[0]
                    && c[1] == "length"
                {
                    out.insert(c[2].trim_matches('"').to_string());
                }
            }
        }
    }
    out
}

/// Lexical forms of a single-column row list in an /ask payload.
pub fn row_values(body: &Value) -> BTreeSet<String> {
    body["rows"]
        .as_array()
        .expect("rows")
        .iter()
        .map(|row| {
            let term: Term = row[0].as_str().expect("term text").parse().expect("term");
            term.string_form().to_string()
        })
        .collect()
}

/// An NE service wrapping the in-process extractor built for `file`.
pub fn ne_service(file: &str) -> ServerHandle {
    let d = descriptor(file);
    let store = load_store(&d);
    let aliases = d.entity_aliases.as_ref().map(|p| {
        kbqa_core::AliasTable::parse(&std::fs::read_to_string(p).unwrap()).unwrap()
    });
    let lexicon = Arc::new(kbqa_core::Lexicon::build(&store, aliases.as_ref(), &d.language));
    let app = kbqa_gateway::ne_service_router(Arc::new(kbqa_core::LexiconExtractor::new(lexicon)));
    ServerHandle::spawn("127.0.0.1:0", app).expect("bind ne service")
}

/// An RE service wrapping the in-process extractor built for `file`.
pub fn re_service(file: &str) -> ServerHandle {
    let d = descriptor(file);
    let store = Arc::new(load_store(&d));
    let aliases = d.predicate_aliases.as_ref().map(|p| {
        kbqa_core::PredicateAliases::parse(&std::fs::read_to_string(p).unwrap()).unwrap()
    });
    let dict = Arc::new(kbqa_core::PredicateDictionary::build(&store, aliases.as_ref()));
    let app = kbqa_gateway::re_service_router(Arc::new(kbqa_core::DictionaryRelationExtractor::new(dict, store)));
    ServerHandle::spawn("127.0.0.1:0", app).expect("bind re service")
}

pub fn load_store(d: &DatasetDescriptor) -> kbqa_core::TripleStore {
    let file = std::fs::File::open(&d.kb_path).unwrap();
    kbqa_core::load_triples(
        std::io::BufReader::new(file),
        d.kb_format.parse().unwrap(),
        &d.dataset_id,
        &d.type_predicate,
    )
    .unwrap()
}

/// The ask outcome as canonical JSON with wall-clock timings removed, so
/// two runs can be compared byte for byte.
pub fn outcome_json(registry: &Registry, dataset: &str, question: &str) -> String {
    let result = registry
        .ask(dataset, question, None)
        .map(|(answer, trace)| (answer, trace.without_timings()));
    let (status, body) = match result {
        Ok((answer, trace)) => kbqa_gateway::ask_payload(Ok((answer, trace)), true),
        Err(kbqa_gateway::GatewayError::Pipeline(kbqa_core::PipelineError::NoMatch { trace })) => {
            let e = kbqa_gateway::GatewayError::Pipeline(kbqa_core::PipelineError::NoMatch {
                trace: Box::new(trace.without_timings()),
            });
            kbqa_gateway::ask_payload(Err(e), true)
        }
        Err(e) => kbqa_gateway::ask_payload(Err(e), true),
    };
    format!("{status} {body}")
}
