mod common;

use std::sync::Arc;

use common::*;
use kbqa_core::{PipelineTrace, Stage};
use kbqa_gateway::{router, AskResponse, DatasetInfo, Registry, ServerHandle, ServiceBinding, ServiceKind};
use serde_json::json;

fn serve(registry: Arc<Registry>) -> ServerHandle {
    ServerHandle::spawn("127.0.0.1:0", router(registry)).unwrap()
}

#[test]
fn health_and_unknown_route() {
    let server = serve(Arc::new(Registry::default()));
    assert_eq!(get(&format!("{}/health", server.url())), (200, json!({"status": "ok"})));
    let (status, body) = get(&format!("{}/nope", server.url()));
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "NOT_FOUND");
    server.shutdown().unwrap();
}

#[test]
fn ask_exact_over_http() {
    let server = serve(registry_with(None, &["filmdb-mini.toml"]));
    let url = format!("{}/ask", server.url());
    let (status, body) = post_json(&url, &json!({"dataset": "filmdb-mini", "question": LENGTH_QUESTION}));
    assert_eq!(status, 200, "{body}");
    let response: AskResponse = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(response.stage, Stage::Exact);
    assert!(response.verified);
    assert!(response.trace.is_none());
    assert_eq!(row_values(&body), brute_force_lengths("filmdb-mini.tsv", "Keanu_Reeves"));
    assert_eq!(response.columns, Some(vec!["what".to_string()]));
    assert_eq!(response.score, Some(0.0));

    let (_, traced) = post_json(
        &url,
        &json!({"dataset": "filmdb-mini", "question": LENGTH_QUESTION, "trace": true}),
    );
    let trace: PipelineTrace = serde_json::from_value(traced["trace"].clone()).unwrap();
    assert_eq!(trace.dataset_id, "filmdb-mini");
    assert_eq!(trace.mentions.len(), 3);
    let graph = trace.graph.unwrap();
    assert_eq!((graph.nodes.len(), graph.edges.len()), (3, 2));
    assert!(trace.candidates_verified);
    assert_eq!(trace.attempts[0].stage, Stage::Exact);
}

#[test]
fn error_payloads() {
    let server = serve(registry_with(None, &["filmdb-mini.toml"]));
    let url = format!("{}/ask", server.url());

    let (status, body) = post_json(&url, &json!({"dataset": "nope", "question": "what"}));
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "DATASET_NOT_FOUND");

    let (status, body) = post_raw(&url, "{\"dataset\": ");
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "PARSE_ERROR");

    let (status, body) = post_json(&url, &json!({"dataset": "filmdb-mini", "question": "?", "bogus": 1}));
    assert_eq!((status, body["error"]["code"].as_str()), (400, Some("PARSE_ERROR")));

    // No LLM configured: the ladder ends without an answer.
    let (status, body) = post_json(
        &url,
        &json!({"dataset": "filmdb-mini", "question": OUT_OF_DOMAIN, "trace": true}),
    );
    assert_eq!(status, 422);
    assert_eq!(body["error"]["code"], "NO_MATCH");
    assert!(body["trace"].is_object());
}

#[test]
fn dataset_lifecycle() {
    let registry = Arc::new(Registry::default());
    let server = serve(registry.clone());
    let datasets = format!("{}/datasets", server.url());
    assert_eq!(get(&datasets), (200, json!([])));

    let descriptor = serde_json::to_value(descriptor("filmdb-mini.toml")).unwrap();
    let (status, body) = post_json(&datasets, &descriptor);
    assert_eq!((status, body), (201, json!({"dataset_id": "filmdb-mini"})));
    let (status, body) = post_json(&datasets, &descriptor);
    assert_eq!(status, 409);
    assert_eq!(body["error"]["code"], "DUPLICATE_ID");

    let (status, body) = get(&datasets);
    assert_eq!(status, 200);
    let infos: Vec<DatasetInfo> = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(infos.len(), 1);
    assert_eq!(infos[0].name, "Film DB (mini)");
    assert_eq!(body[0]["stats"], json!({"triples": 8, "entities": 5, "predicates": 3}));

    assert_eq!(registry.route("filmdb-mini", ServiceKind::Ne).unwrap(), ServiceBinding::InProcess);

    let (status, _) = post_json(
        &format!("{}/ask", server.url()),
        &json!({"dataset": "filmdb-mini", "question": LENGTH_QUESTION}),
    );
    assert_eq!(status, 200);
    assert_eq!(delete(&format!("{datasets}/filmdb-mini")).0, 200);
    let (status, body) = post_json(
        &format!("{}/ask", server.url()),
        &json!({"dataset": "filmdb-mini", "question": LENGTH_QUESTION}),
    );
    assert_eq!(status, 404);
    assert_eq!(body["error"]["code"], "DATASET_NOT_FOUND");
    assert_eq!(delete(&format!("{datasets}/filmdb-mini")).0, 404);
    assert!(registry.route("filmdb-mini", ServiceKind::Re).is_err());

    let (status, body) = post_raw(&datasets, "dataset_id = \"Bad Id\"\nkb_path = \"x.nt\"\n");
    assert_eq!(status, 400, "{body}");
    let (status, body) = post_raw(&datasets, "dataset_id = \"missing\"\nkb_path = \"/no/such/file.nt\"\n");
    assert_eq!(status, 400, "{body}");
    assert_eq!(body["error"]["code"], "LOAD_ERROR");
    assert_eq!(get(&datasets).1, json!([]));
}

#[test]
fn llm_stage_and_llm_outage() {
    let llm = mock_llm("MOCK");
    let server = serve(registry_with(Some(llm_client(&llm.url())), &["filmdb-mini.toml"]));
    let (status, body) = post_json(
        &format!("{}/ask", server.url()),
        &json!({"dataset": "filmdb-mini", "question": OUT_OF_DOMAIN, "trace": true}),
    );
    assert_eq!(status, 200, "{body}");
    let response: AskResponse = serde_json::from_value(body).unwrap();
    assert_eq!(response.stage, Stage::Llm);
    assert_eq!(response.llm_text.as_deref(), Some("MOCK"));
    assert!(!response.verified);
    assert!(response.rows.is_none());
    let prompt = response.trace.unwrap().prompt.unwrap();
    assert!(prompt.contains(OUT_OF_DOMAIN));
    assert!(prompt.contains("may be unreliable"));

    llm.shutdown().unwrap();
    let (status, body) = post_json(
        &format!("{}/ask", server.url()),
        &json!({"dataset": "filmdb-mini", "question": OUT_OF_DOMAIN}),
    );
    assert_eq!(status, 503, "{body}");
    assert_eq!(body["stage"], "Llm");
    assert_eq!(body["verified"], false);
    assert_eq!(body["error"]["code"], "LLM_UNAVAILABLE");
    assert!(body.get("llm_text").is_none());
}

#[test]
fn concurrent_asks_agree() {
    let server = serve(registry_with(None, &["filmdb-mini.toml", "filmdb-mutated.toml"]));
    let url = format!("{}/ask", server.url());
    let handles: Vec<_> = (0..8)
        .map(|i| {
            let url = url.clone();
            std::thread::spawn(move || {
                let dataset = if i % 2 == 0 { "filmdb-mini" } else { "filmdb-mutated" };
                post_json(&url, &json!({"dataset": dataset, "question": LENGTH_QUESTION})).1
            })
        })
        .collect();
    let bodies: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for (i, b) in bodies.iter().enumerate() {
        assert_eq!(b, &bodies[i % 2]);
    }
    assert_eq!(bodies[0]["stage"], "Exact");
    assert_eq!(bodies[1]["stage"], "Approximate");
}
