mod common;

use std::time::Duration;

use common::*;
use kbqa_core::{NodeExtractor, SemanticStructure, ServiceError};
use kbqa_gateway::{RemoteNodeExtractor, ServiceBinding, ServiceKind};
use serde_json::json;

const QUESTIONS: &[&str] = &[
    LENGTH_QUESTION,
    "which film is starring Keanu Reeves",
    "what is the runtime of Speed",
    "Keanu Reeves",
    OUT_OF_DOMAIN,
];

#[test]
fn remote_bindings_give_identical_traces() {
    let ne = ne_service("filmdb-mini.toml");
    let re = re_service("filmdb-mini.toml");
    let local = registry_with(None, &["filmdb-mini.toml"]);
    let remote = registry_with(None, &[]);
    let mut d = descriptor("filmdb-mini.toml");
    d.ne_service = ServiceBinding::remote(ne.url());
    d.re_service = ServiceBinding::remote(re.url());
    remote.register(d).unwrap();
    assert_eq!(
        remote.route("filmdb-mini", ServiceKind::Ne).unwrap(),
        ServiceBinding::remote(ne.url())
    );
    for q in QUESTIONS {
        assert_eq!(outcome_json(&local, "filmdb-mini", q), outcome_json(&remote, "filmdb-mini", q), "{q}");
    }
}

#[test]
fn dead_service_is_a_structured_error() {
    let ne = ne_service("filmdb-mini.toml");
    let registry = registry_with(None, &["filmdb-mutated.toml"]);
    let mut d = descriptor("filmdb-mini.toml");
    d.ne_service = ServiceBinding::Remote {
        url: ne.url(),
        timeout_ms: 2000,
    };
    registry.register(d).unwrap();
    assert!(registry.ask("filmdb-mini", LENGTH_QUESTION, None).is_ok());
    ne.shutdown().unwrap();

    let err = registry.ask("filmdb-mini", LENGTH_QUESTION, None).unwrap_err();
    assert_eq!(err.code(), "SERVICE_UNAVAILABLE");
    assert_eq!(err.http_status(), 502);
    let (answer, _) = registry.ask("filmdb-mutated", LENGTH_QUESTION, None).unwrap();
    assert_eq!(answer.stage, kbqa_core::Stage::Approximate);
}

#[test]
fn service_protocol_errors() {
    let ne = ne_service("filmdb-mini.toml");
    let (status, body) = post_json(&format!("{}/", ne.url()), &json!({"question": 3}));
    assert_eq!(status, 400);
    assert_eq!(body["error"]["code"], "PARSE_ERROR");

    // Without a structure the service parses the question itself.
    let (status, body) = post_json(
        &format!("{}/", ne.url()),
        &json!({"question": "Keanu Reeves", "language": "en", "threshold": 0.8}),
    );
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["mentions"][0]["surface"], "Keanu Reeves");
    assert_eq!(body["mentions"][0]["span"], json!([0, 12]));

    // A service that returns spans outside the question is rejected.
    let liar = axum::Router::new().route(
        "/",
        axum::routing::post(|| async {
            axum::Json(json!({"mentions": [{"span": [0, 99], "surface": "x", "kind": "Entity", "links": []}]}))
        }),
    );
    let liar = kbqa_gateway::ServerHandle::spawn("127.0.0.1:0", liar).unwrap();
    let client = RemoteNodeExtractor::new(&liar.url(), Duration::from_secs(5));
    let s = SemanticStructure::parse("Keanu", "en").unwrap();
    assert!(matches!(
        client.extract("Keanu", &s, "en", 0.8),
        Err(ServiceError::Protocol { .. })
    ));
}
