//! Wire protocol for dataset services hosted outside the gateway, with
//! clients implementing the extractor traits and routers that expose an
//! in-process extractor over the same protocol.

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use kbqa_core::{
    MentionCandidate, NodeExtractor, PredicateCandidate, QueryGraph, RelationExtractor,
    SemanticStructure, ServiceError,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::ErrorBody;
use crate::descriptor::ServiceKind;

pub const PROTOCOL_VERSION: u32 = 1;

fn protocol_version() -> u32 {
    PROTOCOL_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeRequest {
    #[serde(default = "protocol_version")]
    pub version: u32,
    pub question: String,
    pub language: String,
    pub threshold: f64,
    /// The gateway's parse of the question. Services without a parser of
    /// their own should use it so spans line up with the gateway's tokens.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<SemanticStructure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeResponse {
    pub mentions: Vec<MentionCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReRequest {
    #[serde(default = "protocol_version")]
    pub version: u32,
    pub question: String,
    pub graph: QueryGraph,
    pub structure: SemanticStructure,
    pub top_m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCandidates {
    pub id: usize,
    pub candidates: Vec<PredicateCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReResponse {
    pub edges: Vec<EdgeCandidates>,
}

#[derive(Debug, Clone)]
struct Client {
    kind: ServiceKind,
    url: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(kind: ServiceKind, url: &str, timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Client {
            kind,
            url: url.to_string(),
            agent: ureq::Agent::new_with_config(config),
        }
    }

    fn call<Req: Serialize, Resp: DeserializeOwned>(&self, request: &Req) -> Result<Resp, ServiceError> {
        let unavailable = |message: String| ServiceError::Unavailable {
            service: self.kind.to_string(),
            message,
        };
        let mut response = self
            .agent
            .post(&self.url)
            .send_json(request)
            .map_err(|e| unavailable(format!("{}: {e}", self.url)))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.body_mut().read_to_string().unwrap_or_default();
            return Err(unavailable(format!("{} answered {}: {body}", self.url, status.as_u16())));
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| ServiceError::Protocol {
                service: self.kind.to_string(),
                message: e.to_string(),
            })
    }
}

/// Node extraction over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteNodeExtractor {
    client: Client,
}

impl RemoteNodeExtractor {
    pub fn new(url: &str, timeout: Duration) -> Self {
        RemoteNodeExtractor {
            client: Client::new(ServiceKind::Ne, url, timeout),
        }
    }
}

impl NodeExtractor for RemoteNodeExtractor {
    fn extract(
        &self,
        question: &str,
        structure: &SemanticStructure,
        language: &str,
        threshold: f64,
    ) -> Result<Vec<MentionCandidate>, ServiceError> {
        let response: NeResponse = self.client.call(&NeRequest {
            version: PROTOCOL_VERSION,
            question: question.to_string(),
            language: language.to_string(),
            threshold,
            structure: Some(structure.clone()),
        })?;
        for m in &response.mentions {
            let (start, end) = m.span;
            if start > end || end > question.len() || !question.is_char_boundary(start) || !question.is_char_boundary(end) {
                return Err(ServiceError::Protocol {
                    service: ServiceKind::Ne.to_string(),
                    message: format!("mention span {start}..{end} outside the question"),
                });
            }
        }
        Ok(response.mentions)
    }
}

/// Relation extraction over HTTP.
#[derive(Debug, Clone)]
pub struct RemoteRelationExtractor {
    client: Client,
}

impl RemoteRelationExtractor {
    pub fn new(url: &str, timeout: Duration) -> Self {
        RemoteRelationExtractor {
            client: Client::new(ServiceKind::Re, url, timeout),
        }
    }
}

impl RelationExtractor for RemoteRelationExtractor {
    fn extract(
        &self,
        question: &str,
        graph: &QueryGraph,
        structure: &SemanticStructure,
        top_m: usize,
    ) -> Result<QueryGraph, ServiceError> {
        let response: ReResponse = self.client.call(&ReRequest {
            version: PROTOCOL_VERSION,
            question: question.to_string(),
            graph: graph.clone(),
            structure: structure.clone(),
            top_m,
        })?;
        let mut out = graph.clone();
        for edge in response.edges {
            let slot = out.edges.get_mut(edge.id).ok_or_else(|| ServiceError::Protocol {
                service: ServiceKind::Re.to_string(),
                message: format!("unknown edge id {}", edge.id),
            })?;
            slot.candidates = edge.candidates;
            slot.candidates.truncate(top_m);
        }
        Ok(out)
    }
}

type Failure = (StatusCode, Json<ErrorBody>);

fn failure(status: StatusCode, code: &str, message: impl ToString) -> Failure {
    (status, Json(ErrorBody::new(code, message)))
}

async fn run_blocking<T: Send + 'static>(
    job: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, Failure> {
    match tokio::task::spawn_blocking(job).await {
        Ok(Ok(value)) => Ok(value),
        Ok(Err(e)) => Err(failure(StatusCode::SERVICE_UNAVAILABLE, "SERVICE_UNAVAILABLE", e)),
        Err(e) => Err(failure(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e)),
    }
}

async fn handle_ne(
    State(ne): State<Arc<dyn NodeExtractor>>,
    request: Result<Json<NeRequest>, JsonRejection>,
) -> Result<Json<NeResponse>, Failure> {
    let Json(request) = request.map_err(|e| failure(StatusCode::BAD_REQUEST, "PARSE_ERROR", e.body_text()))?;
    let structure = match request.structure {
        Some(s) => s,
        None => SemanticStructure::parse(&request.question, &request.language)
            .map_err(|e| failure(StatusCode::BAD_REQUEST, "PARSE_ERROR", e))?,
    };
    let mentions = run_blocking(move || {
        ne.extract(&request.question, &structure, &request.language, request.threshold)
    })
    .await?;
    Ok(Json(NeResponse { mentions }))
}

async fn handle_re(
    State(re): State<Arc<dyn RelationExtractor>>,
    request: Result<Json<ReRequest>, JsonRejection>,
) -> Result<Json<ReResponse>, Failure> {
    let Json(request) = request.map_err(|e| failure(StatusCode::BAD_REQUEST, "PARSE_ERROR", e.body_text()))?;
    let graph = run_blocking(move || {
        re.extract(&request.question, &request.graph, &request.structure, request.top_m)
    })
    .await?;
    Ok(Json(ReResponse {
        edges: graph
            .edges
            .into_iter()
            .map(|e| EdgeCandidates {
                id: e.id,
                candidates: e.candidates,
            })
            .collect(),
    }))
}

/// Serves `ne` over the NE protocol at `POST /`.
pub fn ne_service_router(ne: Arc<dyn NodeExtractor>) -> Router {
    Router::new().route("/", post(handle_ne)).with_state(ne)
}

/// Serves `re` over the RE protocol at `POST /`.
pub fn re_service_router(re: Arc<dyn RelationExtractor>) -> Router {
    Router::new().route("/", post(handle_re)).with_state(re)
}
