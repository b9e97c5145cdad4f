//! Request and response payloads shared by the HTTP API and the CLI's
//! `--json` output.

use kbqa_core::{Answer, KbStats, PipelineError, PipelineTrace, Stage, Term};
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AskRequest {
    pub dataset: String,
    pub question: String,
    #[serde(default)]
    pub trace: bool,
    /// CoNLL-U parse of the question, overriding the dataset's parser.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conllu: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Box<PipelineTrace>>,
}

impl ErrorBody {
    pub fn new(code: &str, message: impl ToString) -> Self {
        ErrorBody {
            error: ErrorInfo {
                code: code.to_string(),
                message: message.to_string(),
            },
            trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub stage: Stage,
    pub verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub columns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Term>>>,
    /// Result of an ASK query.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boolean: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_text: Option<String>,
    /// The executed query (the relaxed rewrite for Approximate answers).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparql: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Box<PipelineTrace>>,
    /// Present when the LLM stage was reached but the LLM failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
}

impl AskResponse {
    pub fn from_answer(answer: &Answer, trace: Option<PipelineTrace>) -> Self {
        let from_store = answer.stage != Stage::Llm;
        AskResponse {
            stage: answer.stage,
            verified: answer.verified,
            columns: (from_store && answer.rows.truth.is_none()).then(|| answer.rows.columns.clone()),
            rows: (from_store && answer.rows.truth.is_none()).then(|| answer.rows.rows.clone()),
            boolean: answer.rows.truth,
            llm_text: answer.llm_text.clone(),
            sparql: answer.executed_query.clone(),
            score: answer.chosen_query.as_ref().map(|c| c.score),
            trace: trace.map(Box::new),
            error: answer.llm_unavailable.as_ref().map(|m| ErrorInfo {
                code: "LLM_UNAVAILABLE".into(),
                message: m.clone(),
            }),
        }
    }
}

/// HTTP status and JSON body for the outcome of an ask.
pub fn ask_payload(
    result: Result<(Answer, PipelineTrace), GatewayError>,
    with_trace: bool,
) -> (u16, serde_json::Value) {
    match result {
        Ok((answer, trace)) => {
            let status = if answer.llm_unavailable.is_some() { 503 } else { 200 };
            let body = AskResponse::from_answer(&answer, with_trace.then_some(trace));
            (status, serde_json::to_value(body).expect("serializable"))
        }
        Err(e) => error_payload(&e, with_trace),
    }
}

pub fn error_payload(error: &GatewayError, with_trace: bool) -> (u16, serde_json::Value) {
    let mut body = ErrorBody::new(error.code(), error);
    if with_trace {
        if let GatewayError::Pipeline(PipelineError::NoMatch { trace }) = error {
            body.trace = Some(trace.clone());
        }
    }
    (
        error.http_status(),
        serde_json::to_value(body).expect("serializable"),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub name: String,
    pub language: String,
    pub stats: KbStats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registered {
    pub dataset_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
}
