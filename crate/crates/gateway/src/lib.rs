//! Multi-tenant front end: a registry of datasets, routing of each
//! dataset's node- and relation-extraction services (in process or over
//! HTTP), and the public HTTP API.

pub mod api;
pub mod descriptor;
pub mod error;
pub mod registry;
pub mod remote;
pub mod server;

pub use api::{ask_payload, AskRequest, AskResponse, DatasetInfo, ErrorBody, ErrorInfo};
pub use descriptor::{DatasetDescriptor, ServiceBinding, ServiceKind};
pub use error::GatewayError;
pub use registry::{Dataset, Registry};
pub use remote::{ne_service_router, re_service_router, RemoteNodeExtractor, RemoteRelationExtractor};
pub use server::{router, ServerHandle};
