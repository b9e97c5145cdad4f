use std::fmt;
use std::path::{Path, PathBuf};

use kbqa_core::TripleFormat;
use serde::{Deserialize, Serialize};

use crate::error::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ServiceKind {
    Ne,
    Re,
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceKind::Ne => "node extraction",
            ServiceKind::Re => "relation extraction",
        })
    }
}

/// Where a dataset's NE or RE service runs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceBinding {
    #[default]
    InProcess,
    Remote {
        url: String,
        #[serde(default = "default_service_timeout_ms")]
        timeout_ms: u64,
    },
}

fn default_service_timeout_ms() -> u64 {
    10_000
}

impl ServiceBinding {
    pub fn remote(url: impl Into<String>) -> Self {
        ServiceBinding::Remote {
            url: url.into(),
            timeout_ms: default_service_timeout_ms(),
        }
    }
}

fn default_language() -> String {
    "en".into()
}
fn default_type_predicate() -> String {
    "http://www.w3.org/1999/02/22-rdf-syntax-ns#type".into()
}
fn default_threshold() -> f64 {
    kbqa_core::extract::DEFAULT_THRESHOLD
}
fn default_k() -> usize {
    kbqa_core::matcher::DEFAULT_K
}
fn default_top_m() -> usize {
    kbqa_core::relation::DEFAULT_TOP_M
}
fn default_format() -> String {
    "nt".into()
}

/// A dataset registration, read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub dataset_id: String,
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_language")]
    pub language: String,
    pub kb_path: PathBuf,
    /// `nt` (N-Triples) or `tsv`.
    #[serde(default = "default_format")]
    pub kb_format: String,
    #[serde(default = "default_type_predicate")]
    pub type_predicate: String,
    /// `surface<TAB>iri` lines.
    #[serde(default)]
    pub entity_aliases: Option<PathBuf>,
    /// `phrase<TAB>predicate[<TAB>weight]` lines.
    #[serde(default)]
    pub predicate_aliases: Option<PathBuf>,
    /// CoNLL-U parses of known questions.
    #[serde(default)]
    pub parse_bank: Option<PathBuf>,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_top_m")]
    pub top_m: usize,
    #[serde(default)]
    pub relaxed_threshold: Option<f64>,
    #[serde(default)]
    pub ne_service: ServiceBinding,
    #[serde(default)]
    pub re_service: ServiceBinding,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_' || b == b'-')
}

fn valid_url(url: &str) -> bool {
    let rest = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"));
    matches!(rest, Some(host) if !host.is_empty() && !host.starts_with('/'))
}

impl DatasetDescriptor {
    /// A descriptor with defaults for everything but id, KB path and format.
    pub fn new(dataset_id: impl Into<String>, kb_path: impl Into<PathBuf>, kb_format: &str) -> Self {
        let dataset_id = dataset_id.into();
        DatasetDescriptor {
            name: dataset_id.clone(),
            dataset_id,
            language: default_language(),
            kb_path: kb_path.into(),
            kb_format: kb_format.into(),
            type_predicate: default_type_predicate(),
            entity_aliases: None,
            predicate_aliases: None,
            parse_bank: None,
            threshold: default_threshold(),
            k: default_k(),
            top_m: default_top_m(),
            relaxed_threshold: None,
            ne_service: ServiceBinding::InProcess,
            re_service: ServiceBinding::InProcess,
        }
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(source: &str) -> Result<Self, GatewayError> {
        let descriptor: DatasetDescriptor = if source.trim_start().starts_with('{') {
            serde_json::from_str(source).map_err(|e| GatewayError::InvalidDescriptor(e.to_string()))?
        } else {
            toml::from_str(source).map_err(|e| GatewayError::InvalidDescriptor(e.to_string()))?
        };
        descriptor.validate()?;
        Ok(descriptor)
    }

    /// Reads a descriptor file; relative paths inside it are resolved
    /// against the file's directory.
    pub fn from_path(path: &Path) -> Result<Self, GatewayError> {
        let source = std::fs::read_to_string(path).map_err(|e| GatewayError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let descriptor = Self::parse(&source)?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(descriptor.resolve_paths(base))
    }

    /// Makes every relative path absolute with respect to `base`.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.kb_path);
        for p in [
            &mut self.entity_aliases,
            &mut self.predicate_aliases,
            &mut self.parse_bank,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |m: String| Err(GatewayError::InvalidDescriptor(m));
        if !valid_id(&self.dataset_id) {
            return invalid(format!(
                "dataset_id {:?} must match [a-z0-9_-]+",
                self.dataset_id
            ));
        }
        if self.kb_format.parse::<TripleFormat>().is_err() {
            return invalid(format!("unknown kb_format {:?}", self.kb_format));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return invalid(format!("threshold {} outside (0, 1]", self.threshold));
        }
        if let Some(t) = self.relaxed_threshold {
            if !(t > 0.0 && t <= self.threshold) {
                return invalid(format!("relaxed_threshold {t} outside (0, threshold]"));
            }
        }
        if self.k == 0 || self.top_m == 0 {
            return invalid("k and top_m must be at least 1".into());
        }
        if self.type_predicate.is_empty() {
            return invalid("type_predicate is empty".into());
        }
        for binding in [&self.ne_service, &self.re_service] {
            if let ServiceBinding::Remote { url, .. } = binding {
                if !valid_url(url) {
                    return invalid(format!("service url {url:?} is not an absolute http(s) URL"));
                }
            }
        }
        Ok(())
    }

    pub fn display_name(&self) -> &str {
        if self.name.is_empty() {
            &self.dataset_id
        } else {
            &self.name
        }
    }

    pub fn binding(&self, kind: ServiceKind) -> &ServiceBinding {
        match kind {
            ServiceKind::Ne => &self.ne_service,
            ServiceKind::Re => &self.re_service,
        }
    }
}
