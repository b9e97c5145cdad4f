use std::path::{Path, PathBuf};

use kbqa_core::LlmConfig;
use serde::Deserialize;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Contents of the `--config` file. Relative paths are resolved against
/// the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub bind: Option<String>,
    /// Dataset descriptor files registered at startup.
    #[serde(default)]
    pub datasets: Vec<PathBuf>,
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default)]
    pub llm: Option<LlmConfig>,
    /// Gateway URL used when `--endpoint` is not given.
    #[serde(default)]
    pub endpoint: Option<String>,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut config: CliConfig =
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in config.datasets.iter_mut().chain(config.prompt_template.iter_mut()) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }
}
