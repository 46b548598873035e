use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

/// Defaults read from `--config`. Every key is optional and loses to the
/// matching command-line flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub tokenizer: Option<String>,
    pub whitelist: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub min_len: Option<usize>,
    pub budget: Option<usize>,
    pub context_window: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key_env: Option<String>,
    pub planner_base_url: Option<String>,
    pub planner_model: Option<String>,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub samples: Option<usize>,
    pub max_new_tokens: Option<usize>,
    pub max_steps: Option<usize>,
    pub select_top_k: Option<usize>,
    pub templates: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))
    }
}
