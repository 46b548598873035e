use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::GenParams;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport error after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },
    #[error("API error {status}: {body}")]
    Api { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("scripted client has no completion left")]
    ScriptExhausted,
}

/// Anything that turns a prompt into `params.n_samples` completions.
pub trait CompletionClient: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. No header is sent when it is unset.
    pub api_key_env: String,
    pub attempts: usize,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    /// Upper bound on concurrent sample requests.
    pub max_parallel: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: "http://127.0.0.1:8000/v1".into(),
            model: "default".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            attempts: 3,
            backoff_ms: 250,
            timeout_secs: 120,
            max_parallel: 4,
        }
    }
}

/// Chat-completions client. Each sample is its own request with seed `params.seed + i`.
pub struct ChatClient {
    config: EndpointConfig,
    agent: ureq::Agent,
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        ChatClient { config, agent }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn request_once(&self, body: &serde_json::Value) -> Attempt {
        let mut req = self.agent.post(self.url());
        if let Ok(key) = std::env::var(&self.config.api_key_env) {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if (200..300).contains(&status) {
            return Attempt::Done(parse_choice(&text));
        }
        let err = ClientError::Api {
            status,
            body: excerpt(&text),
        };
        if status == 429 || status >= 500 {
            Attempt::Retry(err.to_string())
        } else {
            Attempt::Done(Err(err))
        }
    }

    fn sample(&self, prompt: &str, params: &GenParams, i: usize) -> Result<String, ClientError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_new_tokens,
            "n": 1,
        });
        if let Some(seed) = params.seed {
            body["seed"] = json!(seed.wrapping_add(i as u64));
        }
        let attempts = self.config.attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1)));
            }
            match self.request_once(&body) {
                Attempt::Done(r) => return r,
                Attempt::Retry(msg) => {
                    log::warn!("request failed (attempt {}): {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(ClientError::Transport {
            attempts,
            message: last,
        })
    }
}

enum Attempt {
    Done(Result<String, ClientError>),
    Retry(String),
}

fn parse_choice(text: &str) -> Result<String, ClientError> {
    let v: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ClientError::Malformed(e.to_string()))?;
    let choice = &v["choices"][0];
    choice["message"]["content"]
        .as_str()
        .or_else(|| choice["text"].as_str())
        .map(str::to_string)
        .ok_or_else(|| ClientError::Malformed(format!("no choices[0].message.content in {}", excerpt(text))))
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 200;
    match s.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

impl CompletionClient for ChatClient {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ClientError> {
        let n = params.n_samples;
        let width = self.config.max_parallel.max(1);
        let mut out = Vec::with_capacity(n);
        let indices: Vec<usize> = (0..n).collect();
        for batch in indices.chunks(width) {
            let results: Vec<Result<String, ClientError>> = std::thread::scope(|s| {
                let handles: Vec<_> = batch
                    .iter()
                    .map(|&i| s.spawn(move || self.sample(prompt, params, i)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("sample thread")).collect()
            });
            for r in results {
                out.push(r?);
            }
        }
        Ok(out)
    }
}

/// Replays canned completions in order, `n_samples` at a time.
#[derive(Debug, Default)]
pub struct ScriptedClient {
    queue: Mutex<VecDeque<String>>,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedClient {
    pub fn new<S: Into<String>>(completions: impl IntoIterator<Item = S>) -> Self {
        ScriptedClient {
            queue: Mutex::new(completions.into_iter().map(Into::into).collect()),
            prompts: Mutex::default(),
        }
    }

    /// Prompts received so far.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl CompletionClient for ScriptedClient {
    fn complete(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ClientError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        let mut q = self.queue.lock().unwrap();
        (0..params.n_samples)
            .map(|_| q.pop_front().ok_or(ClientError::ScriptExhausted))
            .collect()
    }
}
