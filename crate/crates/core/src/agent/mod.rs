//! Model endpoint clients, self-consistency voting and the four-stage agent loop.

mod client;
mod env;
pub mod mock;
mod pipeline;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::PrunedDom;
use crate::workflow::{parse_action, Action, Operation};

pub use client::{ChatClient, ClientError, CompletionClient, EndpointConfig, ScriptedClient};
pub use env::{viewport_guard, BBox, EnvAction, EnvError, Environment, Observation, ReplayEnvironment, Viewport};
pub use pipeline::{
    parse_check, prepare_observation, run_pipeline, CheckVerdict, PipelineConfig, PipelineRun, PipelineState,
    PromptTemplates, Stage, Task, TranscriptEntry,
};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("none of {samples} samples was a valid action")]
    NoValidAction { samples: usize },
    #[error("cannot vote over zero actions")]
    EmptyVote,
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("cannot read an environment action from {0:?}")]
    Translate(String),
    #[error("cannot chunk the observation: {0}")]
    Observation(String),
    #[error("prompt templates: {0}")]
    Templates(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub temperature: f64,
    pub top_p: f64,
    pub n_samples: usize,
    pub max_new_tokens: usize,
    /// Base seed; sample `i` uses `seed + i`.
    pub seed: Option<u64>,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 0.6,
            top_p: 0.95,
            n_samples: 5,
            max_new_tokens: 256,
            seed: None,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.temperature >= 0.0) {
            return Err(AgentError::InvalidParams(format!("temperature {} < 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(AgentError::InvalidParams(format!("top_p {} not in (0, 1]", self.top_p)));
        }
        if self.n_samples == 0 {
            return Err(AgentError::InvalidParams("n_samples must be positive".into()));
        }
        Ok(())
    }

    /// One greedy-ish completion, for the planner stages.
    pub fn single(&self) -> GenParams {
        GenParams {
            n_samples: 1,
            ..self.clone()
        }
    }
}

/// A completion that parses and names a node of `dom`.
pub fn valid_action(completion: &str, dom: &PrunedDom) -> Option<Action> {
    let a = parse_action(completion).ok()?;
    (dom.contains(a.node) && Operation::ALL.contains(&a.op)).then_some(a)
}

/// Samples `params.n_samples` completions and keeps the valid actions, in sample order.
pub fn sample_actions(
    client: &dyn CompletionClient,
    prompt: &str,
    dom: &PrunedDom,
    params: &GenParams,
) -> Result<Vec<Action>, AgentError> {
    params.validate()?;
    let completions = client.complete(prompt, params)?;
    let valid: Vec<Action> = completions.iter().filter_map(|c| valid_action(c, dom)).collect();
    if valid.is_empty() {
        return Err(AgentError::NoValidAction {
            samples: completions.len(),
        });
    }
    Ok(valid)
}

/// Distinct actions by `(op, node, payload)` with their counts, most frequent
/// first; ties keep first-appearance order.
pub fn rank_candidates(actions: &[Action]) -> Vec<(Action, usize)> {
    let mut groups: Vec<(Action, usize)> = Vec::new();
    let mut index: HashMap<_, usize> = HashMap::new();
    for a in actions {
        match index.get(&a.key()) {
            Some(&g) => groups[g].1 += 1,
            None => {
                index.insert(a.key(), groups.len());
                groups.push((a.clone(), 1));
            }
        }
    }
    // Stable sort keeps earlier groups ahead on equal counts.
    groups.sort_by(|a, b| b.1.cmp(&a.1));
    groups
}

/// The most frequent action; on a tie, the group that appeared first.
pub fn majority_vote(actions: &[Action]) -> Result<Action, AgentError> {
    rank_candidates(actions)
        .into_iter()
        .next()
        .map(|(a, _)| a)
        .ok_or(AgentError::EmptyVote)
}

/// Reads the first number in a selector reply as a 1-based candidate index.
pub fn parse_choice(reply: &str, candidates: usize) -> Option<usize> {
    let digits: String = reply
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(char::is_ascii_digit)
        .collect();
    digits.parse::<usize>().ok().filter(|n| (1..=candidates).contains(n))
}
