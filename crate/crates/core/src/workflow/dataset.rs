use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    build_prompt, format_action, prepare_step, validate_workflow, Action, ValidationResult,
    Workflow,
};
use crate::chunk::{chunk_dom, select_training_chunk};
use crate::dom::PruneConfig;
use crate::tokenizer::Tokenizer;

/// Tokens kept free for the model's answer when the budget comes from a context window.
pub const GENERATION_RESERVE: usize = 512;

/// Smallest observation budget derived from a context window that is accepted.
pub const MIN_BUDGET: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    /// Fixed observation budget in tokens.
    Tokens(usize),
    /// Total context window; the observation gets what is left after the
    /// prompt scaffolding and [`GENERATION_RESERVE`].
    ContextWindow(usize),
}

/// Returns false for workflows to drop, e.g. non-English recordings.
pub type LanguageFilter = Arc<dyn Fn(&Workflow) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct DatasetOptions {
    pub prune: PruneConfig,
    /// Apply the character-to-token ratio rule with the dataset tokenizer.
    pub ratio_prune: bool,
    pub budget: Budget,
    pub language_filter: Option<LanguageFilter>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            prune: PruneConfig::default(),
            ratio_prune: true,
            budget: Budget::ContextWindow(32_768),
            language_filter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrainingExample {
    pub prompt: String,
    pub label: String,
    pub workflow_id: String,
    pub step_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedStep {
    pub workflow_id: String,
    pub step_index: usize,
    pub reason: String,
}

/// One example per step of a valid workflow. The prompt shows the earliest
/// chunk that contains the step's target; the label is the step's five-line
/// block. Steps that cannot be placed are returned as skips.
pub fn emit_training_examples(
    w: &Workflow,
    tok: &dyn Tokenizer,
    opts: &DatasetOptions,
) -> (Vec<TrainingExample>, Vec<SkippedStep>) {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let mut history: Vec<Action> = Vec::new();
    let ratio_tok = opts.ratio_prune.then_some(tok);
    for (i, step) in w.steps.iter().enumerate() {
        let skip = |reason: String| {
            log::warn!("workflow {} step {i} skipped: {reason}", w.id);
            SkippedStep {
                workflow_id: w.id.clone(),
                step_index: i,
                reason,
            }
        };
        let prepared = match prepare_step(step, i as u32 + 1, &opts.prune, ratio_tok) {
            Ok(p) => p,
            Err(e) => {
                skipped.push(skip(e.to_string()));
                // Later steps would see a history with a hole; stop here.
                break;
            }
        };
        let budget = match opts.budget {
            Budget::Tokens(n) => n,
            Budget::ContextWindow(window) => {
                let overhead = tok.count_tokens(&build_prompt(&w.objective, &step.url, "", &history));
                match window.checked_sub(overhead + GENERATION_RESERVE) {
                    Some(b) if b >= MIN_BUDGET => b,
                    _ => {
                        skipped.push(skip(format!(
                            "context window {window} leaves fewer than {MIN_BUDGET} tokens for the observation"
                        )));
                        history.push(prepared.action);
                        continue;
                    }
                }
            }
        };
        let chunk = chunk_dom(&prepared.serialized, tok, budget)
            .map_err(|e| e.to_string())
            .and_then(|chunks| {
                select_training_chunk(&chunks, prepared.target)
                    .map(|c| c.text.clone())
                    .map_err(|e| e.to_string())
            });
        match chunk {
            Ok(observation) => examples.push(TrainingExample {
                prompt: build_prompt(&w.objective, &step.url, &observation, &history),
                label: format_action(&prepared.action),
                workflow_id: w.id.clone(),
                step_index: i,
            }),
            Err(reason) => skipped.push(skip(reason)),
        }
        history.push(prepared.action);
    }
    (examples, skipped)
}

/// Recorded descriptions this short carry little information.
pub fn is_uninformative(description: &str) -> bool {
    description.split_whitespace().count() < 3
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DatasetReport {
    #[serde(skip)]
    pub examples: Vec<TrainingExample>,
    pub accepted: Vec<String>,
    pub rejected: Vec<ValidationResult>,
    /// Workflows dropped by the language filter.
    pub filtered: Vec<String>,
    pub skipped_steps: Vec<SkippedStep>,
    /// `(workflow id, step index)` of steps with uninformative descriptions.
    pub uninformative: Vec<(String, usize)>,
    pub accepted_steps: usize,
}

enum Outcome {
    Filtered,
    Rejected(ValidationResult),
    Accepted {
        examples: Vec<TrainingExample>,
        skipped: Vec<SkippedStep>,
    },
}

/// Filters, validates and converts every workflow. Workflows are processed in
/// parallel; the report keeps input order.
pub fn build_dataset(workflows: &[Workflow], tok: &dyn Tokenizer, opts: &DatasetOptions) -> DatasetReport {
    let outcomes: Vec<Outcome> = workflows
        .par_iter()
        .map(|w| {
            if opts.language_filter.as_ref().is_some_and(|keep| !keep(w)) {
                return Outcome::Filtered;
            }
            let v = validate_workflow(w, &opts.prune);
            if !v.is_valid() {
                return Outcome::Rejected(v);
            }
            let (examples, skipped) = emit_training_examples(w, tok, opts);
            Outcome::Accepted { examples, skipped }
        })
        .collect();
    let mut report = DatasetReport::default();
    for (w, outcome) in workflows.iter().zip(outcomes) {
        match outcome {
            Outcome::Filtered => report.filtered.push(w.id.clone()),
            Outcome::Rejected(v) => report.rejected.push(v),
            Outcome::Accepted { examples, skipped } => {
                report.accepted.push(w.id.clone());
                report.accepted_steps += w.steps.len();
                report.uninformative.extend(
                    w.steps
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| is_uninformative(&s.description))
                        .map(|(i, _)| (w.id.clone(), i)),
                );
                report.examples.extend(examples);
                report.skipped_steps.extend(skipped);
            }
        }
    }
    report
}
