//! Workflow recordings: loading, validation, the five-line action format,
//! prompts and next-step training examples.

mod action;
mod dataset;

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dom::{assign_node_ids, parse_html, prune, PruneConfig, PrunedDom};
use crate::selector::{parse_selector, resolve_unique, SelectorError};
use crate::tokenizer::{prune_attributes_by_ratio, Tokenizer};

pub use action::{build_prompt, describe_step, format_action, parse_action, Action, ParseError};
pub use dataset::{
    build_dataset, emit_training_examples, is_uninformative, Budget, DatasetOptions,
    DatasetReport, LanguageFilter, SkippedStep, TrainingExample, GENERATION_RESERVE, MIN_BUDGET,
};

/// The action space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operation {
    #[serde(rename = "mouse_click_action")]
    MouseClick,
    #[serde(rename = "keyboard_sequence_action")]
    KeyboardSequence,
    #[serde(rename = "keyboard_combination_action")]
    KeyboardCombination,
}

impl Operation {
    pub const ALL: [Operation; 3] = [
        Operation::MouseClick,
        Operation::KeyboardSequence,
        Operation::KeyboardCombination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::MouseClick => "mouse_click_action",
            Operation::KeyboardSequence => "keyboard_sequence_action",
            Operation::KeyboardCombination => "keyboard_combination_action",
        }
    }

    pub fn parse(s: &str) -> Option<Operation> {
        Self::ALL.into_iter().find(|op| op.as_str() == s)
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub url: String,
    pub raw_html: String,
    #[serde(default)]
    pub description: String,
    pub op: Operation,
    pub selector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_combo: Option<String>,
}

impl Step {
    /// Typed text or key combination, whichever the operation uses.
    pub fn payload(&self) -> Option<&str> {
        match self.op {
            Operation::MouseClick => None,
            Operation::KeyboardSequence => self.text_input.as_deref(),
            Operation::KeyboardCombination => self.key_combo.as_deref(),
        }
    }

    fn check_payload(&self) -> Result<(), String> {
        let (text, combo) = (self.text_input.is_some(), self.key_combo.is_some());
        let ok = match self.op {
            Operation::MouseClick => !text && !combo,
            Operation::KeyboardSequence => text && !combo,
            Operation::KeyboardCombination => combo && !text,
        };
        if ok {
            Ok(())
        } else {
            Err(format!(
                "{} needs {}",
                self.op,
                match self.op {
                    Operation::MouseClick => "neither text_input nor key_combo",
                    Operation::KeyboardSequence => "text_input and no key_combo",
                    Operation::KeyboardCombination => "key_combo and no text_input",
                }
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub id: String,
    pub objective: String,
    #[serde(default)]
    pub domain: String,
    #[serde(default)]
    pub subdomain: String,
    pub steps: Vec<Step>,
}

impl Workflow {
    /// Structural checks that do not need the DOM.
    pub fn check(&self) -> Result<(), String> {
        if self.objective.trim().is_empty() {
            return Err("empty objective".into());
        }
        if self.steps.is_empty() {
            return Err("no steps".into());
        }
        for (i, s) in self.steps.iter().enumerate() {
            s.check_payload().map_err(|e| format!("step {i}: {e}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A workflows file line that could not be used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedWorkflows {
    pub workflows: Vec<Workflow>,
    pub rejects: Vec<RejectedLine>,
}

/// Reads a JSONL file with one workflow per line. Blank lines are skipped;
/// malformed records go to `rejects`.
pub fn load_workflows(path: &Path) -> Result<LoadedWorkflows, WorkflowError> {
    let io = |source| WorkflowError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::open(path).map_err(io)?;
    let mut out = LoadedWorkflows::default();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_workflow_line(&line) {
            Ok(w) => out.workflows.push(w),
            Err(reason) => out.rejects.push(RejectedLine { line: n + 1, reason }),
        }
    }
    Ok(out)
}

pub fn parse_workflow_line(line: &str) -> Result<Workflow, String> {
    let w: Workflow = serde_json::from_str(line).map_err(|e| e.to_string())?;
    w.check()?;
    Ok(w)
}

/// Why one step's selector does not identify its target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepFailure {
    pub step_index: usize,
    pub selector: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationResult {
    pub workflow_id: String,
    pub failures: Vec<StepFailure>,
}

impl ValidationResult {
    pub fn is_valid(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Valid iff every step's selector resolves to exactly one element of that
/// step's pruned DOM.
pub fn validate_workflow(w: &Workflow, config: &PruneConfig) -> ValidationResult {
    let failures = w
        .steps
        .iter()
        .enumerate()
        .filter_map(|(i, step)| {
            let pruned = prune(&parse_html(&step.raw_html), config);
            locate(&step.selector, &pruned).err().map(|e| StepFailure {
                step_index: i,
                selector: step.selector.clone(),
                reason: e.to_string(),
            })
        })
        .collect();
    ValidationResult {
        workflow_id: w.id.clone(),
        failures,
    }
}

fn locate(selector: &str, tree: &crate::dom::DomTree) -> Result<Vec<usize>, SelectorError> {
    resolve_unique(&parse_selector(selector)?, tree)
}

/// A step's observation and ground-truth target after preprocessing.
#[derive(Debug, Clone)]
pub struct PreparedStep {
    pub dom: PrunedDom,
    pub serialized: String,
    pub target: u32,
    pub action: Action,
}

/// Runs the preprocessing pipeline on one step and builds its action.
///
/// The selector is resolved on the whitelist-pruned tree before ratio pruning,
/// which only edits attributes, so the resolved path stays valid.
pub fn prepare_step(
    step: &Step,
    index: u32,
    config: &PruneConfig,
    ratio_tokenizer: Option<&dyn Tokenizer>,
) -> Result<PreparedStep, SelectorError> {
    let pruned = prune(&parse_html(&step.raw_html), config);
    let path = locate(&step.selector, &pruned)?;
    let pruned = match ratio_tokenizer {
        Some(tok) => prune_attributes_by_ratio(&pruned, tok, config),
        None => pruned,
    };
    let dom = assign_node_ids(&pruned);
    let target = dom.id_at(&path).expect("resolved path is an element");
    let description = describe_step(step.op, &step.description, step.payload());
    let tag = dom.opening_tag(target).expect("target id is indexed");
    let action = Action::new(index, &description, step.op, target, &tag);
    let serialized = dom.serialize();
    Ok(PreparedStep {
        dom,
        serialized,
        target,
        action,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(html: &str, selector: &str) -> Step {
        Step {
            url: "https://example.com/".into(),
            raw_html: html.into(),
            description: "Click it".into(),
            op: Operation::MouseClick,
            selector: selector.into(),
            text_input: None,
            key_combo: None,
        }
    }

    fn workflow(steps: Vec<Step>) -> Workflow {
        Workflow {
            id: "w".into(),
            objective: "Do a thing".into(),
            domain: String::new(),
            subdomain: String::new(),
            steps,
        }
    }

    #[test]
    fn operation_names() {
        for op in Operation::ALL {
            assert_eq!(Operation::parse(op.as_str()), Some(op));
            let json = serde_json::to_string(&op).unwrap();
            assert_eq!(json, format!("\"{op}\""));
        }
        assert_eq!(Operation::parse("click"), None);
    }

    #[test]
    fn validation() {
        let html = r#"<div class="a"><button id="go">Go</button><span class="d"></span><span class="d"></span></div>"#;
        let ok = workflow(vec![step(html, "#go"), step(html, "div.a")]);
        assert!(validate_workflow(&ok, &PruneConfig::default()).is_valid());
        let missing = workflow(vec![step(html, "#go"), step(html, "#nope")]);
        let r = validate_workflow(&missing, &PruneConfig::default());
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].step_index, 1);
        assert!(r.failures[0].reason.contains("no element"));
        let ambiguous = workflow(vec![step(html, "span.d")]);
        let r = validate_workflow(&ambiguous, &PruneConfig::default());
        assert_eq!(r.failures[0].step_index, 0);
        assert!(r.failures[0].reason.contains("matches 2"));
    }

    #[test]
    fn payload_invariants() {
        let mut s = step("<a></a>", "a");
        s.text_input = Some("x".into());
        assert!(workflow(vec![s.clone()]).check().is_err());
        s.op = Operation::KeyboardSequence;
        assert!(workflow(vec![s.clone()]).check().is_ok());
        s.key_combo = Some("ctrl+c".into());
        assert!(workflow(vec![s]).check().is_err());
        assert!(workflow(vec![]).check().is_err());
    }

    #[test]
    fn prepared_target_tag() {
        let html = r#"<html><body><nav><svg role="img" class="open-hamburger-icon" onclick="x()"></svg></nav></body></html>"#;
        let p = prepare_step(&step(html, "svg.open-hamburger-icon"), 1, &PruneConfig::default(), None).unwrap();
        assert_eq!(p.target, 0);
        assert_eq!(p.action.target, r#"<svg class="open-hamburger-icon" node="0" role="img">"#);
        assert!(p.serialized.contains(&p.action.target));
    }
}
