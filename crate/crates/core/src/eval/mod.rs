//! Step judgments, EM / calibrated EM, Mind2Web-style metrics and the refined
//! evaluation helpers.

mod io;

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::dom::PrunedDom;
use crate::workflow::{Action, Operation};

pub use io::{
    evaluate, load_annotated_dom, EvalOptions, GoldRecord, PredictionRecord, RankRecord,
    StepOutcome,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("node {0} is not in the DOM")]
    UnknownNode(u32),
    #[error("{workflow_id} step {step_index}: {message}")]
    Record {
        workflow_id: String,
        step_index: usize,
        message: String,
    },
    #[error(transparent)]
    Jsonl(#[from] crate::jsonl::JsonlError),
}

/// How predictions are compared with gold targets.
#[derive(Debug, Clone, Copy)]
pub enum EvalMode<'a> {
    /// Node ids must be equal.
    Strict,
    /// Depth-2 subchild relaxation, tag+text attribute matching and the
    /// click-to-type adjustment, all against this DOM.
    Refined(&'a PrunedDom),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepJudgment {
    /// Predicted node equals the gold node.
    pub exact_match: bool,
    /// Exact in strict mode; relaxed in refined mode.
    pub element_correct: bool,
    pub op_correct: bool,
    pub action_f1: f64,
    /// The gold target is present in the observation the model saw.
    pub solvable: bool,
}

impl StepJudgment {
    /// A step with no usable prediction.
    pub fn missed(solvable: bool) -> Self {
        StepJudgment {
            exact_match: false,
            element_correct: false,
            op_correct: false,
            action_f1: 0.0,
            solvable,
        }
    }

    pub fn success(&self) -> bool {
        self.element_correct && self.op_correct
    }
}

/// Judges one predicted step. A step whose target is not in the observation is
/// never counted as element-correct, which keeps CEM ≥ EM.
pub fn judge_step(pred: &Action, gold: &Action, solvable: bool, mode: EvalMode<'_>) -> StepJudgment {
    let pred = match mode {
        EvalMode::Strict => pred.clone(),
        EvalMode::Refined(dom) => adjust_click_to_type(pred, dom),
    };
    let same_node = pred.node == gold.node;
    let element = match mode {
        EvalMode::Strict => same_node,
        EvalMode::Refined(dom) => {
            same_node
                || relax_labels(gold.node, dom).is_ok_and(|s| s.contains(&pred.node))
                || attribute_match(pred.node, gold.node, dom)
        }
    };
    let op_correct = pred.op == gold.op && (gold.op == Operation::MouseClick || pred.payload == gold.payload);
    StepJudgment {
        exact_match: solvable && same_node,
        element_correct: solvable && element,
        op_correct,
        action_f1: action_f1(&pred, gold),
        solvable,
    }
}

/// Token F1 over whitespace-split payloads; zero when the operations differ and
/// one when neither side has payload tokens.
pub fn action_f1(pred: &Action, gold: &Action) -> f64 {
    if pred.op != gold.op {
        return 0.0;
    }
    let tokens = |a: &Action| -> Vec<String> {
        a.payload
            .as_deref()
            .unwrap_or("")
            .split_whitespace()
            .map(str::to_string)
            .collect()
    };
    token_f1(&tokens(pred), &tokens(gold))
}

/// Multiset token F1. Empty against empty is 1.
pub fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() && gold.is_empty() {
        return 1.0;
    }
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for g in gold {
        *counts.entry(g.as_str()).or_default() += 1;
    }
    let mut common = 0;
    for p in pred {
        if let Some(c) = counts.get_mut(p.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Sums that merge associatively, so partial results can be combined in any grouping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EvalCounts {
    pub steps: usize,
    pub solvable_steps: usize,
    pub exact: usize,
    pub element_correct: usize,
    pub step_success: usize,
    pub f1_sum: f64,
    pub tasks: usize,
    pub task_success: usize,
}

impl EvalCounts {
    pub fn from_task(steps: &[StepJudgment]) -> Self {
        let mut c = EvalCounts::default();
        if steps.is_empty() {
            return c;
        }
        for s in steps {
            c.steps += 1;
            c.solvable_steps += usize::from(s.solvable);
            c.exact += usize::from(s.exact_match);
            c.element_correct += usize::from(s.element_correct);
            c.step_success += usize::from(s.success());
            c.f1_sum += s.action_f1;
        }
        c.tasks = 1;
        c.task_success = usize::from(steps.iter().all(StepJudgment::success));
        c
    }

    pub fn merge(self, o: Self) -> Self {
        EvalCounts {
            steps: self.steps + o.steps,
            solvable_steps: self.solvable_steps + o.solvable_steps,
            exact: self.exact + o.exact,
            element_correct: self.element_correct + o.element_correct,
            step_success: self.step_success + o.step_success,
            f1_sum: self.f1_sum + o.f1_sum,
            tasks: self.tasks + o.tasks,
            task_success: self.task_success + o.task_success,
        }
    }

    pub fn report(&self) -> Result<EvalReport, EvalError> {
        if self.steps == 0 {
            return Err(EvalError::Empty);
        }
        let n = self.steps as f64;
        Ok(EvalReport {
            em: self.exact as f64 / n,
            cem: (self.solvable_steps > 0)
                .then(|| self.exact as f64 / self.solvable_steps as f64),
            element_accuracy: self.element_correct as f64 / n,
            mean_action_f1: self.f1_sum / n,
            step_sr: self.step_success as f64 / n,
            task_sr: self.task_success as f64 / self.tasks as f64,
            counts: *self,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub em: f64,
    /// `None` when no step is solvable.
    pub cem: Option<f64>,
    pub element_accuracy: f64,
    pub mean_action_f1: f64,
    pub step_sr: f64,
    pub task_sr: f64,
    pub counts: EvalCounts,
}

impl EvalReport {
    /// Two aligned columns, one metric per row.
    pub fn to_table(&self) -> String {
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let rows = [
            ("EM", pct(self.em)),
            ("CEM", self.cem.map_or_else(|| "undefined".to_string(), pct)),
            ("Element accuracy", pct(self.element_accuracy)),
            ("Action F1", pct(self.mean_action_f1)),
            ("Step SR", pct(self.step_sr)),
            ("Task SR", pct(self.task_sr)),
            ("Steps", self.counts.steps.to_string()),
            ("Solvable steps", self.counts.solvable_steps.to_string()),
            ("Tasks", self.counts.tasks.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let vwidth = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v:>vwidth$}\n"));
        }
        out
    }
}

/// Aggregates judgments grouped by task.
pub fn aggregate(tasks: &[Vec<StepJudgment>]) -> Result<EvalReport, EvalError> {
    tasks
        .iter()
        .map(|t| EvalCounts::from_task(t))
        .fold(EvalCounts::default(), EvalCounts::merge)
        .report()
}

/// The gold node with its children and grandchildren.
pub fn relax_labels(gold: u32, dom: &PrunedDom) -> Result<BTreeSet<u32>, EvalError> {
    if !dom.contains(gold) {
        return Err(EvalError::UnknownNode(gold));
    }
    Ok(dom.descendants_within(gold, 2))
}

/// Same tag name and same whitespace-collapsed visible text.
pub fn attribute_match(pred: u32, gold: u32, dom: &PrunedDom) -> bool {
    match (dom.element(pred), dom.element(gold)) {
        (Some(p), Some(g)) => p.tag == g.tag && p.text_content() == g.text_content(),
        _ => false,
    }
}

/// Clicks on `input` or `textarea` become typing with an empty payload.
pub fn adjust_click_to_type(pred: &Action, dom: &PrunedDom) -> Action {
    let mut out = pred.clone();
    let is_field = dom
        .element(pred.node)
        .is_some_and(|e| e.tag == "input" || e.tag == "textarea");
    if pred.op == Operation::MouseClick && is_field {
        out.op = Operation::KeyboardSequence;
        out.payload = Some(String::new());
    }
    out
}

/// The first ranked element that is the generated node or one of its ancestors;
/// the generated node itself when none is.
pub fn multistage_remap(generated: u32, ranked: &[u32], dom: &PrunedDom) -> u32 {
    ranked
        .iter()
        .copied()
        .find(|&r| dom.is_descendant_or_self(generated, r))
        .unwrap_or(generated)
}
