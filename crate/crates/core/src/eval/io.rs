use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{aggregate, judge_step, multistage_remap, EvalError, EvalMode, EvalReport, StepJudgment};
use crate::dom::{assign_node_ids, parse_html, PrunedDom};
use crate::workflow::parse_action;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub workflow_id: String,
    pub step_index: usize,
    pub action_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub workflow_id: String,
    pub step_index: usize,
    pub action_text: String,
    /// Whether the target is in the observation the model saw.
    #[serde(default = "yes")]
    pub solvable: bool,
    /// Node-annotated observation, needed for refined mode and remapping.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dom: Option<String>,
}

fn yes() -> bool {
    true
}

/// Ranked candidates for one step, best first. Entries are node ids, or values of
/// [`EvalOptions::backend_attr`] when that is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRecord {
    pub workflow_id: String,
    pub step_index: usize,
    pub ranked: Vec<serde_json::Value>,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub refined: bool,
    /// Attribute holding the ranker's element ids, e.g. `backend_node_id`.
    pub backend_attr: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepOutcome {
    pub workflow_id: String,
    pub step_index: usize,
    pub predicted_node: Option<u32>,
    pub gold_node: u32,
    pub judgment: StepJudgment,
}

/// Rebuilds a [`PrunedDom`] from a serialization that carries `node` attributes,
/// checking that the attributes agree with the ids assigned on re-parse.
pub fn load_annotated_dom(html: &str) -> Result<PrunedDom, String> {
    let tree = parse_html(html);
    let pd = assign_node_ids(&tree);
    for (path, e) in tree.elements() {
        if let Some(v) = e.attr("node") {
            let assigned = pd.id_at(&path);
            if v.parse::<u32>().ok() != assigned {
                return Err(format!(
                    "element <{}> has node=\"{v}\" but is node {} in post-order",
                    e.tag,
                    assigned.map_or("?".into(), |a| a.to_string())
                ));
            }
        }
    }
    Ok(pd)
}

/// Judges every gold step against its prediction and aggregates by workflow.
///
/// Missing or unparseable predictions count as wrong. Tasks are ordered by first
/// appearance in `gold`, steps by index.
pub fn evaluate(
    gold: &[GoldRecord],
    predictions: &[PredictionRecord],
    ranks: Option<&[RankRecord]>,
    opts: &EvalOptions,
) -> Result<(EvalReport, Vec<StepOutcome>), EvalError> {
    let key = |w: &str, s: usize| (w.to_string(), s);
    let preds: HashMap<(String, usize), &PredictionRecord> = predictions
        .iter()
        .map(|p| (key(&p.workflow_id, p.step_index), p))
        .collect();
    let ranked: HashMap<(String, usize), &RankRecord> = ranks
        .unwrap_or_default()
        .iter()
        .map(|r| (key(&r.workflow_id, r.step_index), r))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut by_task: HashMap<String, Vec<StepOutcome>> = HashMap::new();
    for g in gold {
        let err = |message: String| EvalError::Record {
            workflow_id: g.workflow_id.clone(),
            step_index: g.step_index,
            message,
        };
        let gold_action = parse_action(&g.action_text).map_err(|e| err(format!("gold action: {e}")))?;
        let k = key(&g.workflow_id, g.step_index);
        let rank = ranked.get(&k);
        let dom = match &g.dom {
            Some(html) => Some(load_annotated_dom(html).map_err(err)?),
            None if opts.refined || rank.is_some() => {
                return Err(err("refined mode and remapping need the gold `dom`".into()))
            }
            None => None,
        };
        let mut predicted = preds.get(&k).and_then(|p| parse_action(&p.action_text).ok());
        if let (Some(p), Some(r), Some(dom)) = (predicted.as_mut(), rank, dom.as_ref()) {
            let ids = ranked_ids(r, dom, opts.backend_attr.as_deref()).map_err(err)?;
            p.node = multistage_remap(p.node, &ids, dom);
        }
        let mode = match (&dom, opts.refined) {
            (Some(d), true) => EvalMode::Refined(d),
            _ => EvalMode::Strict,
        };
        let judgment = match &predicted {
            Some(p) => judge_step(p, &gold_action, g.solvable, mode),
            None => StepJudgment::missed(g.solvable),
        };
        if !by_task.contains_key(&g.workflow_id) {
            order.push(g.workflow_id.clone());
        }
        by_task.entry(g.workflow_id.clone()).or_default().push(StepOutcome {
            workflow_id: g.workflow_id.clone(),
            step_index: g.step_index,
            predicted_node: predicted.map(|p| p.node),
            gold_node: gold_action.node,
            judgment,
        });
    }
    let mut outcomes = Vec::new();
    let mut tasks = Vec::new();
    for id in order {
        let mut steps = by_task.remove(&id).unwrap_or_default();
        steps.sort_by_key(|s| s.step_index);
        tasks.push(steps.iter().map(|s| s.judgment).collect::<Vec<_>>());
        outcomes.extend(steps);
    }
    Ok((aggregate(&tasks)?, outcomes))
}

fn ranked_ids(r: &RankRecord, dom: &PrunedDom, backend_attr: Option<&str>) -> Result<Vec<u32>, String> {
    let mut out = Vec::with_capacity(r.ranked.len());
    for v in &r.ranked {
        let text = match v {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Number(n) => n.to_string(),
            other => return Err(format!("ranked entry {other} is not an id")),
        };
        match backend_attr {
            // Unknown backend ids are skipped; the ranker may list pruned elements.
            Some(attr) => out.extend(dom.find_by_attr(attr, &text).first()),
            None => out.push(text.parse().map_err(|_| format!("ranked entry {text:?} is not a node id"))?),
        }
    }
    Ok(out)
}
