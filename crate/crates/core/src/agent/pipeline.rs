use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    parse_choice, rank_candidates, valid_action, viewport_guard, AgentError, CompletionClient,
    EnvAction, Environment, GenParams, Observation,
};
use crate::chunk::chunk_dom;
use crate::dom::{assign_node_ids, collapse_whitespace, parse_html, prune, PruneConfig, PrunedDom};
use crate::tokenizer::{prune_attributes_by_ratio, Tokenizer};
use crate::workflow::{build_prompt, format_action, Action};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Refine,
    Generate,
    Translate,
    Check,
}

/// Planner prompts for the refine, select, translate and check stages.
/// `{name}` slots are filled from [`Task::slots`]; unknown slots become empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub refine: String,
    pub select: String,
    pub translate: String,
    pub check: String,
}

const NAMES: [&str; 4] = ["refine", "select", "translate", "check"];

impl PromptTemplates {
    pub fn builtin() -> Self {
        PromptTemplates {
            refine: include_str!("../../data/prompts/refine.txt").into(),
            select: include_str!("../../data/prompts/select.txt").into(),
            translate: include_str!("../../data/prompts/translate.txt").into(),
            check: include_str!("../../data/prompts/check.txt").into(),
        }
    }

    /// Reads `refine.txt`, `select.txt`, `translate.txt` and `check.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, AgentError> {
        let mut texts = NAMES.iter().map(|n| {
            let p = dir.join(format!("{n}.txt"));
            std::fs::read_to_string(&p).map_err(|e| AgentError::Templates(format!("{}: {e}", p.display())))
        });
        let mut next = || texts.next().expect("four names");
        Ok(PromptTemplates {
            refine: next()?,
            select: next()?,
            translate: next()?,
            check: next()?,
        })
    }

    pub fn fill(template: &str, slots: &HashMap<String, String>) -> String {
        let mut out = String::with_capacity(template.len());
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find(['{', '}']) {
                Some(close) if after.as_bytes()[close] == b'}' => {
                    let key = &after[..close];
                    out.push_str(slots.get(key).map_or("", String::as_str));
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub objective: String,
    #[serde(default)]
    pub domain: String,
    /// Template slot values, e.g. in-context demonstrations. `domain` is added automatically.
    #[serde(default)]
    pub slots: HashMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub params: GenParams,
    pub planner_params: GenParams,
    pub max_steps: usize,
    /// Ask the planner to pick among this many top-voted candidates. Off when `None`.
    pub select_top_k: Option<usize>,
    pub prune: PruneConfig,
    pub ratio_prune: bool,
    /// Observation budget per chunk, in tokens.
    pub budget: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            params: GenParams::default(),
            planner_params: GenParams {
                temperature: 0.0,
                top_p: 1.0,
                n_samples: 1,
                max_new_tokens: 512,
                seed: None,
            },
            max_steps: 30,
            select_top_k: None,
            prune: PruneConfig::default(),
            ratio_prune: true,
            budget: 32_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineState {
    pub stage: Stage,
    pub objective: String,
    pub refined_objective: String,
    pub history: Vec<Action>,
    /// Everything sent to the environment, including inserted scrolls.
    pub env_actions: Vec<EnvAction>,
    pub done: bool,
    pub answer: Option<String>,
    /// Why the run stopped without finishing.
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    /// `refine`, `generate`, `select`, `translate` or `check`.
    pub stage: String,
    pub prompt_hash: String,
    pub completion: String,
    pub action: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineRun {
    pub state: PipelineState,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckVerdict {
    Completed(Option<String>),
    Incomplete,
}

/// Reads the verdict from the last `Summary:` line.
pub fn parse_check(completion: &str) -> Option<CheckVerdict> {
    let line = completion.lines().rev().find(|l| l.contains("Summary:"))?;
    let text = line.split("Summary:").last()?;
    let text = text.trim().trim_matches(|c: char| c == '*' || c == '"' || c == '`').trim();
    let lower = text.to_ascii_lowercase();
    if lower.starts_with("incomplete") {
        return Some(CheckVerdict::Incomplete);
    }
    let rest = text.get("completed".len()..).filter(|_| lower.starts_with("completed"))?;
    let answer = rest
        .trim_start_matches([',', ':'])
        .trim()
        .trim_end_matches('.')
        .trim_matches(|c: char| c == '[' || c == ']' || c == '"')
        .trim();
    Some(CheckVerdict::Completed((!answer.is_empty()).then(|| answer.to_string())))
}

/// Prunes, numbers and chunks a raw page the way training observations are built.
pub fn prepare_observation(
    html: &str,
    tok: &dyn Tokenizer,
    config: &PruneConfig,
    ratio_prune: bool,
    budget: usize,
) -> Result<(PrunedDom, Vec<String>), AgentError> {
    let pruned = prune(&parse_html(html), config);
    let pruned = if ratio_prune {
        prune_attributes_by_ratio(&pruned, tok, config)
    } else {
        pruned
    };
    let dom = assign_node_ids(&pruned);
    let chunks = chunk_dom(&dom.serialize(), tok, budget).map_err(|e| AgentError::Observation(e.to_string()))?;
    Ok((dom, chunks.into_iter().map(|c| c.text).collect()))
}

fn hash(prompt: &str) -> String {
    Sha256::digest(prompt.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn history_text(history: &[Action]) -> String {
    history.iter().map(format_action).collect()
}

struct Run<'a> {
    agent: &'a dyn CompletionClient,
    planner: &'a dyn CompletionClient,
    templates: &'a PromptTemplates,
    tok: &'a dyn Tokenizer,
    config: &'a PipelineConfig,
    slots: HashMap<String, String>,
    transcript: Vec<TranscriptEntry>,
}

impl Run<'_> {
    fn record(&mut self, stage: &str, prompt: &str, completion: &str, action: Option<String>) {
        self.transcript.push(TranscriptEntry {
            stage: stage.into(),
            prompt_hash: hash(prompt),
            completion: completion.into(),
            action,
        });
    }

    fn plan(&mut self, stage: &str, template: &str, case: &str) -> Result<String, AgentError> {
        let prompt = format!("{}\n{case}", PromptTemplates::fill(template, &self.slots).trim_end());
        let completion = self
            .planner
            .complete(&prompt, &self.config.planner_params.single())?
            .into_iter()
            .next()
            .unwrap_or_default();
        self.record(stage, &prompt, &completion, None);
        Ok(completion)
    }

    fn generate(&mut self, objective: &str, obs: &Observation, history: &[Action]) -> Result<Action, AgentError> {
        let (dom, chunks) = prepare_observation(&obs.html, self.tok, &self.config.prune, self.config.ratio_prune, self.config.budget)?;
        let mut pooled = Vec::new();
        let mut samples = 0;
        for chunk in &chunks {
            let prompt = build_prompt(objective, &obs.url, chunk, history);
            let completions = self.agent.complete(&prompt, &self.config.params)?;
            samples += completions.len();
            for c in completions {
                let a = valid_action(&c, &dom);
                self.record("generate", &prompt, &c, a.as_ref().map(format_action));
                pooled.extend(a);
            }
        }
        let ranked = rank_candidates(&pooled);
        let mut choice = match self.config.select_top_k {
            Some(k) if ranked.len() > 1 && k > 1 => {
                let top: Vec<&Action> = ranked.iter().take(k).map(|(a, _)| a).collect();
                let mut case = format!(
                    "Objective: {objective}\nURL: {}\nAccessibility tree: {}\nPrevious steps:\n{}Proposed next steps:\n",
                    obs.url,
                    obs.accessibility_tree,
                    history_text(history)
                );
                for (i, a) in top.iter().enumerate() {
                    case.push_str(&format!("No. {}:\n{}", i + 1, format_action(a)));
                }
                let templates = self.templates;
                let reply = self.plan("select", &templates.select, &case)?;
                let pick = parse_choice(&reply, top.len()).unwrap_or(1);
                top[pick - 1].clone()
            }
            _ => ranked
                .into_iter()
                .next()
                .map(|(a, _)| a)
                .ok_or(AgentError::NoValidAction { samples })?,
        };
        choice.index = history.len() as u32 + 1;
        Ok(choice)
    }
}

/// Refine once, then Generate → Translate → Check until the checker reports
/// completion or `max_steps` actions have been issued.
pub fn run_pipeline(
    task: &Task,
    env: &mut dyn Environment,
    agent: &dyn CompletionClient,
    planner: &dyn CompletionClient,
    templates: &PromptTemplates,
    tok: &dyn Tokenizer,
    config: &PipelineConfig,
) -> Result<PipelineRun, AgentError> {
    config.params.validate()?;
    let mut slots = task.slots.clone();
    slots.entry("domain".into()).or_insert_with(|| task.domain.clone());
    let mut run = Run {
        agent,
        planner,
        templates,
        tok,
        config,
        slots,
        transcript: Vec::new(),
    };
    let mut state = PipelineState {
        stage: Stage::Refine,
        objective: task.objective.clone(),
        refined_objective: String::new(),
        history: Vec::new(),
        env_actions: Vec::new(),
        done: false,
        answer: None,
        reason: None,
    };

    let refined = run.plan("refine", &templates.refine, &task.objective)?;
    state.refined_objective = match collapse_whitespace(&refined).trim() {
        "" => task.objective.clone(),
        r => r.to_string(),
    };

    while state.history.len() < config.max_steps {
        let obs = env.observe()?;
        state.stage = Stage::Generate;
        let action = run.generate(&state.refined_objective, &obs, &state.history)?;

        state.stage = Stage::Translate;
        let case = format!(
            "Objective: {}\nURL: {}\nHTML: {}\nAccessibility tree: {}\nPrevious steps:\n{}Proposed next step:\n{}",
            state.refined_objective,
            obs.url,
            action.target,
            obs.accessibility_tree,
            history_text(&state.history),
            format_action(&action)
        );
        let reply = run.plan("translate", &templates.translate, &case)?;
        let env_action = EnvAction::parse(&reply).ok_or_else(|| AgentError::Translate(reply.clone()))?;
        if let Some(last) = run.transcript.last_mut() {
            last.action = Some(env_action.to_string());
        }
        state.history.push(action);
        if let EnvAction::Stop { answer } = &env_action {
            env.execute(&env_action)?;
            state.env_actions.push(env_action.clone());
            state.done = true;
            state.answer = answer.clone();
            break;
        }
        let guarded = match (env_action.element().and_then(|id| obs.boxes.get(id)), obs.viewport) {
            (Some(&bbox), Some(vp)) => viewport_guard(env_action, bbox, vp),
            _ => vec![env_action],
        };
        for a in guarded {
            env.execute(&a)?;
            state.env_actions.push(a);
        }

        state.stage = Stage::Check;
        let now = env.observe()?;
        let case = format!(
            "Objective: {}\nDetailed objective: {}\nURL: {}\nAccessibility tree: {}\nPrevious steps:\n{}",
            state.objective,
            state.refined_objective,
            now.url,
            now.accessibility_tree,
            history_text(&state.history)
        );
        let reply = run.plan("check", &templates.check, &case)?;
        let verdict = parse_check(&reply);
        if let Some(last) = run.transcript.last_mut() {
            last.action = verdict.as_ref().map(|v| match v {
                CheckVerdict::Completed(Some(a)) => format!("completed, {a}"),
                CheckVerdict::Completed(None) => "completed".into(),
                CheckVerdict::Incomplete => "incomplete".into(),
            });
        }
        match verdict {
            Some(CheckVerdict::Completed(answer)) => {
                let stop = EnvAction::Stop { answer: answer.clone() };
                env.execute(&stop)?;
                state.env_actions.push(stop);
                state.done = true;
                state.answer = answer;
                break;
            }
            Some(CheckVerdict::Incomplete) => {}
            None => log::warn!("check reply has no Summary line; treating as incomplete"),
        }
    }
    if !state.done {
        state.reason = Some(format!("step limit {} reached", config.max_steps));
    }
    Ok(PipelineRun {
        state,
        transcript: run.transcript,
    })
}
