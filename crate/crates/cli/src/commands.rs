use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use domstep::agent::{
    prepare_observation, rank_candidates, run_pipeline, sample_actions, AgentError, ChatClient,
    CompletionClient, EndpointConfig, GenParams, Observation, PipelineConfig, PromptTemplates,
    ReplayEnvironment, ScriptedClient, Task,
};
use domstep::dom::{assign_node_ids, parse_html, prune, PruneConfig};
use domstep::eval::{evaluate, EvalOptions, GoldRecord, PredictionRecord, RankRecord};
use domstep::jsonl::{read_jsonl, write_jsonl};
use domstep::tokenizer::{analyze_pruning, load_tokenizer, prune_attributes_by_ratio, Tokenizer, Wordlist};
use domstep::workflow::{build_dataset, build_prompt, format_action, load_workflows, parse_action, Action, Budget, DatasetOptions};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::FileConfig;
use crate::{usage, AnalyzeArgs, DatasetArgs, EndpointArgs, EvalArgs, Mode, PreprocessArgs, PruneArgs, RunArgs, StepArgs};

struct Pruning {
    config: PruneConfig,
    tokenizer: Option<Box<dyn Tokenizer>>,
}

impl Pruning {
    fn setup(args: &PruneArgs, file: &FileConfig) -> Result<Self> {
        let spec = args.tokenizer.clone().or_else(|| file.tokenizer.clone());
        let threshold = args.threshold.or(file.threshold);
        if threshold.is_some() && spec.is_none() {
            return Err(usage("--threshold needs --tokenizer"));
        }
        let base = match args.whitelist.as_ref().or(file.whitelist.as_ref()) {
            Some(p) => {
                let text = read(p)?;
                PruneConfig::from_whitelist(&text).with_context(|| format!("whitelist {}", p.display()))?
            }
            None => PruneConfig::default(),
        };
        let config = base
            .with_ratio(
                threshold.unwrap_or(PruneConfig::DEFAULT_RATIO_THRESHOLD),
                args.min_len.or(file.min_len).unwrap_or(PruneConfig::DEFAULT_RATIO_MIN_LEN),
            )
            .map_err(|e| usage(e.to_string()))?;
        let tokenizer = spec
            .map(|s| load_tokenizer(&s).with_context(|| format!("tokenizer {s}")))
            .transpose()?;
        Ok(Pruning { config, tokenizer })
    }

    /// The configured tokenizer, or whitespace splitting.
    fn tokenizer_or_default(&self) -> &dyn Tokenizer {
        self.tokenizer.as_deref().unwrap_or(&domstep::tokenizer::WhitespaceTokenizer)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn preprocess_html(text: &str, p: &Pruning) -> String {
    let pruned = prune(&parse_html(text), &p.config);
    let pruned = match &p.tokenizer {
        Some(tok) => prune_attributes_by_ratio(&pruned, tok.as_ref(), &p.config),
        None => pruned,
    };
    assign_node_ids(&pruned).serialize()
}

pub fn preprocess(args: PreprocessArgs, file: &FileConfig) -> Result<()> {
    let p = Pruning::setup(&args.prune, file)?;
    if args.input.len() > 1 && args.out_dir.is_none() {
        return Err(usage("several --in files need --out-dir"));
    }
    let outputs: Vec<Result<String>> = args
        .input
        .par_iter()
        .map(|path| Ok(preprocess_html(&read(path)?, &p)))
        .collect();
    match (&args.out_dir, &args.out) {
        (Some(dir), _) => {
            std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
            for (path, html) in args.input.iter().zip(outputs) {
                let name = path.file_name().context("input has no file name")?;
                let target = dir.join(name);
                std::fs::write(&target, html?).with_context(|| format!("cannot write {}", target.display()))?;
            }
        }
        (None, Some(out)) => {
            let html = outputs.into_iter().next().expect("one input")?;
            std::fs::write(out, html).with_context(|| format!("cannot write {}", out.display()))?;
        }
        (None, None) => {
            let html = outputs.into_iter().next().expect("one input")?;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(html.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn html_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("cannot list {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "html" || x == "htm"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

pub fn analyze(args: AnalyzeArgs, file: &FileConfig) -> Result<()> {
    let p = Pruning::setup(&args.prune, file)?;
    let Some(tok) = p.tokenizer.as_deref() else {
        return Err(usage("analyze needs --tokenizer"));
    };
    if let Some(t) = args.thresholds.iter().find(|t| !(**t >= 1.0)) {
        return Err(usage(format!("threshold {t} is below 1")));
    }
    let files = html_files(&args.corpus)?;
    if files.is_empty() {
        bail!("no HTML files in the corpus");
    }
    let trees = files
        .par_iter()
        .map(|f| Ok(prune(&parse_html(&read(f)?), &p.config)))
        .collect::<Result<Vec<_>>>()?;
    let wordlist = match &args.wordlist {
        Some(w) => Wordlist::from_text(&read(w)?),
        None => Wordlist::bundled(),
    };
    let reports = analyze_pruning(&trees, tok, &args.thresholds, &wordlist, p.config.ratio_min_len)?;
    println!("{} documents, tokenizer {}", trees.len(), tok.name());
    println!(
        "{:>9}  {:>7}  {:>7}  {:>13}  {:>12}  {:>6}  top pair",
        "threshold", "pruned", "fp rate", "tokens before", "tokens after", "saved"
    );
    for r in &reports {
        let top = r
            .pruned_pairs
            .first()
            .map_or("-".to_string(), |(t, a, n)| format!("{t}.{a} ({n})"));
        println!(
            "{:>9.2}  {:>7}  {:>6.1}%  {:>13}  {:>12}  {:>6}  {top}",
            r.threshold,
            r.pruned_values,
            100.0 * r.false_positive_rate,
            r.tokens_before,
            r.tokens_after,
            r.tokens_saved()
        );
    }
    if let Some(path) = &args.json {
        write_json(path, &reports)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct DatasetSummary<'a> {
    #[serde(flatten)]
    report: &'a domstep::workflow::DatasetReport,
    malformed_lines: &'a [domstep::workflow::RejectedLine],
    examples: usize,
}

pub fn dataset(args: DatasetArgs, file: &FileConfig) -> Result<()> {
    let p = Pruning::setup(&args.prune, file)?;
    let loaded = load_workflows(&args.workflows)?;
    for r in &loaded.rejects {
        eprintln!("warning: {} line {}: {}", args.workflows.display(), r.line, r.reason);
    }
    let budget = match args.budget.or(file.budget) {
        Some(0) => return Err(usage("--budget must be positive")),
        Some(n) => Budget::Tokens(n),
        None => Budget::ContextWindow(args.context_window.or(file.context_window).unwrap_or(32_768)),
    };
    let opts = DatasetOptions {
        prune: p.config.clone(),
        ratio_prune: !args.no_ratio_prune,
        budget,
        language_filter: None,
    };
    let report = build_dataset(&loaded.workflows, p.tokenizer_or_default(), &opts);
    let mut out = create(&args.out)?;
    write_jsonl(&mut out, &report.examples)?;
    out.flush()?;

    println!(
        "accepted {} of {} workflows ({} steps); wrote {} examples to {}",
        report.accepted.len(),
        loaded.workflows.len(),
        report.accepted_steps,
        report.examples.len(),
        args.out.display()
    );
    for v in &report.rejected {
        for f in &v.failures {
            println!("rejected {}: step {} selector {:?}: {}", v.workflow_id, f.step_index, f.selector, f.reason);
        }
    }
    for s in &report.skipped_steps {
        println!("skipped {} step {}: {}", s.workflow_id, s.step_index, s.reason);
    }
    if !report.uninformative.is_empty() {
        println!("{} steps have descriptions shorter than three words", report.uninformative.len());
    }
    if let Some(path) = &args.report {
        let summary = DatasetSummary {
            report: &report,
            malformed_lines: &loaded.rejects,
            examples: report.examples.len(),
        };
        write_json(path, &summary)?;
    }
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let gold: Vec<GoldRecord> = read_jsonl(&args.gold)?;
    let preds: Vec<PredictionRecord> = read_jsonl(&args.pred)?;
    let ranks: Option<Vec<RankRecord>> = args.ranks.as_deref().map(read_jsonl).transpose()?;
    let opts = EvalOptions {
        refined: args.mode == Mode::Refined,
        backend_attr: args.backend_attr.clone(),
    };
    let (report, outcomes) = evaluate(&gold, &preds, ranks.as_deref(), &opts)?;
    print!("{}", report.to_table());
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    if let Some(path) = &args.outcomes {
        let mut w = create(path)?;
        write_jsonl(&mut w, &outcomes)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct MockLine {
    #[serde(default)]
    stage: Option<String>,
    completion: String,
}

/// Completions from a transcript, split into action-model and planner replies.
fn mock_clients(path: &Path) -> Result<(ScriptedClient, ScriptedClient)> {
    let lines: Vec<MockLine> = read_jsonl(path)?;
    let (agent, planner): (Vec<MockLine>, Vec<MockLine>) = lines
        .into_iter()
        .partition(|l| l.stage.as_deref().is_none_or(|s| s == "generate"));
    Ok((
        ScriptedClient::new(agent.into_iter().map(|l| l.completion)),
        ScriptedClient::new(planner.into_iter().map(|l| l.completion)),
    ))
}

fn gen_params(e: &EndpointArgs, file: &FileConfig) -> Result<GenParams> {
    let d = GenParams::default();
    let params = GenParams {
        temperature: e.temperature.or(file.temperature).unwrap_or(d.temperature),
        top_p: e.top_p.or(file.top_p).unwrap_or(d.top_p),
        n_samples: e.samples.or(file.samples).unwrap_or(d.n_samples),
        max_new_tokens: e.max_new_tokens.or(file.max_new_tokens).unwrap_or(d.max_new_tokens),
        seed: Some(e.seed.or(file.seed).unwrap_or(0)),
    };
    params.validate().map_err(|e| usage(e.to_string()))?;
    log::info!("sampling seed {}", params.seed.unwrap_or_default());
    Ok(params)
}

fn endpoint(e: &EndpointArgs, file: &FileConfig, base_url: Option<&str>, model: Option<&str>) -> EndpointConfig {
    let d = EndpointConfig::default();
    EndpointConfig {
        base_url: base_url
            .map(str::to_string)
            .or_else(|| e.base_url.clone())
            .or_else(|| file.base_url.clone())
            .unwrap_or(d.base_url.clone()),
        model: model
            .map(str::to_string)
            .or_else(|| e.model.clone())
            .or_else(|| file.model.clone())
            .unwrap_or(d.model.clone()),
        api_key_env: e.api_key_env.clone().or_else(|| file.api_key_env.clone()).unwrap_or(d.api_key_env.clone()),
        ..d
    }
}

fn split_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut cur = String::new();
    for line in text.lines() {
        let t = line.trim();
        let is_index = t.strip_suffix('.').is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
        if is_index && !cur.trim().is_empty() {
            blocks.push(std::mem::take(&mut cur));
        }
        cur.push_str(line);
        cur.push('\n');
    }
    if !cur.trim().is_empty() {
        blocks.push(cur);
    }
    blocks
}

#[derive(Serialize)]
struct Candidate {
    action: String,
    votes: usize,
}

#[derive(Serialize)]
struct Vote {
    action: String,
    node: u32,
    votes: usize,
    samples: usize,
    seed: Option<u64>,
    candidates: Vec<Candidate>,
}

pub fn agent_step(args: StepArgs, file: &FileConfig) -> Result<()> {
    let p = Pruning::setup(&args.prune, file)?;
    let params = gen_params(&args.endpoint, file)?;
    let client: Box<dyn CompletionClient> = match &args.endpoint.mock {
        Some(path) => Box::new(mock_clients(path)?.0),
        None => Box::new(ChatClient::new(endpoint(&args.endpoint, file, None, None))),
    };
    let history: Vec<Action> = match &args.history {
        Some(path) => split_blocks(&read(path)?)
            .iter()
            .enumerate()
            .map(|(i, b)| parse_action(b).with_context(|| format!("history block {}", i + 1)))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    let budget = args.endpoint.budget.or(file.budget).unwrap_or(32_000);
    let (dom, chunks) = prepare_observation(
        &read(&args.html)?,
        p.tokenizer_or_default(),
        &p.config,
        p.tokenizer.is_some(),
        budget,
    )?;
    let mut pooled = Vec::new();
    let mut samples = 0;
    for chunk in &chunks {
        let prompt = build_prompt(&args.objective, &args.url, chunk, &history);
        samples += params.n_samples;
        match sample_actions(client.as_ref(), &prompt, &dom, &params) {
            Ok(actions) => pooled.extend(actions),
            Err(AgentError::NoValidAction { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let ranked = rank_candidates(&pooled);
    let Some((mut best, votes)) = ranked.first().cloned() else {
        bail!("none of {samples} samples was a valid action");
    };
    best.index = history.len() as u32 + 1;
    if args.json {
        let vote = Vote {
            action: format_action(&best),
            node: best.node,
            votes,
            samples,
            seed: params.seed,
            candidates: ranked
                .iter()
                .map(|(a, n)| Candidate {
                    action: format_action(a),
                    votes: *n,
                })
                .collect(),
        };
        println!("{}", serde_json::to_string_pretty(&vote)?);
    } else {
        print!("{}", format_action(&best));
    }
    Ok(())
}

pub fn agent_run(args: RunArgs, file: &FileConfig) -> Result<()> {
    let p = Pruning::setup(&args.prune, file)?;
    let params = gen_params(&args.endpoint, file)?;
    let task: Task = serde_json::from_str(&read(&args.task)?).with_context(|| format!("task {}", args.task.display()))?;
    let pages: Vec<Observation> = read_jsonl(&args.pages)?;
    if pages.is_empty() {
        bail!("{} has no pages", args.pages.display());
    }
    let (agent, planner): (Box<dyn CompletionClient>, Box<dyn CompletionClient>) = match &args.endpoint.mock {
        Some(path) => {
            let (a, p) = mock_clients(path)?;
            (Box::new(a), Box::new(p))
        }
        None => {
            let planner_url = args.planner_base_url.clone().or_else(|| file.planner_base_url.clone());
            let planner_model = args.planner_model.clone().or_else(|| file.planner_model.clone());
            (
                Box::new(ChatClient::new(endpoint(&args.endpoint, file, None, None))),
                Box::new(ChatClient::new(endpoint(
                    &args.endpoint,
                    file,
                    planner_url.as_deref(),
                    planner_model.as_deref(),
                ))),
            )
        }
    };
    let templates = match args.templates.as_ref().or(file.templates.as_ref()) {
        Some(dir) => PromptTemplates::from_dir(dir)?,
        None => PromptTemplates::builtin(),
    };
    let config = PipelineConfig {
        params,
        max_steps: args.max_steps.or(file.max_steps).unwrap_or(30),
        select_top_k: args.select_top_k.or(file.select_top_k),
        prune: p.config.clone(),
        ratio_prune: p.tokenizer.is_some(),
        budget: args.endpoint.budget.or(file.budget).unwrap_or(32_000),
        ..PipelineConfig::default()
    };
    if config.max_steps == 0 {
        return Err(usage("--max-steps must be positive"));
    }
    let mut env = ReplayEnvironment::new(pages);
    let run = run_pipeline(
        &task,
        &mut env,
        agent.as_ref(),
        planner.as_ref(),
        &templates,
        p.tokenizer_or_default(),
        &config,
    )?;
    if let Some(path) = &args.transcript {
        let mut w = create(path)?;
        write_jsonl(&mut w, &run.transcript)?;
        w.flush()?;
    }
    println!("{}", serde_json::to_string_pretty(&run.state)?);
    Ok(())
}
