mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::FileConfig;

/// DOM preprocessing, next-step datasets, evaluation and agent runs for web-navigation models.
#[derive(Debug, Parser)]
#[command(name = "domstep", version)]
struct Cli {
    /// TOML file with default settings; command-line flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for per-file and per-workflow parallelism [default: all cores].
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Prune HTML pages and number their elements.
    Preprocess(PreprocessArgs),
    /// Report what the character-to-token ratio rule would prune at several thresholds.
    Analyze(AnalyzeArgs),
    /// Validate workflow recordings and write next-step training examples.
    Dataset(DatasetArgs),
    /// Score predicted actions against gold actions.
    Eval(EvalArgs),
    /// Query a model endpoint for actions.
    #[command(subcommand)]
    Agent(AgentCommand),
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    /// Tokenizer for the ratio rule and chunking: `whitespace`, `char`, or a tokenizer.json path.
    #[arg(long, value_name = "SPEC")]
    tokenizer: Option<String>,
    /// Prune long attribute values whose characters per token fall below this. Needs --tokenizer.
    #[arg(long, value_name = "R")]
    threshold: Option<f64>,
    /// Values of at most this many characters are never ratio-pruned [default: 32].
    #[arg(long, value_name = "N")]
    min_len: Option<usize>,
    /// Whitelist file replacing the bundled one.
    #[arg(long, value_name = "FILE")]
    whitelist: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Input HTML file(s).
    #[arg(long = "in", value_name = "FILE", required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// Output file for a single input [default: stdout].
    #[arg(long, value_name = "FILE", conflicts_with = "out_dir")]
    out: Option<PathBuf>,
    /// Output directory; required with several inputs. Files keep their names.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    prune: PruneArgs,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// HTML files or directories of `.html` files.
    #[arg(long, value_name = "PATH", required = true, num_args = 1..)]
    corpus: Vec<PathBuf>,
    /// Comma-separated thresholds.
    #[arg(long, value_delimiter = ',', default_value = "1.5,1.75,2,2.25,2.5")]
    thresholds: Vec<f64>,
    /// One word per line, for the false-positive estimate [default: bundled 10k list].
    #[arg(long, value_name = "FILE")]
    wordlist: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    #[command(flatten)]
    prune: PruneArgs,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    /// Workflows JSONL, one recording per line.
    #[arg(long, value_name = "FILE")]
    workflows: PathBuf,
    /// Training examples JSONL.
    #[arg(long, value_name = "FILE", default_value = "train.jsonl")]
    out: PathBuf,
    /// Fixed observation budget in tokens.
    #[arg(long, value_name = "N", conflicts_with = "context_window")]
    budget: Option<usize>,
    /// Model context window; the observation gets what the prompt leaves [default: 32768].
    #[arg(long, value_name = "N")]
    context_window: Option<usize>,
    /// Skip the character-to-token ratio rule.
    #[arg(long)]
    no_ratio_prune: bool,
    /// Write acceptance, rejection and skip details as JSON.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    #[command(flatten)]
    prune: PruneArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Strict,
    Refined,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Gold JSONL: workflow_id, step_index, action_text, optional solvable and dom.
    #[arg(long, value_name = "FILE")]
    gold: PathBuf,
    /// Predictions JSONL: workflow_id, step_index, action_text.
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Ranker output JSONL; remaps each prediction to its best-ranked ancestor.
    #[arg(long, value_name = "FILE")]
    ranks: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "strict")]
    mode: Mode,
    /// Attribute holding the ranker's element ids.
    #[arg(long, value_name = "NAME")]
    backend_attr: Option<String>,
    /// Write the report as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
    /// Write per-step judgments as JSONL.
    #[arg(long, value_name = "FILE")]
    outcomes: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum AgentCommand {
    /// Sample actions for one page and print the majority vote.
    Step(StepArgs),
    /// Run the refine / generate / translate / check loop over recorded pages.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct EndpointArgs {
    /// Chat-completions base URL of the action model.
    #[arg(long, value_name = "URL")]
    base_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the API key [default: OPENAI_API_KEY].
    #[arg(long, value_name = "VAR")]
    api_key_env: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_p: Option<f64>,
    /// Completions sampled per prompt [default: 5].
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    #[arg(long, value_name = "N")]
    max_new_tokens: Option<usize>,
    /// Base sampling seed; sample i uses seed + i [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Replay completions from a transcript JSONL instead of calling an endpoint.
    #[arg(long, value_name = "FILE")]
    mock: Option<PathBuf>,
    /// Observation budget per chunk, in tokens [default: 32000].
    #[arg(long, value_name = "N")]
    budget: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StepArgs {
    /// Raw HTML of the current page.
    #[arg(long, value_name = "FILE")]
    html: PathBuf,
    #[arg(long)]
    objective: String,
    #[arg(long, default_value = "")]
    url: String,
    /// Previous steps as five-line blocks.
    #[arg(long, value_name = "FILE")]
    history: Option<PathBuf>,
    /// Print the vote as JSON instead of the five-line block.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[command(flatten)]
    prune: PruneArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Task JSON: objective, domain, optional template slots.
    #[arg(long, value_name = "FILE")]
    task: PathBuf,
    /// Recorded observations JSONL: url, html, accessibility_tree, viewport, boxes.
    #[arg(long, value_name = "FILE")]
    pages: PathBuf,
    /// Planner base URL [default: the action model's].
    #[arg(long, value_name = "URL")]
    planner_base_url: Option<String>,
    #[arg(long)]
    planner_model: Option<String>,
    #[arg(long, value_name = "N")]
    max_steps: Option<usize>,
    /// Let the planner choose among the top K voted candidates.
    #[arg(long, value_name = "K")]
    select_top_k: Option<usize>,
    /// Directory with refine.txt, select.txt, translate.txt and check.txt.
    #[arg(long, value_name = "DIR")]
    templates: Option<PathBuf>,
    /// Write the call transcript as JSONL.
    #[arg(long, value_name = "FILE")]
    transcript: Option<PathBuf>,
    #[command(flatten)]
    endpoint: EndpointArgs,
    #[command(flatten)]
    prune: PruneArgs,
}

/// A problem with the invocation rather than the inputs; exits with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let jobs = cli.jobs.or(file.jobs);
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?;
    pool.install(|| match cli.command {
        Command::Preprocess(a) => commands::preprocess(a, &file),
        Command::Analyze(a) => commands::analyze(a, &file),
        Command::Dataset(a) => commands::dataset(a, &file),
        Command::Eval(a) => commands::eval(a),
        Command::Agent(AgentCommand::Step(a)) => commands::agent_step(a, &file),
        Command::Agent(AgentCommand::Run(a)) => commands::agent_run(a, &file),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<Usage>().is_some() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
