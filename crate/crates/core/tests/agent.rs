mod common;

use std::sync::{Arc, Mutex};

use common::random::random_tree;
use common::scenario;
use domstep::agent::mock::{MockRequest, MockResponse, MockServer};
use domstep::agent::{
    majority_vote, run_pipeline, sample_actions, viewport_guard, AgentError, BBox, ChatClient,
    ClientError, CompletionClient, EndpointConfig, EnvAction, GenParams, PipelineConfig,
    PromptTemplates, ScriptedClient, Stage, Viewport,
};
use domstep::dom::{assign_node_ids, PrunedDom};
use domstep::tokenizer::WhitespaceTokenizer;
use domstep::workflow::{format_action, Action, Operation};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

fn config(server: &MockServer, key_env: &str) -> EndpointConfig {
    EndpointConfig {
        base_url: server.base_url(),
        api_key_env: key_env.into(),
        backoff_ms: 1,
        timeout_secs: 10,
        ..EndpointConfig::default()
    }
}

fn params(n: usize, seed: u64) -> GenParams {
    GenParams {
        n_samples: n,
        seed: Some(seed),
        ..GenParams::default()
    }
}

#[test]
fn fixed_reply_n_copies() {
    let server = MockServer::start(|_| MockResponse::completion("same")).unwrap();
    let client = ChatClient::new(config(&server, "DOMSTEP_TEST_NO_KEY"));
    let out = client.complete("hi", &params(5, 40)).unwrap();
    assert_eq!(out, vec!["same"; 5]);
    let reqs = server.requests();
    let mut seeds: Vec<u64> = reqs.iter().filter_map(MockRequest::seed).collect();
    seeds.sort();
    assert_eq!(seeds, vec![40, 41, 42, 43, 44]);
    let body = reqs[0].json().unwrap();
    assert_eq!(body["temperature"], 0.6);
    assert_eq!(body["top_p"], 0.95);
    assert_eq!(reqs[0].path, "/v1/chat/completions");
    assert!(reqs.iter().all(|r| r.header("authorization").is_none()));
}

#[test]
fn retries_after_two_server_errors() {
    let server = MockServer::scripted(vec![
        MockResponse::error(500, "boom"),
        MockResponse::error(503, "busy"),
        MockResponse::completion("ok"),
    ])
    .unwrap();
    let client = ChatClient::new(config(&server, "DOMSTEP_TEST_NO_KEY"));
    assert_eq!(client.complete("hi", &params(1, 0)).unwrap(), vec!["ok"]);
    assert_eq!(server.requests().len(), 3);

    let server = MockServer::scripted(vec![MockResponse::error(500, "boom"); 3]).unwrap();
    let client = ChatClient::new(config(&server, "DOMSTEP_TEST_NO_KEY"));
    match client.complete("hi", &params(1, 0)) {
        Err(ClientError::Transport { attempts: 3, message }) => assert!(message.contains("500"), "{message}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_credential_is_api_error() {
    std::env::set_var("DOMSTEP_TEST_BAD_KEY", "wrong");
    std::env::set_var("DOMSTEP_TEST_GOOD_KEY", "letmein");
    let server = MockServer::start(|r| match r.header("Authorization") {
        Some("Bearer letmein") => MockResponse::completion("hello"),
        _ => MockResponse::error(401, r#"{"error":"invalid api key"}"#),
    })
    .unwrap();
    let bad = ChatClient::new(config(&server, "DOMSTEP_TEST_BAD_KEY"));
    match bad.complete("hi", &params(1, 0)) {
        Err(ClientError::Api { status: 401, body }) => assert!(body.contains("invalid api key")),
        other => panic!("{other:?}"),
    }
    // Not retried.
    assert_eq!(server.requests().len(), 1);
    let good = ChatClient::new(config(&server, "DOMSTEP_TEST_GOOD_KEY"));
    assert_eq!(good.complete("hi", &params(1, 0)).unwrap(), vec!["hello"]);
}

#[test]
fn unreachable_endpoint_is_transport_error() {
    let server = MockServer::start(|_| MockResponse::completion("x")).unwrap();
    let url = server.base_url();
    drop(server);
    let client = ChatClient::new(EndpointConfig {
        base_url: url,
        backoff_ms: 1,
        ..EndpointConfig::default()
    });
    assert!(matches!(client.complete("hi", &params(1, 0)), Err(ClientError::Transport { attempts: 3, .. })));
}

fn small_dom() -> PrunedDom {
    assign_node_ids(&domstep::dom::parse_html(
        "<div><a>One</a><a>Two</a><button>Go</button></div>",
    ))
}

fn block(node: u32) -> String {
    format_action(&Action::new(1, "Click it", Operation::MouseClick, node, "<a>"))
}

#[test]
fn sample_filters_invalid() {
    let dom = small_dom();
    // Five completions: four parse, three name nodes of the DOM.
    let client = ScriptedClient::new([block(0), "garbage".into(), block(1), block(99), block(2)]);
    let got = sample_actions(&client, "p", &dom, &params(5, 0)).unwrap();
    assert_eq!(got.iter().map(|a| a.node).collect::<Vec<_>>(), vec![0, 1, 2]);

    let client = ScriptedClient::new(vec![block(1); 5]);
    assert_eq!(sample_actions(&client, "p", &dom, &params(5, 0)).unwrap().len(), 5);

    let client = ScriptedClient::new(vec!["nothing useful"; 5]);
    assert!(matches!(
        sample_actions(&client, "p", &dom, &params(5, 0)),
        Err(AgentError::NoValidAction { samples: 5 })
    ));
}

/// Draws a valid action on `dom` that differs from every action in `avoid`.
fn fresh_action(rng: &mut impl Rng, dom: &PrunedDom, avoid: &[Action]) -> Option<Action> {
    for _ in 0..50 {
        let node = rng.gen_range(0..dom.len() as u32);
        let (op, desc) = match rng.gen_range(0..3) {
            0 => (Operation::MouseClick, "Click the element".to_string()),
            1 => (Operation::KeyboardSequence, format!("Type \"q{}\"", rng.gen_range(0..3))),
            _ => (Operation::KeyboardCombination, "Press \"ctrl+a\"".to_string()),
        };
        let a = Action::new(1, &desc, op, node, &dom.opening_tag(node).unwrap());
        if avoid.iter().all(|b| b.key() != a.key()) {
            return Some(a);
        }
    }
    None
}

#[test]
fn planted_majority_wins_100_trials() {
    let current: Arc<Mutex<Vec<String>>> = Arc::default();
    let served = current.clone();
    let server = MockServer::start(move |r| {
        let replies = served.lock().unwrap();
        let i = r.seed().unwrap_or(0) as usize % 1000;
        MockResponse::completion(&replies[i])
    })
    .unwrap();
    let client = ChatClient::new(EndpointConfig {
        max_parallel: 8,
        ..config(&server, "DOMSTEP_TEST_NO_KEY")
    });
    let mut rng = StdRng::seed_from_u64(2024);
    let mut trials = 0;
    while trials < 100 {
        let dom = assign_node_ids(&random_tree(&mut rng, 30));
        let n = rng.gen_range(5..=9);
        let votes = rng.gen_range(n / 2 + 1..=n);
        let Some(planted) = fresh_action(&mut rng, &dom, &[]) else { continue };
        let mut replies = vec![format_action(&planted); votes];
        let mut others = vec![planted.clone()];
        while replies.len() < n {
            match rng.gen_range(0..3) {
                0 => replies.push("no idea".into()),
                1 => replies.push(format_action(&Action::new(1, "Click", Operation::MouseClick, dom.len() as u32 + 5, "<a>"))),
                _ => {
                    if let Some(a) = fresh_action(&mut rng, &dom, &others) {
                        replies.push(format_action(&a));
                        others.push(a);
                    }
                }
            }
        }
        replies.shuffle(&mut rng);
        *current.lock().unwrap() = replies;
        let actions = sample_actions(&client, "prompt", &dom, &params(n, 0)).unwrap();
        let voted = majority_vote(&actions).unwrap();
        assert_eq!(voted.key(), planted.key(), "trial {trials}");
        trials += 1;
    }
}

fn arb_action() -> impl Strategy<Value = (u32, u8)> {
    (0u32..4, 0u8..2)
}

proptest! {
    #[test]
    fn strict_majority_is_order_free(votes in proptest::collection::vec(arb_action(), 1..12), seed in any::<u64>()) {
        let acts: Vec<Action> = votes
            .iter()
            .map(|&(node, op)| {
                let op = if op == 0 { Operation::MouseClick } else { Operation::KeyboardCombination };
                let desc = if op == Operation::MouseClick { "Click" } else { "Press \"enter\"" };
                Action::new(1, desc, op, node, "<a>")
            })
            .collect();
        let winner = majority_vote(&acts).unwrap();
        let count = acts.iter().filter(|a| a.key() == winner.key()).count();
        let mut shuffled = acts.clone();
        shuffled.shuffle(&mut StdRng::seed_from_u64(seed));
        let again = majority_vote(&shuffled).unwrap();
        if 2 * count > acts.len() {
            prop_assert_eq!(again.key(), winner.key());
        }
        // The winner always has the top count.
        let best = acts.iter().map(|a| acts.iter().filter(|b| b.key() == a.key()).count()).max().unwrap();
        prop_assert_eq!(count, best);
    }

    #[test]
    fn guard_ends_with_action(y in -5000.0f64..5000.0, h in 0.0f64..2000.0, top in 0.0f64..3000.0, height in 1.0f64..1500.0) {
        let a = EnvAction::Click { id: "7".into() };
        let bbox = BBox { x: 0.0, y, w: 10.0, h };
        let vp = Viewport { top, height };
        let out = viewport_guard(a.clone(), bbox, vp);
        prop_assert_eq!(out.last(), Some(&a));
        let scrolls = &out[..out.len() - 1];
        let down = EnvAction::Scroll { down: true };
        let up = EnvAction::Scroll { down: false };
        prop_assert!(scrolls.iter().all(|s| *s == down || *s == up), "non-scroll before action");
        prop_assert!(scrolls.windows(2).all(|w| w[0] == w[1]));
        // Oracle: step one viewport at a time until the relevant edge is visible.
        let mut t = top;
        let mut n = 0;
        if y + h > top + height {
            while y + h > t + height { t += height; n += 1; }
            prop_assert!(scrolls.iter().all(|s| *s == down), "expected downward scrolls");
        } else if y < top {
            while y < t { t -= height; n += 1; }
            prop_assert!(scrolls.iter().all(|s| *s == up), "expected upward scrolls");
        }
        prop_assert_eq!(scrolls.len(), n);
    }
}

#[test]
fn scripted_three_step_task() {
    let agent = scenario::agent_server();
    let (planner, checks) = scenario::planner_server(3);
    let mut env = scenario::environment();
    let cfg = PipelineConfig {
        params: params(5, 0),
        max_steps: 10,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(
        &scenario::task(),
        &mut env,
        &scenario::client(&agent),
        &scenario::client(&planner),
        &PromptTemplates::builtin(),
        &WhitespaceTokenizer,
        &cfg,
    )
    .unwrap();
    let state = &run.state;
    assert!(state.done);
    assert_eq!(state.answer.as_deref(), Some(scenario::ANSWER));
    assert_eq!(state.stage, Stage::Check);
    assert_eq!(state.history.len(), 3);
    assert!(state.refined_objective.starts_with("Click MARKETING"));
    for (a, page) in state.history.iter().zip(scenario::pages()) {
        assert_eq!(a.key(), scenario::target_block(&page).0.key());
    }
    assert_eq!(state.history[2].payload.as_deref(), Some("olivia"));
    let shown: Vec<String> = env.executed().iter().map(ToString::to_string).collect();
    assert_eq!(
        shown,
        ["click [108]", "click [419]", "scroll [down]", "type [4435] [olivia]", "stop [emma.lopez@gmail.com]"]
    );
    assert_eq!(state.env_actions, env.executed());
    assert_eq!(checks.load(std::sync::atomic::Ordering::SeqCst), 3);

    let stages: Vec<&str> = run.transcript.iter().map(|t| t.stage.as_str()).collect();
    let mut want = vec!["refine"];
    for _ in 0..3 {
        want.extend(["generate"; 5]);
        want.extend(["translate", "check"]);
    }
    assert_eq!(stages, want);
    assert!(run.transcript.iter().all(|t| t.prompt_hash.len() == 64));
    // Seeds 1 and 3 give a wrong node and an unparseable reply.
    let generated: Vec<bool> = run.transcript[1..6].iter().map(|t| t.action.is_some()).collect();
    assert_eq!(generated, [true, true, true, false, true]);
    assert_eq!(run.transcript.last().unwrap().action.as_deref(), Some("completed, emma.lopez@gmail.com"));
}

#[test]
fn step_limit_stops_early() {
    let agent = scenario::agent_server();
    let (planner, _) = scenario::planner_server(3);
    let mut env = scenario::environment();
    let cfg = PipelineConfig {
        params: params(5, 0),
        max_steps: 1,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(
        &scenario::task(),
        &mut env,
        &scenario::client(&agent),
        &scenario::client(&planner),
        &PromptTemplates::builtin(),
        &WhitespaceTokenizer,
        &cfg,
    )
    .unwrap();
    assert!(!run.state.done);
    assert_eq!(run.state.answer, None);
    assert_eq!(run.state.history.len(), 1);
    assert!(run.state.reason.as_deref().unwrap().contains("step limit 1"));
}

#[test]
fn arbitration_picks_named_candidate() {
    let pages = scenario::pages();
    let (right, right_text) = scenario::target_block(&pages[0]);
    let mut other = right.clone();
    other.node = 0;
    let other_text = format_action(&other);
    let agent = ScriptedClient::new([right_text.clone(), right_text, other_text.clone(), other_text, "x".into()]);
    let planner = ScriptedClient::new(["Refined.", "2", "click [108]", "Summary: completed"]);
    let mut env = scenario::environment();
    let cfg = PipelineConfig {
        select_top_k: Some(3),
        ..PipelineConfig::default()
    };
    let run = run_pipeline(
        &scenario::task(),
        &mut env,
        &agent,
        &planner,
        &PromptTemplates::builtin(),
        &WhitespaceTokenizer,
        &cfg,
    )
    .unwrap();
    assert_eq!(run.state.history[0].node, 0);
    assert!(run.state.done);
    assert_eq!(run.state.answer, None);
    let select_prompt = &planner.prompts()[1];
    assert!(select_prompt.contains("No. 1:\n1.\nDescription:"));
    assert!(select_prompt.contains("No. 2:\n"));
    assert!(!select_prompt.contains("No. 3:"));
}

#[test]
fn untranslatable_reply_is_an_error() {
    let pages = scenario::pages();
    let (_, text) = scenario::target_block(&pages[0]);
    let agent = ScriptedClient::new(vec![text; 5]);
    let planner = ScriptedClient::new(["Refined.", "I would click MARKETING"]);
    let err = run_pipeline(
        &scenario::task(),
        &mut scenario::environment(),
        &agent,
        &planner,
        &PromptTemplates::builtin(),
        &WhitespaceTokenizer,
        &PipelineConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, AgentError::Translate(_)), "{err}");
}
