//! A three-step review-lookup task played against two mock endpoints.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use domstep::agent::mock::{MockRequest, MockResponse, MockServer};
use domstep::agent::{BBox, ChatClient, EndpointConfig, Observation, ReplayEnvironment, Task, Viewport};
use domstep::dom::{assign_node_ids, parse_html, prune, PruneConfig, PrunedDom};
use domstep::workflow::{format_action, Action, Operation};

pub const ANSWER: &str = "emma.lopez@gmail.com";

pub struct Page {
    pub url: String,
    pub html: String,
    /// `id` attribute of the element the agent should act on.
    pub target: &'static str,
    pub op: Operation,
    pub description: &'static str,
    pub env_action: &'static str,
    pub env_id: &'static str,
}

pub fn pages() -> Vec<Page> {
    let shell = |body: &str| {
        format!(
            r#"<html><head><title>Admin</title><script>var x = 1;</script></head><body><nav><a id="dashboard" href="/admin">DASHBOARD</a><a id="marketing" href="/admin/marketing">MARKETING</a></nav><main>{body}</main></body></html>"#
        )
    };
    vec![
        Page {
            url: "http://cms.test/admin".into(),
            html: shell("<h1>Dashboard</h1><p>Welcome back</p>"),
            target: "marketing",
            op: Operation::MouseClick,
            description: "Click \"MARKETING\" in the side bar",
            env_action: "click [108]",
            env_id: "108",
        },
        Page {
            url: "http://cms.test/admin/marketing".into(),
            html: shell(r#"<ul><li><a id="reviews" href="/admin/reviews">All Reviews</a></li><li><a id="pending" href="/admin/pending">Pending Reviews</a></li></ul>"#),
            target: "reviews",
            op: Operation::MouseClick,
            description: "Click \"All Reviews\"",
            env_action: "click [419]",
            env_id: "419",
        },
        Page {
            url: "http://cms.test/admin/reviews".into(),
            html: shell(r#"<form><input id="search" name="q" type="text" placeholder="Search by keyword"><button id="go">Search</button></form><p>42 records found</p>"#),
            target: "search",
            op: Operation::KeyboardSequence,
            description: "Type \"olivia\" in the search box",
            env_action: "type [4435] [olivia]",
            env_id: "4435",
        },
    ]
}

fn final_page() -> Observation {
    Observation {
        url: "http://cms.test/admin/reviews?q=olivia".into(),
        html: "<html><body><table><tr><td>Olivia zip jacket</td><td>emma.lopez@gmail.com</td><td>1 star</td></tr></table></body></html>".into(),
        accessibility_tree: "[5001] cell 'emma.lopez@gmail.com'".into(),
        ..Observation::default()
    }
}

pub fn observed_dom(html: &str) -> PrunedDom {
    assign_node_ids(&prune(&parse_html(html), &PruneConfig::default()))
}

/// The five-line block for `page`'s target in the preprocessed observation.
pub fn target_block(page: &Page) -> (Action, String) {
    let dom = observed_dom(&page.html);
    let node = dom.find_by_attr("id", page.target)[0];
    let action = Action::new(1, page.description, page.op, node, &dom.opening_tag(node).unwrap());
    let text = format_action(&action);
    (action, text)
}

/// Recorded pages; the search box on the third page sits below the fold.
pub fn environment() -> ReplayEnvironment {
    let mut obs: Vec<Observation> = pages()
        .iter()
        .map(|p| Observation {
            url: p.url.clone(),
            html: p.html.clone(),
            accessibility_tree: format!("[{}] element for #{}", p.env_id, p.target),
            viewport: Some(Viewport { top: 0.0, height: 800.0 }),
            boxes: HashMap::from([(p.env_id.to_string(), BBox { x: 10.0, y: 120.0, w: 80.0, h: 20.0 })]),
        })
        .collect();
    obs[2].boxes.insert("4435".into(), BBox { x: 10.0, y: 900.0, w: 300.0, h: 30.0 });
    obs.push(final_page());
    ReplayEnvironment::new(obs)
}

pub fn task() -> Task {
    Task {
        objective: "Show me the email address of the customer who is the most unhappy with Olivia zip jacket.".into(),
        domain: "an e-commerce admin panel".into(),
        slots: HashMap::new(),
    }
}

fn url_in(prompt: &str) -> &str {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.strip_prefix("URL: "))
        .unwrap_or_default()
}

/// Agent endpoint: three votes for the right block, one for a wrong node,
/// one unparseable reply, keyed by the request seed.
pub fn agent_server() -> MockServer {
    let blocks: HashMap<String, (String, String)> = pages()
        .iter()
        .map(|p| {
            let (right, _) = target_block(p);
            let mut wrong = right.clone();
            wrong.node = 0;
            wrong.target = "<a>".into();
            (p.url.clone(), (format_action(&right), format_action(&wrong)))
        })
        .collect();
    MockServer::start(move |req: &MockRequest| {
        let prompt = req.prompt().unwrap_or_default();
        let Some((right, wrong)) = blocks.get(url_in(&prompt)) else {
            return MockResponse::error(400, "unknown page");
        };
        let text = match req.seed().unwrap_or(0) % 5 {
            1 => wrong.clone(),
            3 => "I think you should click something.".into(),
            _ => right.clone(),
        };
        MockResponse::completion(&text)
    })
    .expect("agent mock")
}

/// Planner endpoint for refine, translate and check.
pub fn planner_server(checks_until_done: usize) -> (MockServer, Arc<AtomicUsize>) {
    let translations: HashMap<String, &'static str> =
        pages().iter().map(|p| (p.url.clone(), p.env_action)).collect();
    let checks = Arc::new(AtomicUsize::new(0));
    let counter = checks.clone();
    let server = MockServer::start(move |req: &MockRequest| {
        let prompt = req.prompt().unwrap_or_default();
        let reply = if prompt.starts_with("I have a simple task objective") {
            "Click MARKETING in the side bar, open All Reviews, search for olivia and return the email of the most negative review.".to_string()
        } else if prompt.contains("Your goal is to translate") {
            match translations.get(url_in(&prompt)) {
                Some(a) => a.to_string(),
                None => return MockResponse::error(400, "unknown page"),
            }
        } else if prompt.contains("You will decide whether") {
            let n = counter.fetch_add(1, Ordering::SeqCst) + 1;
            if n >= checks_until_done {
                format!("The only one-star review lists its author.\nSummary: completed, {ANSWER}")
            } else {
                "More steps are needed.\nSummary: incomplete".to_string()
            }
        } else {
            return MockResponse::error(400, "unexpected prompt");
        };
        MockResponse::completion(&reply)
    })
    .expect("planner mock");
    (server, checks)
}

pub fn client_config(server: &MockServer) -> EndpointConfig {
    EndpointConfig {
        base_url: server.base_url(),
        api_key_env: "DOMSTEP_TEST_UNSET_KEY".into(),
        backoff_ms: 1,
        timeout_secs: 10,
        ..EndpointConfig::default()
    }
}

pub fn client(server: &MockServer) -> ChatClient {
    ChatClient::new(client_config(server))
}
