use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An action in the environment's element-id space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvAction {
    Click { id: String },
    Type { id: String, text: String },
    Press { keys: String },
    Scroll { down: bool },
    GoBack,
    Stop { answer: Option<String> },
}

impl EnvAction {
    /// The element this action targets, if any.
    pub fn element(&self) -> Option<&str> {
        match self {
            EnvAction::Click { id } | EnvAction::Type { id, .. } => Some(id),
            _ => None,
        }
    }

    /// Parses `click [id]`, `type [id] [text]`, `press [keys]`, `scroll [down|up]`,
    /// `go_back` or `stop [answer]` from the first line that starts with one.
    pub fn parse(text: &str) -> Option<EnvAction> {
        text.lines().find_map(|l| parse_line(l.trim().trim_matches(|c| c == '`' || c == '"')))
    }
}

fn bracket(s: &str) -> Option<(&str, &str)> {
    let open = s.find('[')?;
    let close = open + s[open..].find(']')?;
    Some((&s[open + 1..close], &s[close + 1..]))
}

fn outer_bracket(s: &str) -> Option<&str> {
    let open = s.find('[')?;
    let close = s.rfind(']')?;
    (close > open).then(|| &s[open + 1..close])
}

fn parse_line(line: &str) -> Option<EnvAction> {
    let end = line.find(|c: char| c.is_whitespace() || c == '[').unwrap_or(line.len());
    let (word, rest) = line.split_at(end);
    match word.to_ascii_lowercase().as_str() {
        "click" => {
            let (id, _) = bracket(rest)?;
            Some(EnvAction::Click { id: id.trim().to_string() })
        }
        "type" => {
            let (id, after) = bracket(rest)?;
            Some(EnvAction::Type {
                id: id.trim().to_string(),
                text: outer_bracket(after)?.to_string(),
            })
        }
        "press" => Some(EnvAction::Press {
            keys: outer_bracket(rest)?.trim().to_string(),
        }),
        "scroll" => match bracket(rest)?.0.trim().to_ascii_lowercase().as_str() {
            "down" => Some(EnvAction::Scroll { down: true }),
            "up" => Some(EnvAction::Scroll { down: false }),
            _ => None,
        },
        "go_back" => Some(EnvAction::GoBack),
        "stop" => Some(EnvAction::Stop {
            answer: outer_bracket(rest).map(|a| a.trim().to_string()).filter(|a| !a.is_empty()),
        }),
        _ => None,
    }
}

impl fmt::Display for EnvAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvAction::Click { id } => write!(f, "click [{id}]"),
            EnvAction::Type { id, text } => write!(f, "type [{id}] [{text}]"),
            EnvAction::Press { keys } => write!(f, "press [{keys}]"),
            EnvAction::Scroll { down } => write!(f, "scroll [{}]", if *down { "down" } else { "up" }),
            EnvAction::GoBack => f.write_str("go_back"),
            EnvAction::Stop { answer: Some(a) } => write!(f, "stop [{a}]"),
            EnvAction::Stop { answer: None } => f.write_str("stop"),
        }
    }
}

/// The visible window of the page, in page pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewport {
    pub top: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

/// Prepends whole-viewport scrolls so that `bbox` comes into view.
///
/// Below the viewport, scrolls until the box's bottom edge is visible:
/// `ceil((y + h - top - height) / height)`. Above, until its top edge is:
/// `ceil((top - y) / height)`.
pub fn viewport_guard(action: EnvAction, bbox: BBox, vp: Viewport) -> Vec<EnvAction> {
    assert!(vp.height > 0.0, "viewport height must be positive");
    let bottom = vp.top + vp.height;
    let (n, down) = if bbox.y + bbox.h > bottom {
        (((bbox.y + bbox.h - bottom) / vp.height).ceil() as usize, true)
    } else if bbox.y < vp.top {
        (((vp.top - bbox.y) / vp.height).ceil() as usize, false)
    } else {
        (0, true)
    };
    let mut out = vec![EnvAction::Scroll { down }; n];
    out.push(action);
    out
}

/// What the environment shows the agent at one step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub url: String,
    pub html: String,
    #[serde(default)]
    pub accessibility_tree: String,
    #[serde(default)]
    pub viewport: Option<Viewport>,
    /// Bounding boxes keyed by environment element id.
    #[serde(default)]
    pub boxes: HashMap<String, BBox>,
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment: {0}")]
    Failed(String),
}

/// The browser side of the loop.
pub trait Environment {
    fn observe(&mut self) -> Result<Observation, EnvError>;
    fn execute(&mut self, action: &EnvAction) -> Result<(), EnvError>;
}

/// Plays back recorded observations: each non-scroll action advances to the next one.
#[derive(Debug, Clone, Default)]
pub struct ReplayEnvironment {
    pages: Vec<Observation>,
    cursor: usize,
    executed: Vec<EnvAction>,
}

impl ReplayEnvironment {
    pub fn new(pages: Vec<Observation>) -> Self {
        ReplayEnvironment {
            pages,
            cursor: 0,
            executed: Vec::new(),
        }
    }

    pub fn executed(&self) -> &[EnvAction] {
        &self.executed
    }
}

impl Environment for ReplayEnvironment {
    fn observe(&mut self) -> Result<Observation, EnvError> {
        self.pages
            .get(self.cursor.min(self.pages.len().saturating_sub(1)))
            .cloned()
            .ok_or_else(|| EnvError::Failed("no recorded pages".into()))
    }

    fn execute(&mut self, action: &EnvAction) -> Result<(), EnvError> {
        self.executed.push(action.clone());
        if !matches!(action, EnvAction::Scroll { .. }) {
            self.cursor += 1;
        }
        Ok(())
    }
}
