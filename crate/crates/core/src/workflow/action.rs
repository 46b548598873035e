use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Operation;

/// One five-line step: index, description, operation, node id and target tag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub index: u32,
    pub description: String,
    pub op: Operation,
    pub node: u32,
    pub target: String,
    /// Typed text or key combination. Recovered from the last double-quoted span
    /// of the description for keyboard operations; `None` for clicks.
    pub payload: Option<String>,
}

impl Action {
    /// Builds an action whose payload is derived from the description, exactly as
    /// [`parse_action`] would.
    pub fn new(index: u32, description: &str, op: Operation, node: u32, target: &str) -> Self {
        Action {
            index,
            description: description.to_string(),
            op,
            node,
            target: target.to_string(),
            payload: derive_payload(op, description),
        }
    }

    /// The `(op, node, payload)` identity used for voting and comparison.
    pub fn key(&self) -> (Operation, u32, Option<&str>) {
        (self.op, self.node, self.payload.as_deref())
    }
}

/// Description for a keyboard step: the recorded text with the payload appended
/// in double quotes unless it already ends with it.
pub fn describe_step(op: Operation, description: &str, payload: Option<&str>) -> String {
    let description = description.trim();
    let Some(payload) = payload else {
        return description.to_string();
    };
    let quoted = format!("\"{payload}\"");
    if description.is_empty() {
        let verb = match op {
            Operation::KeyboardCombination => "Press",
            _ => "Type",
        };
        format!("{verb} {quoted}")
    } else if description.ends_with(&quoted) {
        description.to_string()
    } else {
        format!("{description} {quoted}")
    }
}

fn derive_payload(op: Operation, description: &str) -> Option<String> {
    if op == Operation::MouseClick {
        return None;
    }
    let end = description.rfind('"')?;
    let start = description[..end].rfind('"')?;
    Some(description[start + 1..end].to_string())
}

/// The five-line block. Every line ends with a newline.
pub fn format_action(a: &Action) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "{}.\nDescription: {}\nAction: {}\nNode: {}\nTarget: {}\n",
        a.index,
        a.description,
        a.op.as_str(),
        a.node,
        a.target
    );
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    /// 1-based line in the input; 0 when the whole input is at fault.
    pub line: usize,
    pub message: String,
}

/// Parses the first five-line block in `text`.
///
/// Blank lines and surrounding whitespace are ignored. A missing index line
/// means index 1. Parsing stops at the next index line, so a model that keeps
/// generating further steps is tolerated.
pub fn parse_action(text: &str) -> Result<Action, ParseError> {
    let mut index = None;
    let mut description = None;
    let mut op = None;
    let mut node = None;
    let mut target = None;
    let mut seen_field = false;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(num) = line.strip_suffix('.').filter(|s| s.bytes().all(|b| b.is_ascii_digit()) && !s.is_empty()) {
            if index.is_some() || seen_field {
                break;
            }
            index = Some(num.parse::<u32>().map_err(|e| ParseError {
                line: line_no,
                message: format!("bad step index: {e}"),
            })?);
            continue;
        }
        let err = |message: String| ParseError { line: line_no, message };
        let (label, value) = match line.split_once(':') {
            Some((l, v)) => (l, v.trim()),
            None => continue,
        };
        let slot_taken = match label {
            "Description" => description.replace(value.to_string()).is_some(),
            "Action" => {
                let parsed = Operation::parse(value)
                    .ok_or_else(|| err(format!("unknown operation `{value}`")))?;
                op.replace(parsed).is_some()
            }
            "Node" => {
                let id = value
                    .parse::<u32>()
                    .map_err(|_| err(format!("node id `{value}` is not a non-negative integer")))?;
                node.replace(id).is_some()
            }
            "Target" => target.replace(value.to_string()).is_some(),
            _ => continue,
        };
        if slot_taken {
            // A second block without an index line; keep the first.
            break;
        }
        seen_field = true;
    }
    let op = op.ok_or(ParseError {
        line: 0,
        message: "missing `Action:` line".into(),
    })?;
    let node = node.ok_or(ParseError {
        line: 0,
        message: "missing `Node:` line".into(),
    })?;
    let description = description.unwrap_or_default();
    Ok(Action {
        index: index.unwrap_or(1),
        payload: derive_payload(op, &description),
        description,
        op,
        node,
        target: target.unwrap_or_default(),
    })
}

/// The next-step prompt: objective, URL, observation and the step history.
/// Ends right after the last history block, or after the guide header when the
/// history is empty, so the model continues with the next index.
pub fn build_prompt(objective: &str, url: &str, observation: &str, history: &[Action]) -> String {
    let mut out = format!(
        "Objective: {objective}\nURL: {url}\nObservation: {observation}\nStep-by-step guide:\n"
    );
    for a in history {
        out.push_str(&format_action(a));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn menu() -> Action {
        Action::new(
            1,
            r#"Click the "Menu" button to browse all food options"#,
            Operation::MouseClick,
            832,
            r#"<svg class="open-hamburger-icon" node="832" role="img">"#,
        )
    }

    const MENU_BLOCK: &str = "1.\nDescription: Click the \"Menu\" button to browse all food options\nAction: mouse_click_action\nNode: 832\nTarget: <svg class=\"open-hamburger-icon\" node=\"832\" role=\"img\">\n";

    #[test]
    fn five_line_block() {
        assert_eq!(format_action(&menu()), MENU_BLOCK);
        assert_eq!(parse_action(MENU_BLOCK).unwrap(), menu());
    }

    #[test]
    fn tolerant_parse() {
        let noisy = format!("\n\n  {}\n\n", MENU_BLOCK.replace('\n', "\n\n"));
        assert_eq!(parse_action(&noisy).unwrap(), menu());
        let no_index = MENU_BLOCK.split_once('\n').unwrap().1;
        assert_eq!(parse_action(no_index).unwrap(), menu());
        let two = format!("{MENU_BLOCK}2.\nDescription: x\nAction: mouse_click_action\nNode: 5\nTarget: <a>\n");
        assert_eq!(parse_action(&two).unwrap(), menu());
    }

    #[test]
    fn parse_errors() {
        let e = parse_action("garbage").unwrap_err();
        assert!(e.message.contains("Action"));
        let e = parse_action("Action: mouse_click_action\n").unwrap_err();
        assert!(e.message.contains("Node"));
        let e = parse_action("Action: hover\nNode: 3").unwrap_err();
        assert_eq!(e.line, 1);
        let e = parse_action("Action: mouse_click_action\nNode: -3").unwrap_err();
        assert_eq!(e.line, 2);
        // Labels are case-sensitive.
        assert!(parse_action("action: mouse_click_action\nnode: 3").is_err());
    }

    #[test]
    fn keyboard_templates() {
        let d = describe_step(Operation::KeyboardSequence, "Type the city in the search box", Some("new york"));
        assert_eq!(d, "Type the city in the search box \"new york\"");
        assert_eq!(describe_step(Operation::KeyboardSequence, d.as_str(), Some("new york")), d);
        assert_eq!(describe_step(Operation::KeyboardCombination, "", Some("ctrl+c")), "Press \"ctrl+c\"");
        assert_eq!(describe_step(Operation::MouseClick, " Click x ", None), "Click x");
        let a = Action::new(2, &d, Operation::KeyboardSequence, 7, "<input node=\"7\">");
        assert_eq!(a.payload.as_deref(), Some("new york"));
        assert_eq!(parse_action(&format_action(&a)).unwrap(), a);
    }

    #[test]
    fn empty_history_prompt() {
        assert_eq!(
            build_prompt("o", "u", "<div node=\"0\"></div>", &[]),
            "Objective: o\nURL: u\nObservation: <div node=\"0\"></div>\nStep-by-step guide:\n"
        );
    }
}
